import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drlab.convolution import (
    DIRECT_SIZE_LIMIT,
    HEAD_MIN,
    ConvStrategy,
    clamp_small_negatives,
    convolve_exact,
    convolve_weights,
    m_fold,
    m_fold_exact,
)
from drlab.errors import NumericGuard

finite_weights = st.lists(
    st.floats(0.0, 10.0, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=40,
)


def _ref_conv(a, b):
    return np.convolve(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


class TestConvolveWeights:
    @given(finite_weights, finite_weights)
    def test_matches_direct_reference(self, a, b):
        got = convolve_weights(np.array(a), np.array(b), ConvStrategy.AUTO)
        ref = _ref_conv(a, b)
        np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)

    @given(finite_weights, finite_weights)
    def test_strategies_agree(self, a, b):
        direct = convolve_weights(np.array(a), np.array(b), ConvStrategy.DIRECT)
        transform = convolve_weights(np.array(a), np.array(b), ConvStrategy.TRANSFORM)
        scale = max(1.0, float(np.max(direct)))
        np.testing.assert_allclose(transform, direct, rtol=0, atol=1e-12 * scale)

    def test_identity_element(self):
        a = np.array([0.2, 0.5, 0.3])
        out = convolve_weights(a, np.array([1.0]), ConvStrategy.AUTO)
        np.testing.assert_allclose(out, a)

    def test_large_inputs_use_banded_path_accurately(self):
        # geometric decay over a support far beyond the direct-size limit:
        # the far tail is tiny, which is where a plain transform loses digits
        n = 3 * DIRECT_SIZE_LIMIT
        k = np.arange(n, dtype=np.float64)
        a = 0.5 ** k
        a /= a.sum()
        got = m_fold(a, 2, ConvStrategy.AUTO)
        # spot-check the head against the exact direct product
        head = np.convolve(a[: 4 * HEAD_MIN], a[: 4 * HEAD_MIN])[: 2 * HEAD_MIN]
        np.testing.assert_allclose(got[: 2 * HEAD_MIN], head, rtol=1e-13)
        assert abs(got.sum() - 1.0) < 1e-12
        assert np.all(got >= 0.0)


class TestMFold:
    @given(finite_weights, st.integers(2, 4))
    def test_matches_repeated_convolution(self, a, m):
        ref = np.asarray(a, dtype=np.float64)
        acc = ref
        for _ in range(m - 1):
            acc = np.convolve(acc, ref)
        got = m_fold(np.array(a), m, ConvStrategy.AUTO)
        scale = max(1.0, float(np.max(acc)))
        np.testing.assert_allclose(got, acc, rtol=0, atol=1e-10 * scale)

    def test_point_mass_power(self):
        out = m_fold(np.array([0.0, 1.0]), 3, ConvStrategy.DIRECT)
        np.testing.assert_allclose(out, [0.0, 0.0, 0.0, 1.0])


class TestClamp:
    def test_small_negatives_are_zeroed(self):
        w = np.array([1.0, -1e-16, 2.0])
        clamped = clamp_small_negatives(w)
        assert w[1] == 0.0
        assert clamped == pytest.approx(1e-16)

    def test_large_negative_trips_guard(self):
        w = np.array([1.0, -1e-3])
        with pytest.raises(NumericGuard):
            clamp_small_negatives(w, generation=7)

    def test_guard_reports_generation(self):
        w = np.array([1.0, -1.0])
        with pytest.raises(NumericGuard) as err:
            clamp_small_negatives(w, generation=7)
        assert err.value.generation == 7


class TestExact:
    def test_convolve_exact_small(self):
        a = (Fraction(1, 2), Fraction(1, 2))
        out = convolve_exact(a, a)
        assert out == (Fraction(1, 4), Fraction(1, 2), Fraction(1, 4))

    @given(
        st.lists(st.fractions(0, 3, max_denominator=20), min_size=1, max_size=6),
        st.integers(2, 3),
    )
    def test_m_fold_exact_matches_float(self, a, m):
        exact = m_fold_exact(tuple(a), m)
        floats = np.array([float(x) for x in a])
        acc = floats
        for _ in range(m - 1):
            acc = np.convolve(acc, floats)
        assert len(exact) == len(acc)
        for e, f in zip(exact, acc):
            assert math.isclose(float(e), f, rel_tol=1e-9, abs_tol=1e-9)
