import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drlab.errors import NumericGuard, SupportOverflow, UsageError
from drlab.evolve import (
    EXACT_N_CAP,
    EvolveConfig,
    convolve,
    dr_step,
    evolve,
    free_energy_upper,
    m_fold_sum,
    product_pi,
    render_plotdata,
    render_trace_csv,
    verify_identity_26,
)
from drlab.laws import (
    ModelParams,
    eta,
    make_law,
    mean,
    p_zero,
    point_mass,
    raw_mass,
    tilted_mass,
    tilted_mean,
    two_point_critical,
)

M2 = ModelParams(2)
M3 = ModelParams(3)
CFG = EvolveConfig(n_max=8, k_derivatives=3)


def small_raw_laws():
    weights = st.lists(st.integers(0, 40), min_size=1, max_size=6).filter(
        lambda ws: sum(ws) > 0
    )
    return weights.map(lambda ws: [w / sum(ws) for w in ws])


class TestDrStep:
    def test_exact_hand_fixture(self):
        # one step on raw {0: 4/5, 2: 1/5} must give {0: 16/25, 1: 8/25, 3: 1/25}
        law = make_law([Fraction(4, 5), Fraction(0), Fraction(1, 5)], M2, exact=True)
        out = dr_step(law, M2, CFG)
        assert out.weights == (
            Fraction(16, 25),
            Fraction(16, 25),
            Fraction(0),
            Fraction(8, 25),
        )
        assert raw_mass(out, M2) == 1

    def test_float_matches_exact_fixture(self):
        law = make_law([0.8, 0.0, 0.2], M2)
        out = dr_step(law, M2, CFG)
        expected = [16 / 25, 16 / 25, 0.0, 8 / 25]
        np.testing.assert_allclose(out.weights, expected, rtol=0, atol=1e-14)

    def test_point_zero_is_absorbing(self):
        out = dr_step(point_mass(0, M2), M2, CFG)
        np.testing.assert_allclose(out.weights, [1.0])

    def test_point_one_is_fixed_for_m2(self):
        out = dr_step(point_mass(1, M2, exact=True), M2, CFG)
        assert out.weights == (Fraction(0), Fraction(2))

    def test_conserves_raw_mass(self):
        law = make_law([0.7, 0.1, 0.1, 0.1], M3)
        out = dr_step(law, M3, CFG)
        assert raw_mass(out, M3) == pytest.approx(1.0, abs=1e-13)

    @given(small_raw_laws(), st.integers(2, 3))
    def test_conserved_functional_scales_by_mass(self, probs, m):
        # the linear functional mass - (m-1)*tilted_mean picks up a factor
        # mass**(m-1) per step
        params = ModelParams(m)
        law = make_law(probs, params)
        config = EvolveConfig(n_max=1, tail_epsilon=0.0, k_derivatives=0)
        out = dr_step(law, params, config)
        lhs_in = tilted_mass(law) - (m - 1) * tilted_mean(law)
        lhs_out = tilted_mass(out) - (m - 1) * tilted_mean(out)
        expected = lhs_in * tilted_mass(law) ** (m - 1)
        assert math.isclose(lhs_out, expected, rel_tol=1e-11, abs_tol=1e-11)

    def test_support_cap_trips_guard_with_generation(self):
        law = two_point_critical(2, M2)
        config = EvolveConfig(n_max=30, support_cap=8)
        with pytest.raises(SupportOverflow) as err:
            evolve(law, M2, config)
        assert err.value.generation is not None
        assert "support" in str(err.value)

    def test_truncation_rehomes_raw_mass(self):
        # aggressive truncation still conserves raw normalization
        law = two_point_critical(3, M2)
        config = EvolveConfig(n_max=6, tail_epsilon=1e-3, k_derivatives=0)
        trace = evolve(law, M2, config, initial_descriptor="x")
        final = trace.records[-1]
        assert final.lost_raw > 0.0
        # lost_raw tracks removed mass, but the law itself stays normalized
        assert final.tilted_mass > 0.0


class TestConvolveLaws:
    def test_matches_mfold(self):
        law = make_law([0.5, 0.3, 0.2], M2)
        via_pair = convolve(law, law, M2)
        via_fold = m_fold_sum(law, M2)
        np.testing.assert_allclose(via_pair.weights, via_fold.weights, rtol=1e-14)

    def test_sum_support_is_additive(self):
        a = point_mass(2, M2)
        b = point_mass(3, M2)
        out = convolve(a, b, M2)
        assert out.support_max == 5

    def test_exact_mixing_rejected(self):
        a = point_mass(1, M2, exact=True)
        b = point_mass(1, M2)
        with pytest.raises(UsageError):
            convolve(a, b, M2)


class TestEvolve:
    def test_record_shape_and_log_pi(self):
        law = make_law([0.9, 0.0, 0.1], M2)
        trace = evolve(law, M2, CFG, initial_descriptor="sub")
        assert len(trace.records) == CFG.n_max + 1
        for a, b in zip(trace.records, trace.records[1:]):
            assert b.log_pi == pytest.approx(
                a.log_pi + (M2.m - 1) * math.log(a.tilted_mass), abs=1e-12
            )

    def test_identity_against_initial_functional(self):
        law = make_law([0.9, 0.0, 0.1], M2)
        trace = evolve(law, M2, CFG)
        lhs, rhs, rel = verify_identity_26(trace, 1)
        assert lhs == pytest.approx(13 / 20, abs=1e-15)
        assert rhs == pytest.approx(13 / 20, abs=1e-15)
        assert rel <= 1e-12
        for n in range(CFG.n_max + 1):
            assert verify_identity_26(trace, n)[2] <= 1e-11

    def test_product_pi_consistency(self):
        law = make_law([0.9, 0.0, 0.1], M2)
        trace = evolve(law, M2, CFG)
        log4, lin4 = product_pi(trace, 4)
        assert lin4 == pytest.approx(math.exp(log4), rel=1e-14)
        masses = [trace.record(i).tilted_mass for i in range(4)]
        assert lin4 == pytest.approx(math.prod(masses), rel=1e-12)

    def test_free_energy_monotone_non_increasing(self):
        for law, params in [
            (make_law([0.9, 0.0, 0.1], M2), M2),
            (two_point_critical(2, M2), M2),
            (make_law([0.98, 0.0, 0.02], M3), M3),
        ]:
            trace = evolve(law, params, CFG)
            fe = [free_energy_upper(trace, n) for n in range(CFG.n_max + 1)]
            assert fe[0] == pytest.approx(mean(law, params), rel=1e-12)
            for a, b in zip(fe, fe[1:]):
                assert b <= a * (1.0 + 1e-12) + 1e-300

    def test_mean_contraction(self):
        law = two_point_critical(2, M2)
        trace = evolve(law, M2, CFG)
        for a, b in zip(trace.records, trace.records[1:]):
            assert b.mean <= M2.m * a.mean * (1.0 + 1e-12)

    def test_critical_run_stays_critical(self):
        law = two_point_critical(2, M2)
        config = EvolveConfig(n_max=20, tail_epsilon=1e-16, k_derivatives=1)
        trace = evolve(law, M2, config)
        assert max(abs(r.eta_n) for r in trace.records) <= 1e-11

    def test_exact_evolution_matches_float(self):
        exact_law = two_point_critical(2, M2, exact=True)
        float_law = two_point_critical(2, M2)
        config = EvolveConfig(n_max=5, tail_epsilon=0.0, k_derivatives=2)
        te = evolve(exact_law, M2, config)
        tf = evolve(float_law, M2, config)
        for re_, rf in zip(te.records, tf.records):
            assert rf.tilted_mass == pytest.approx(re_.tilted_mass, rel=1e-13)
            assert rf.p_zero == pytest.approx(re_.p_zero, rel=1e-13)
            assert rf.mean == pytest.approx(re_.mean, rel=1e-12, abs=1e-15)

    def test_exact_mode_caps(self):
        law = two_point_critical(2, M2, exact=True)
        with pytest.raises(UsageError):
            evolve(law, M2, EvolveConfig(n_max=EXACT_N_CAP + 1))

    def test_supercritical_growth_is_tracked(self):
        law = make_law([0.7, 0.0, 0.3], M2)
        config = EvolveConfig(n_max=10, tail_epsilon=1e-18, k_derivatives=1)
        trace = evolve(law, M2, config)
        etas = [r.eta_n for r in trace.records]
        assert all(e > 0 for e in etas)
        assert etas[-1] > etas[0]
        for n in range(11):
            assert verify_identity_26(trace, n)[2] <= 1e-10

    def test_config_validation(self):
        with pytest.raises(UsageError):
            EvolveConfig(n_max=-1)
        with pytest.raises(UsageError):
            EvolveConfig(n_max=1, tail_epsilon=-1e-3)
        with pytest.raises(UsageError):
            EvolveConfig(n_max=1, tail_epsilon=0.5)
        with pytest.raises(UsageError):
            EvolveConfig(n_max=1, conv_strategy="nonsense")
        with pytest.raises(UsageError):
            EvolveConfig(n_max=1, k_derivatives=-2)

    def test_record_laws_keeps_every_generation(self):
        law = two_point_critical(2, M2)
        config = EvolveConfig(n_max=4, k_derivatives=1, record_laws=True)
        trace = evolve(law, M2, config)
        assert trace.laws is not None and len(trace.laws) == 5
        assert p_zero(trace.laws[0]) == pytest.approx(0.8, abs=1e-15)

    def test_record_accessor_bounds(self):
        law = point_mass(0, M2)
        trace = evolve(law, M2, EvolveConfig(n_max=2, k_derivatives=0))
        with pytest.raises(UsageError):
            trace.record(3)


class TestRenderers:
    def test_trace_csv_layout(self):
        law = two_point_critical(2, M2)
        trace = evolve(law, M2, EvolveConfig(n_max=3, k_derivatives=2))
        text = render_trace_csv(trace)
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        assert header == [
            "n",
            "tilted_mass",
            "tilted_mean",
            "eta",
            "mean",
            "p_zero",
            "log_pi",
            "lhs26",
            "lost_raw",
            "support_size",
            "H1",
            "H2",
        ]
        assert len(lines) == 5
        row0 = lines[1].split(",")
        assert int(row0[0]) == 0
        assert float(row0[1]) == pytest.approx(1.6)
        # values are written with round-trip precision
        assert float(row0[5]) == 0.8

    def test_trace_csv_without_derivatives(self):
        law = point_mass(0, M2)
        trace = evolve(law, M2, EvolveConfig(n_max=1, k_derivatives=0))
        lines = render_trace_csv(trace).strip().splitlines()
        assert lines[0].endswith("support_size")

    def test_plotdata_two_columns(self):
        law = make_law([0.9, 0.0, 0.1], M2)
        trace = evolve(law, M2, EvolveConfig(n_max=4, k_derivatives=0))
        rows = render_plotdata(trace).strip().splitlines()
        assert len(rows) == 4  # n >= 1 only
        first = rows[0].split()
        assert float(first[0]) == 0.0  # log 1
        assert float(first[1]) == pytest.approx(math.log(1.3), abs=1e-15)


class TestGuards:
    def test_numeric_guard_message_carries_generation(self):
        exc = NumericGuard("bad", generation=12)
        assert "12" in str(exc)

    def test_eta_sign_convention(self):
        assert eta(make_law([0.9, 0.0, 0.1], M2), M2) == pytest.approx(-0.5)
        assert eta(make_law([0.7, 0.0, 0.3], M2), M2) == pytest.approx(0.5)
