"""Convolution kernels for tilted weight arrays.

Weights are convolved as plain coefficient sequences; the tilt factor
``m**k`` is multiplicative over independent sums, so the tilted weights of
a sum of independent variables are exactly the convolution of the tilted
weights.

Float-mode products switch between direct ``np.convolve`` (exact to
round-off, quadratic cost) and an FFT path.  A plain FFT of a heavy-headed
array deposits absolute round-off junk of order ``1e-16 * mass * len``
across the whole output; once the genuine tail falls below that floor,
tail truncation stops converging and supports explode.  The FFT path
therefore *bands* each input into a short head (holding all but ~1e-5 of
the mass) and a long tail, convolves head pieces directly, and uses the
FFT only on piece products involving a tail — so junk is always relative
to a tail norm, not to the total mass.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
from scipy.signal import fftconvolve

from .errors import NumericGuard, UsageError

__all__ = [
    "ConvStrategy",
    "convolve_weights",
    "m_fold",
    "convolve_exact",
    "m_fold_exact",
    "clamp_small_negatives",
    "DIRECT_SIZE_LIMIT",
    "HEAD_MIN",
    "HEAD_TAIL_MASS",
    "NEGATIVE_CLAMP_REL",
]

# products with both operands at or below this length go straight to np.convolve
DIRECT_SIZE_LIMIT = 4096
# banding: minimum head length, and the tilted-mass budget left in the tail
HEAD_MIN = 64
HEAD_TAIL_MASS = 1e-5
# pieces this small are convolved directly even inside the banded path
PIECE_DIRECT_LIMIT = 256
# negatives larger than this (relative to the output max) trip the guard
NEGATIVE_CLAMP_REL = 1e-13


class ConvStrategy:
    """Convolution strategy names accepted by the evolution engine."""

    DIRECT = "direct"
    TRANSFORM = "transform"
    AUTO = "auto"

    ALL = (DIRECT, TRANSFORM, AUTO)


def _piece_conv(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if min(len(x), len(y)) <= PIECE_DIRECT_LIMIT or len(x) + len(y) <= DIRECT_SIZE_LIMIT:
        return np.convolve(x, y)
    return fftconvolve(x, y)


def _split_banded(w: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Split into (head, tail) so the tail carries at most HEAD_TAIL_MASS."""
    suffix = np.cumsum(w[::-1])[::-1]
    cut = max(int(np.searchsorted(-suffix, -HEAD_TAIL_MASS)), HEAD_MIN)
    if cut >= len(w) - 1:
        return w, None
    return w[:cut], w[cut:]


def _banded_conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a_head, a_tail = _split_banded(a)
    b_head, b_tail = _split_banded(b)
    if a_tail is None and b_tail is None:
        # neither input has a light tail; junk relative to total mass is the
        # best any split could do, so transform the whole arrays
        return fftconvolve(a, b)
    out = np.zeros(len(a) + len(b) - 1)

    def accumulate(x, y, offset):
        if x is None or y is None or len(x) == 0 or len(y) == 0:
            return
        c = _piece_conv(x, y)
        out[offset : offset + len(c)] += c

    accumulate(a_head, b_head, 0)
    accumulate(a_head, b_tail, len(b_head))
    accumulate(a_tail, b_head, len(a_head))
    accumulate(a_tail, b_tail, len(a_head) + len(b_head))
    return out


def clamp_small_negatives(w: np.ndarray, generation: int | None = None) -> float:
    """Zero out round-off negatives in place; return the (positive) total clamped.

    Negatives beyond ``NEGATIVE_CLAMP_REL`` relative to the array maximum
    are not round-off and trip :class:`NumericGuard`.
    """
    neg = w < 0.0
    if not np.any(neg):
        return 0.0
    worst = -float(np.min(w))
    top = float(np.max(w))
    if worst > NEGATIVE_CLAMP_REL * max(top, 1e-300):
        raise NumericGuard(
            f"negative weight {-worst:.3e} exceeds round-off scale (max {top:.3e})",
            generation=generation,
        )
    total = -float(np.sum(w[neg]))
    w[neg] = 0.0
    return total


def convolve_weights(a: np.ndarray, b: np.ndarray, strategy: str = ConvStrategy.AUTO) -> np.ndarray:
    """Convolve two float weight arrays under the given strategy."""
    if strategy not in ConvStrategy.ALL:
        raise UsageError(f"unknown convolution strategy {strategy!r}")
    if strategy == ConvStrategy.DIRECT:
        return np.convolve(a, b)
    if strategy == ConvStrategy.AUTO and len(a) <= DIRECT_SIZE_LIMIT and len(b) <= DIRECT_SIZE_LIMIT:
        return np.convolve(a, b)
    return _banded_conv(a, b)


def m_fold(w: np.ndarray, m: int, strategy: str = ConvStrategy.AUTO,
           generation: int | None = None) -> np.ndarray:
    """m-fold self-convolution by binary decomposition of ``m``.

    Small negatives from transform round-off are clamped after every
    pairwise product so downstream banding sees nonnegative arrays.
    """
    if m < 1:
        raise UsageError("fold count must be >= 1")
    result: np.ndarray | None = None
    base = w
    remaining = m
    while remaining:
        if remaining & 1:
            if result is None:
                result = base if base is not w else base.copy()
            else:
                result = convolve_weights(result, base, strategy)
                clamp_small_negatives(result, generation)
        remaining >>= 1
        if remaining:
            base = convolve_weights(base, base, strategy)
            clamp_small_negatives(base, generation)
    assert result is not None
    return result


# --------------------------------------------------------------------------
# exact (rational) kernels
# --------------------------------------------------------------------------


def convolve_exact(a: tuple[Fraction, ...], b: tuple[Fraction, ...]) -> tuple[Fraction, ...]:
    """Schoolbook convolution over exact rationals."""
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            if bj != 0:
                out[i + j] += ai * bj
    return tuple(out)


def m_fold_exact(w: tuple[Fraction, ...], m: int) -> tuple[Fraction, ...]:
    """m-fold self-convolution over exact rationals."""
    if m < 1:
        raise UsageError("fold count must be >= 1")
    result: tuple[Fraction, ...] | None = None
    base = w
    remaining = m
    while remaining:
        if remaining & 1:
            result = base if result is None else convolve_exact(result, base)
        remaining >>= 1
        if remaining:
            base = convolve_exact(base, base)
    assert result is not None
    return result
