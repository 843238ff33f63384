"""Probability laws on the nonnegative integers in tilted representation.

A law with raw probabilities ``p_k = P(X = k)`` is stored through its
*tilted weights* ``w_k = p_k * m**k``, where ``m >= 2`` is the branching
factor of the recursion the law will be evolved under.  The tilted view is
the numerically natural one: the conserved linear functional, the
criticality gap and the generating-function derivatives at the branching
base are all plain (positive-term) sums of ``w_k``.

Two numeric modes share one container.  Float mode keeps ``weights`` as a
C-contiguous float64 array; exact mode keeps a tuple of
:class:`fractions.Fraction` and supports the same functionals with exact
rational arithmetic (small supports only — see :mod:`drlab.evolve` for the
caps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import fsum
from typing import Sequence, Union

import numpy as np

from .errors import (
    BadTiltPoint,
    InfeasibleFamily,
    NegativeMass,
    NonNormalized,
    UsageError,
)

__all__ = [
    "ModelParams",
    "MassLedger",
    "TiltedLaw",
    "StableFamilyParams",
    "TruncationMode",
    "make_law",
    "point_mass",
    "two_point_critical",
    "stable_critical_init",
    "truncate_initial",
    "truncate_at",
    "tilted_mass",
    "tilted_mean",
    "raw_mass",
    "mean",
    "p_zero",
    "eta",
    "pgf_at",
    "factorial_derivative",
    "derivatives_up_to",
    "second_moment_at",
    "moment_tilted",
    "c25_constant",
    "neg_powers",
]

RAW_SUM_TOL = 1e-12

ExactWeights = tuple[Fraction, ...]
Weights = Union[np.ndarray, ExactWeights]


@dataclass(frozen=True)
class ModelParams:
    """Branching factor of the recursion.

    ``m`` children are summed and one unit subtracted (floored at zero) per
    generation; it is also the base of the exponential tilt.
    """

    m: int

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m < 2:
            raise UsageError(f"branching factor must be an integer >= 2, got {self.m!r}")


@dataclass(frozen=True)
class MassLedger:
    """Cumulative record of mass removed by tail truncation.

    ``lost_raw`` is raw probability re-homed into the atom at zero (the
    truncation step replaces the discarded tail by mass at the origin, so
    total raw mass is preserved; this field tracks how much was moved).
    ``lost_tilted`` is the tilted mass of the discarded tails, and
    ``steps_truncated`` counts evolution steps in which any trimming
    happened.
    """

    lost_raw: float = 0.0
    lost_tilted: float = 0.0
    steps_truncated: int = 0

    def charge(self, raw: float = 0.0, tilted: float = 0.0, *, count_step: bool = False) -> "MassLedger":
        if raw == 0.0 and tilted == 0.0 and not count_step:
            return self
        return MassLedger(
            lost_raw=self.lost_raw + raw,
            lost_tilted=self.lost_tilted + tilted,
            steps_truncated=self.steps_truncated + (1 if count_step else 0),
        )

    def merge(self, other: "MassLedger") -> "MassLedger":
        return MassLedger(
            lost_raw=self.lost_raw + other.lost_raw,
            lost_tilted=self.lost_tilted + other.lost_tilted,
            steps_truncated=self.steps_truncated + other.steps_truncated,
        )


@dataclass(frozen=True)
class TiltedLaw:
    """A finitely supported law in tilted representation.

    ``weights[k]`` is ``P(X = k) * m**k``.  The array is dense from 0 to
    ``support_max``; trailing zeros are trimmed by the constructors.
    """

    weights: Weights
    ledger: MassLedger = field(default_factory=MassLedger)

    @property
    def support_max(self) -> int:
        return len(self.weights) - 1

    @property
    def is_exact(self) -> bool:
        return isinstance(self.weights, tuple)

    def with_ledger(self, ledger: MassLedger) -> "TiltedLaw":
        return replace(self, ledger=ledger)


@dataclass(frozen=True)
class StableFamilyParams:
    """Resolved parameters of the critical polynomial-tail family.

    ``c`` is the normalizing constant of the tilted tail ``w_k = c*k**-alpha``
    (k = 1..K) and ``p0`` the retuned atom at zero that puts the family
    exactly on the critical manifold.
    """

    m: int
    alpha: float
    K: int
    c: float
    p0: float


class TruncationMode:
    """Names for the two initial-truncation regimes."""

    STABLE = "stable"
    FINITE_VARIANCE = "finite_variance"

    ALL = (STABLE, FINITE_VARIANCE)


# --------------------------------------------------------------------------
# powers cache
# --------------------------------------------------------------------------

_NEG_POWERS: dict[int, np.ndarray] = {}


def neg_powers(m: int, n: int) -> np.ndarray:
    """Return ``m**-k`` for ``k = 0..n-1`` (cached, grow-on-demand)."""
    cur = _NEG_POWERS.get(m)
    if cur is None or len(cur) < n:
        size = max(n, 1024, 0 if cur is None else 2 * len(cur))
        cur = float(m) ** (-np.arange(size, dtype=np.float64))
        _NEG_POWERS[m] = cur
    return cur[:n]


# --------------------------------------------------------------------------
# constructors
# --------------------------------------------------------------------------


def _trim_trailing_zeros(w: np.ndarray) -> np.ndarray:
    nz = np.nonzero(w)[0]
    if len(nz) == 0:
        return w[:1]
    return w[: nz[-1] + 1]


def make_law(raw_probs: Sequence, params: ModelParams, *, exact: bool = False) -> TiltedLaw:
    """Build a law from raw probabilities ``P(X = k)``, k = 0, 1, ...

    Raw probabilities must be nonnegative and sum to one (within 1e-12 in
    float mode, exactly in exact mode).
    """
    m = params.m
    if exact:
        probs = tuple(Fraction(p) for p in raw_probs)
        if any(p < 0 for p in probs):
            raise NegativeMass("raw probabilities must be nonnegative")
        total = sum(probs, Fraction(0))
        if total != 1:
            raise NonNormalized(f"raw probabilities sum to {total}, not 1")
        weights = tuple(p * Fraction(m) ** k for k, p in enumerate(probs))
        while len(weights) > 1 and weights[-1] == 0:
            weights = weights[:-1]
        return TiltedLaw(weights)

    probs_arr = np.asarray(raw_probs, dtype=np.float64)
    if probs_arr.ndim != 1 or len(probs_arr) == 0:
        raise UsageError("raw probabilities must be a non-empty 1-d sequence")
    if np.any(probs_arr < 0):
        raise NegativeMass("raw probabilities must be nonnegative")
    total = fsum(probs_arr.tolist())
    if abs(total - 1.0) > RAW_SUM_TOL:
        raise NonNormalized(f"raw probabilities sum to {total!r}, not 1")
    k = np.arange(len(probs_arr), dtype=np.float64)
    weights = probs_arr * float(m) ** k
    return TiltedLaw(_trim_trailing_zeros(weights))


def point_mass(k: int, params: ModelParams, *, exact: bool = False) -> TiltedLaw:
    """Law of the constant ``k``: a single tilted atom ``w_k = m**k``."""
    if k < 0:
        raise UsageError("point mass position must be >= 0")
    if exact:
        weights = tuple(Fraction(0) for _ in range(k)) + (Fraction(params.m) ** k,)
        return TiltedLaw(weights)
    w = np.zeros(k + 1)
    w[k] = float(params.m) ** k
    return TiltedLaw(w)


def two_point_critical(a: int, params: ModelParams, *, exact: bool = False) -> TiltedLaw:
    """Two-atom law on {0, a} tuned exactly onto the critical manifold.

    The atom ``p = P(X = a)`` solves ``(m-1)*a*p*m**a = 1 - p + p*m**a``
    (criticality gap zero), giving ``p = 1 / (1 + m**a*((m-1)*a - 1))``.
    Requires ``(m-1)*a > 1`` so that ``p`` is a probability.
    """
    m = params.m
    if a < 1 or (m - 1) * a <= 1:
        raise InfeasibleFamily(
            f"two-point critical law needs (m-1)*a > 1; got a={a}, m={m}"
        )
    p = Fraction(1, 1 + Fraction(m) ** a * ((m - 1) * a - 1))
    w0 = 1 - p
    wa = p * Fraction(m) ** a
    if exact:
        weights = (w0,) + tuple(Fraction(0) for _ in range(a - 1)) + (wa,)
        return TiltedLaw(weights)
    w = np.zeros(a + 1)
    w[0] = float(w0)
    w[a] = float(wa)
    return TiltedLaw(w)


def stable_critical_init(m: int, alpha: float, K: int) -> tuple[TiltedLaw, StableFamilyParams]:
    """Critical polynomial-tail family: ``w_k = c*k**-alpha`` for k = 1..K.

    The constant ``c`` and the atom ``p0`` at zero are solved from the two
    linear constraints (unit raw mass, zero criticality gap):

        c = 1 / ((m-1)*B - A + S0),   p0 = 1 - c*S0,

    with ``B = sum k**(1-alpha)``, ``A = sum k**-alpha``,
    ``S0 = sum m**-k * k**-alpha`` over k = 1..K.  Feasible for every
    ``K >= 2`` and ``alpha`` in (2, 4) since ``(m-1)*B > A`` there; the
    feasibility check is defensive.
    """
    if m < 2:
        raise UsageError(f"branching factor must be >= 2, got {m}")
    if not (2.0 < alpha < 4.0):
        raise InfeasibleFamily(f"tail exponent must lie in (2, 4), got {alpha}")
    if K < 2:
        raise InfeasibleFamily(f"support cut K must be >= 2, got {K}")
    ks = np.arange(1, K + 1, dtype=np.float64)
    B = fsum((ks ** (1.0 - alpha)).tolist())
    A = fsum((ks ** (-alpha)).tolist())
    S0 = fsum((neg_powers(m, K + 1)[1:] * ks ** (-alpha)).tolist())
    denom = (m - 1) * B - A + S0
    if denom <= 0.0:
        raise InfeasibleFamily("normalizing constant is not positive")
    c = 1.0 / denom
    p0 = 1.0 - c * S0
    if not (0.0 < p0 < 1.0):
        raise InfeasibleFamily(f"retuned atom at zero is {p0!r}, outside (0, 1)")
    weights = np.empty(K + 1)
    weights[0] = p0
    weights[1:] = c * ks ** (-alpha)
    law = TiltedLaw(weights)
    return law, StableFamilyParams(m=m, alpha=alpha, K=K, c=c, p0=p0)


def truncate_initial(
    law: TiltedLaw,
    M: int,
    mode: str,
    params: ModelParams,
    *,
    alpha: float | None = None,
) -> tuple[TiltedLaw, float]:
    """Truncate an initial law at a level set by ``mode`` and return (law, theta).

    ``stable`` mode builds ``Z = Y * 1{Y <= M}``: raw mass above ``M`` moves
    to the atom at zero, and ``theta(M) = c30 * M**(4-alpha)`` where
    ``c30 = max(c28 * 2**(4-alpha) / (4-alpha), 1)`` and
    ``c28 = max_k w_k * k**alpha`` is measured on the law's support.
    ``alpha`` is required in this mode.

    ``finite_variance`` mode cuts at ``M * zeta(M)`` where
    ``zeta(M) = -log E(Y**3 * m**Y; Y > M)`` (no cut if that expectation is
    zero), and ``theta = max(E(Y**3 * m**Y), 1)``.
    """
    if M < 1:
        raise UsageError(f"truncation level must be >= 1, got {M}")
    if mode not in TruncationMode.ALL:
        raise UsageError(f"unknown truncation mode {mode!r}")
    m = params.m

    if mode == TruncationMode.STABLE:
        if alpha is None:
            raise UsageError("stable truncation mode requires the tail exponent alpha")
        theta = _theta_stable(law, M, alpha)
        return truncate_at(law, M, m), theta

    # finite-variance mode
    w = _as_float_weights(law)
    k = np.arange(len(w), dtype=np.float64)
    third = fsum((k ** 3 * w).tolist())
    theta = max(third, 1.0)
    tail_third = fsum((k[M + 1 :] ** 3 * w[M + 1 :]).tolist()) if law.support_max > M else 0.0
    if tail_third <= 0.0:
        return law, theta
    zeta = -math.log(tail_third)
    if zeta <= 0.0:
        # heavy tail at this M: the cut level M*zeta is not positive, so the
        # constructed variable collapses to the point mass at zero
        return point_mass(0, params), theta
    cut = int(M * zeta)
    return truncate_at(law, cut, m), theta


def _theta_stable(law: TiltedLaw, M: int, alpha: float) -> float:
    w = _as_float_weights(law)
    k = np.arange(len(w), dtype=np.float64)
    c28 = float(np.max(w[1:] * k[1:] ** alpha)) if len(w) > 1 else 0.0
    c30 = max(c28 * 2.0 ** (4.0 - alpha) / (4.0 - alpha), 1.0)
    return c30 * float(M) ** (4.0 - alpha)


def truncate_at(law: TiltedLaw, cut: int, m: int) -> TiltedLaw:
    """Replace the part of the law above ``cut`` by mass at the origin."""
    if law.support_max <= cut:
        return law
    if law.is_exact:
        weights: ExactWeights = law.weights  # type: ignore[assignment]
        moved = sum(
            (wk * Fraction(m) ** -k for k, wk in enumerate(weights) if k > cut),
            Fraction(0),
        )
        head = (weights[0] + moved,) + weights[1 : cut + 1]
        while len(head) > 1 and head[-1] == 0:
            head = head[:-1]
        return TiltedLaw(head, law.ledger)
    w = law.weights
    pw = neg_powers(m, len(w))
    moved = fsum((w[cut + 1 :] * pw[cut + 1 :]).tolist())
    head = w[: cut + 1].copy()
    head[0] += moved
    return TiltedLaw(_trim_trailing_zeros(head), law.ledger)


# --------------------------------------------------------------------------
# functionals
# --------------------------------------------------------------------------


def _as_float_weights(law: TiltedLaw) -> np.ndarray:
    if law.is_exact:
        return np.array([float(x) for x in law.weights], dtype=np.float64)
    return law.weights  # type: ignore[return-value]


def tilted_mass(law: TiltedLaw):
    """``E(m**X)`` — the sum of tilted weights (the generating function at m)."""
    if law.is_exact:
        return sum(law.weights, Fraction(0))
    return fsum(law.weights.tolist())


def tilted_mean(law: TiltedLaw):
    """``E(X * m**X)``."""
    if law.is_exact:
        return sum((k * wk for k, wk in enumerate(law.weights)), Fraction(0))
    w = law.weights
    k = np.arange(len(w), dtype=np.float64)
    return fsum((k * w).tolist())


def moment_tilted(law: TiltedLaw, order: int):
    """``E(X**order * m**X)``."""
    if law.is_exact:
        return sum((Fraction(k) ** order * wk for k, wk in enumerate(law.weights)), Fraction(0))
    w = law.weights
    k = np.arange(len(w), dtype=np.float64)
    return fsum((k ** order * w).tolist())


def raw_mass(law: TiltedLaw, params: ModelParams):
    """Total raw probability ``sum_k P(X = k)`` (should be 1 for a law)."""
    m = params.m
    if law.is_exact:
        return sum(
            (wk * Fraction(m) ** -k for k, wk in enumerate(law.weights)), Fraction(0)
        )
    w = law.weights
    return fsum((w * neg_powers(m, len(w))).tolist())


def mean(law: TiltedLaw, params: ModelParams):
    """``E(X)`` in raw (untilted) terms."""
    m = params.m
    if law.is_exact:
        return sum(
            (k * wk * Fraction(m) ** -k for k, wk in enumerate(law.weights)), Fraction(0)
        )
    w = law.weights
    k = np.arange(len(w), dtype=np.float64)
    return fsum((k * w * neg_powers(m, len(w))).tolist())


def p_zero(law: TiltedLaw):
    """``P(X = 0)`` (equals the tilted weight at zero)."""
    return law.weights[0]


def eta(law: TiltedLaw, params: ModelParams):
    """Criticality gap ``(m-1)*E(X*m**X) - E(m**X)``.

    Negative for subcritical laws, zero on the critical manifold, positive
    for supercritical laws.
    """
    m = params.m
    if law.is_exact:
        return (m - 1) * tilted_mean(law) - tilted_mass(law)
    w = law.weights
    k = np.arange(len(w), dtype=np.float64)
    return fsum(((float(m - 1) * k - 1.0) * w).tolist())


def pgf_at(law: TiltedLaw, u, params: ModelParams):
    """Generating function ``E(u**X) = sum_k w_k * (u/m)**k``."""
    m = params.m
    if law.is_exact:
        x = Fraction(u) / m
        return sum((wk * x ** k for k, wk in enumerate(law.weights)), Fraction(0))
    w = law.weights
    x = float(u) / m
    return fsum((w * x ** np.arange(len(w), dtype=np.float64)).tolist())


def factorial_derivative(law: TiltedLaw, k: int, params: ModelParams):
    """k-th derivative of the generating function at the branching base.

    ``H^(k)(m) = m**-k * sum_j j*(j-1)*...*(j-k+1) * w_j``.
    """
    if k < 0:
        raise UsageError("derivative order must be >= 0")
    m = params.m
    if law.is_exact:
        total = Fraction(0)
        for j, wj in enumerate(law.weights):
            ff = Fraction(1)
            for i in range(k):
                ff *= j - i
            if ff > 0:
                total += ff * wj
        return total * Fraction(m) ** -k
    w = law.weights
    j = np.arange(len(w), dtype=np.float64)
    cur = np.array(w, dtype=np.float64, copy=True)
    for i in range(k):
        cur *= j - i
        np.maximum(cur, 0.0, out=cur)
    return fsum(cur.tolist()) / float(m) ** k


def derivatives_up_to(law: TiltedLaw, k_max: int, params: ModelParams) -> tuple:
    """All derivatives ``H^(0)(m) .. H^(k_max)(m)`` in one cumulative sweep."""
    if k_max < 0:
        raise UsageError("derivative order must be >= 0")
    m = params.m
    if law.is_exact:
        return tuple(factorial_derivative(law, k, params) for k in range(k_max + 1))
    w = law.weights
    j = np.arange(len(w), dtype=np.float64)
    cur = np.array(w, dtype=np.float64, copy=True)
    out = [fsum(cur.tolist())]
    mk = 1.0
    for i in range(k_max):
        cur *= j - i
        np.maximum(cur, 0.0, out=cur)
        mk *= m
        out.append(float(np.sum(cur)) / mk)
    return tuple(out)


def second_moment_at(law: TiltedLaw, v: float, params: ModelParams):
    """``E(X**2 * v**X) = sum_k k**2 * w_k * (v/m)**k``."""
    m = params.m
    if law.is_exact:
        x = Fraction(v) / m
        return sum(
            (Fraction(k) ** 2 * wk * x ** k for k, wk in enumerate(law.weights)),
            Fraction(0),
        )
    w = law.weights
    k = np.arange(len(w), dtype=np.float64)
    x = float(v) / m
    return fsum((k ** 2 * w * x ** k).tolist())


def c25_constant(s: float, params: ModelParams) -> float:
    """Moment-growth constant for a law with an exponential envelope at ``s``.

    Equals ``max(1, sup_{x>0} x * (s/m)**(-x/e))``; the supremum has the
    closed form ``1 / log(s/m)``.  Requires ``s > m``.
    """
    m = params.m
    if s <= m:
        raise BadTiltPoint(f"envelope base must exceed the branching factor; got s={s}, m={m}")
    return max(1.0, 1.0 / math.log(s / m))
