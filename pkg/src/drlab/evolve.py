"""One-generation step and full evolution of laws under the recursion.

A generation replaces ``X`` by ``(X_1 + ... + X_m - 1)^+`` with the ``X_i``
independent copies of ``X``.  On tilted weights the step is: m-fold
self-convolution, then a shift-and-fold at zero —

    w_out[0] = w_S[0] + w_S[1]/m,    w_out[k] = w_S[k+1]/m   (k >= 1),

which is the pmf form of the generating-function recursion; its value at
the branching base, ``G_out(m) = G(m)**m/m + (1-1/m)*G(0)**m``, is checked
after every step.

Tail truncation and mass accounting.  Truncation removes the largest
suffix whose *tilted* mass is at most ``tail_epsilon`` and re-homes the
removed *raw* mass into the atom at zero, so the evolved object stays a
probability law (raw mass exactly 1).  Raw mass is an exponentially
unstable quantity under the step (it maps like ``r -> r**m``), so instead
of trusting float round-off the engine *pins* the atom: after truncation,
``w_0 := 1 - sum_{k>=1} w_k m^{-k}``.  The pin is exact bookkeeping, and a
guard verifies it only ever moves ``w_0`` by round-off-scale amounts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import fsum
from typing import Optional

import numpy as np

from .convolution import (
    ConvStrategy,
    clamp_small_negatives,
    convolve_weights,
    m_fold,
    m_fold_exact,
    convolve_exact,
)
from .errors import NumericGuard, SupportOverflow, UsageError
from .laws import (
    MassLedger,
    ModelParams,
    TiltedLaw,
    derivatives_up_to,
    neg_powers,
    tilted_mean as _tilted_mean,
)

__all__ = [
    "EvolveConfig",
    "StepRecord",
    "EvolutionTrace",
    "convolve",
    "m_fold_sum",
    "dr_step",
    "evolve",
    "product_pi",
    "verify_identity_26",
    "free_energy_upper",
    "render_trace_csv",
    "render_plotdata",
    "EXACT_SUPPORT_CAP",
    "EXACT_N_CAP",
]

# exact-rational mode is for pinning small fixtures, not production runs
EXACT_SUPPORT_CAP = 64
EXACT_N_CAP = 8

# relative tolerance of the per-step generating-function post-check
STEP_CHECK_REL = 1e-10
# scale beyond which the post-check compares logarithms instead of values
LOG_COMPARE_ABOVE = 1e100
# the pin may move w_0 by at most this, relative to max(1, tilted mass)
PIN_GUARD_REL = 1e-12


@dataclass(frozen=True)
class EvolveConfig:
    """Knobs of the evolution engine.

    ``record_laws`` additionally snapshots the law at every generation so
    off-base functionals (e.g. second moments at a shifted point) can be
    evaluated afterwards; leave off for long runs.
    """

    n_max: int
    tail_epsilon: float = 1e-14
    support_cap: int = 5_000_000
    conv_strategy: str = ConvStrategy.AUTO
    k_derivatives: int = 8
    record_laws: bool = False

    def __post_init__(self):
        if self.n_max < 0:
            raise UsageError("n_max must be >= 0")
        if not 0.0 <= self.tail_epsilon < 0.1:
            raise UsageError("tail_epsilon must lie in [0, 0.1)")
        if self.support_cap < 2:
            raise UsageError("support_cap must be >= 2")
        if self.conv_strategy not in ConvStrategy.ALL:
            raise UsageError(f"unknown convolution strategy {self.conv_strategy!r}")
        if self.k_derivatives < 0:
            raise UsageError("k_derivatives must be >= 0")


@dataclass(frozen=True)
class StepRecord:
    """Observables of one generation."""

    n: int
    tilted_mass: float
    tilted_mean: float
    eta_n: float
    mean: float
    p_zero: float
    log_pi: float
    lhs26: float
    lost_raw: float
    support_size: int
    derivs: tuple[float, ...]


@dataclass(frozen=True)
class EvolutionTrace:
    """Evolution result: one record per generation, 0 through n_max."""

    params: ModelParams
    config: EvolveConfig
    initial_descriptor: str
    records: tuple[StepRecord, ...]
    laws: Optional[tuple[TiltedLaw, ...]] = None

    @property
    def n_max(self) -> int:
        return len(self.records) - 1

    def record(self, n: int) -> StepRecord:
        if not (0 <= n <= self.n_max):
            raise UsageError(f"generation {n} outside recorded range 0..{self.n_max}")
        return self.records[n]


# --------------------------------------------------------------------------
# law-level convolution
# --------------------------------------------------------------------------


def convolve(a: TiltedLaw, b: TiltedLaw, params: ModelParams,
             config: EvolveConfig | None = None) -> TiltedLaw:
    """Law of the sum of independent variables with laws ``a`` and ``b``."""
    if a.is_exact != b.is_exact:
        raise UsageError("cannot convolve exact and float laws")
    cap = config.support_cap if config is not None else None
    if cap is not None and a.support_max + b.support_max + 1 > cap:
        raise SupportOverflow(
            f"convolution support {a.support_max + b.support_max + 1} exceeds cap {cap}"
        )
    ledger = a.ledger.merge(b.ledger)
    if a.is_exact:
        return TiltedLaw(convolve_exact(a.weights, b.weights), ledger)
    strategy = config.conv_strategy if config is not None else ConvStrategy.AUTO
    w = convolve_weights(a.weights, b.weights, strategy)
    clamp_small_negatives(w)
    return TiltedLaw(w, ledger)


def m_fold_sum(law: TiltedLaw, params: ModelParams,
               config: EvolveConfig | None = None) -> TiltedLaw:
    """Law of the sum of ``m`` independent copies of ``law``."""
    m = params.m
    cap = config.support_cap if config is not None else None
    if cap is not None and m * law.support_max + 1 > cap:
        raise SupportOverflow(
            f"m-fold support {m * law.support_max + 1} exceeds cap {cap}"
        )
    if law.is_exact:
        return TiltedLaw(m_fold_exact(law.weights, m), law.ledger)
    strategy = config.conv_strategy if config is not None else ConvStrategy.AUTO
    return TiltedLaw(m_fold(law.weights, m, strategy), law.ledger)


# --------------------------------------------------------------------------
# one generation
# --------------------------------------------------------------------------


def _step_check_float(out_mass: float, mass_in: float, p0_in: float, m: int,
                      generation: int | None) -> None:
    """Generating-function recursion at the branching base, as a guard."""
    if not math.isfinite(out_mass):
        raise NumericGuard("tilted mass overflowed", generation=generation)
    if mass_in > LOG_COMPARE_ABOVE:
        # expected = mass**m/m * (1 + (m-1)*(p0/mass)**m); the correction is
        # below double round-off here, so compare logs of the leading term
        log_expected = m * math.log(mass_in) - math.log(m)
        if p0_in > 0.0:
            log_expected += math.log1p((m - 1) * math.exp(m * (math.log(p0_in) - math.log(mass_in))))
        if abs(math.log(out_mass) - log_expected) > STEP_CHECK_REL:
            raise NumericGuard(
                "generating-function step check failed (log regime)", generation=generation
            )
        return
    expected = mass_in ** m / m + (m - 1) / m * p0_in ** m
    if abs(out_mass - expected) > STEP_CHECK_REL * max(1.0, abs(expected)):
        raise NumericGuard(
            f"generating-function step check failed: mass {out_mass!r}, expected {expected!r}",
            generation=generation,
        )


def _dr_step_exact(law: TiltedLaw, params: ModelParams) -> TiltedLaw:
    m = params.m
    s = m_fold_exact(law.weights, m)
    if len(s) == 1:
        folded: tuple[Fraction, ...] = (s[0],)
    else:
        head = (s[0] + Fraction(s[1], m),)
        folded = head + tuple(Fraction(sk, m) for sk in s[2:])
    # recursion identity at the base holds exactly in rational arithmetic
    mass_in = sum(law.weights, Fraction(0))
    expected = Fraction(mass_in ** m, m) + Fraction(m - 1, m) * law.weights[0] ** m
    assert sum(folded, Fraction(0)) == expected
    while len(folded) > 1 and folded[-1] == 0:
        folded = folded[:-1]
    return TiltedLaw(folded, law.ledger)


def dr_step(law: TiltedLaw, params: ModelParams, config: EvolveConfig,
            generation: int | None = None) -> TiltedLaw:
    """Apply one generation of the recursion.

    Float mode truncates the tail (re-homing removed raw mass into the atom
    at zero) and pins the atom so raw mass stays exactly 1; exact mode does
    neither (every weight is exact, nothing needs repair).
    """
    m = params.m
    if law.is_exact:
        return _dr_step_exact(law, params)

    w: np.ndarray = law.weights  # type: ignore[assignment]
    if m * law.support_max + 1 > config.support_cap:
        raise SupportOverflow(
            f"m-fold support {m * law.support_max + 1} exceeds cap {config.support_cap}",
            generation=generation,
        )
    mass_in = fsum(w.tolist())
    p0_in = float(w[0])

    s = m_fold(w, m, config.conv_strategy, generation)
    clamped = clamp_small_negatives(s, generation)

    if len(s) == 1:
        folded = s.copy()
    else:
        folded = np.empty(len(s) - 1)
        np.divide(s[2:], m, out=folded[1:])
        folded[0] = s[0] + s[1] / m

    out_mass = fsum(folded.tolist())
    _step_check_float(out_mass, mass_in, p0_in, m, generation)

    # ---- tail truncation: drop the largest suffix with tilted mass <= budget
    ledger = law.ledger
    if clamped:
        ledger = ledger.charge(tilted=clamped)
    removed_raw = 0.0
    if len(folded) > 1 and config.tail_epsilon > 0.0:
        suffix = np.cumsum(folded[::-1])[::-1]
        keep = max(int(np.searchsorted(-suffix, -config.tail_epsilon)), 1)
        if keep < len(folded):
            removed_tilted = float(suffix[keep])
            pw = neg_powers(m, len(folded))
            removed_raw = float(np.dot(folded[keep:], pw[keep:]))
            folded = folded[:keep]
            ledger = ledger.charge(removed_raw, removed_tilted, count_step=True)

    # trim trailing zeros left by atoms so support_max stays meaningful
    nz = np.nonzero(folded)[0]
    if len(nz) and nz[-1] + 1 < len(folded):
        folded = folded[: nz[-1] + 1]

    if len(folded) > config.support_cap:
        raise SupportOverflow(
            f"support {len(folded)} exceeds cap {config.support_cap} after truncation",
            generation=generation,
        )

    # ---- pin the atom at zero: raw mass is exactly 1 by construction
    if len(folded) > 1:
        pw = neg_powers(m, len(folded))
        tail_raw = float(np.dot(folded[1:], pw[1:]))
    else:
        tail_raw = 0.0
    computed_w0 = folded[0] + removed_raw
    pinned_w0 = 1.0 - tail_raw
    if abs(pinned_w0 - computed_w0) > PIN_GUARD_REL * max(1.0, abs(out_mass)):
        raise NumericGuard(
            f"atom pin moved w_0 by {abs(pinned_w0 - computed_w0):.3e}, "
            "beyond round-off scale",
            generation=generation,
        )
    if pinned_w0 < 0.0 or not math.isfinite(pinned_w0):
        raise NumericGuard(f"pinned atom weight {pinned_w0!r} invalid", generation=generation)
    folded[0] = pinned_w0
    return TiltedLaw(folded, ledger)


# --------------------------------------------------------------------------
# full evolution
# --------------------------------------------------------------------------


def _make_record(law: TiltedLaw, n: int, log_pi: float, params: ModelParams,
                 config: EvolveConfig) -> StepRecord:
    m = params.m
    derivs = derivatives_up_to(law, config.k_derivatives, params)
    derivs_f = tuple(float(d) for d in derivs)
    mass = derivs_f[0]
    if config.k_derivatives >= 1:
        tmean = derivs_f[1] * m
    else:
        tmean = float(_tilted_mean(law))
    eta_n = (m - 1) * tmean - mass
    if law.is_exact:
        pw = [Fraction(m) ** -k for k in range(len(law.weights))]
        mean_val = float(sum((k * wk * pw[k] for k, wk in enumerate(law.weights)), Fraction(0)))
    else:
        w: np.ndarray = law.weights  # type: ignore[assignment]
        k = np.arange(len(w), dtype=np.float64)
        mean_val = float(np.dot(k * w, neg_powers(m, len(w))))
    return StepRecord(
        n=n,
        tilted_mass=mass,
        tilted_mean=tmean,
        eta_n=eta_n,
        mean=mean_val,
        p_zero=float(law.weights[0]),
        log_pi=log_pi,
        lhs26=-eta_n,
        lost_raw=law.ledger.lost_raw,
        support_size=len(law.weights),
        derivs=derivs_f,
    )


def evolve(law: TiltedLaw, params: ModelParams, config: EvolveConfig,
           initial_descriptor: str = "") -> EvolutionTrace:
    """Run ``n_max`` generations, recording observables at every one."""
    if law.is_exact:
        if law.support_max > EXACT_SUPPORT_CAP:
            raise UsageError(
                f"exact mode supports initial laws up to support {EXACT_SUPPORT_CAP}"
            )
        if config.n_max > EXACT_N_CAP:
            raise UsageError(f"exact mode supports at most {EXACT_N_CAP} generations")

    records = [_make_record(law, 0, 0.0, params, config)]
    laws = [law] if config.record_laws else None
    log_pi = 0.0
    cur = law
    m = params.m
    for n in range(1, config.n_max + 1):
        mass_prev = records[-1].tilted_mass
        if not (mass_prev > 0.0 and math.isfinite(mass_prev)):
            raise NumericGuard(f"tilted mass {mass_prev!r} not usable", generation=n)
        log_pi += (m - 1) * math.log(mass_prev)
        cur = dr_step(cur, params, config, generation=n)
        records.append(_make_record(cur, n, log_pi, params, config))
        if laws is not None:
            laws.append(cur)
    return EvolutionTrace(
        params=params,
        config=config,
        initial_descriptor=initial_descriptor,
        records=tuple(records),
        laws=None if laws is None else tuple(laws),
    )


# --------------------------------------------------------------------------
# trace functionals
# --------------------------------------------------------------------------


def product_pi(trace: EvolutionTrace, n: int) -> tuple[float, float]:
    """The conserved product at generation ``n``, as (log value, linear value)."""
    log_val = trace.record(n).log_pi
    try:
        lin = math.exp(log_val)
    except OverflowError:
        lin = math.inf
    return log_val, lin


def verify_identity_26(trace: EvolutionTrace, n: int) -> tuple[float, float, float]:
    """Conserved-functional identity at generation ``n``: (lhs, rhs, rel_err).

    ``lhs`` is the linear functional of the generation-n law; ``rhs`` is
    the initial value carried forward by the product.  The relative error is
    measured against ``max(|lhs|, |rhs|, 1)``; when the values overflow the
    float range the comparison happens in log space instead.
    """
    rec = trace.record(n)
    rec0 = trace.record(0)
    lhs = rec.lhs26
    lhs0 = rec0.lhs26
    log_pi = rec.log_pi
    try:
        rhs = lhs0 * math.exp(log_pi)
    except OverflowError:
        rhs = math.copysign(math.inf, lhs0)
    if math.isfinite(lhs) and math.isfinite(rhs):
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)
        return lhs, rhs, rel
    if lhs0 == 0.0 or lhs == 0.0 or math.copysign(1.0, lhs) != math.copysign(1.0, lhs0):
        return lhs, rhs, math.inf
    dlog = math.log(abs(lhs)) - (math.log(abs(lhs0)) + log_pi)
    rel = abs(math.expm1(dlog)) if abs(dlog) < 50 else math.inf
    return lhs, rhs, rel


def free_energy_upper(trace: EvolutionTrace, n: int) -> float:
    """``E(X_n) / m**n`` — the non-increasing free-energy upper bound."""
    rec = trace.record(n)
    if rec.mean == 0.0:
        return 0.0
    m = trace.params.m
    log_val = math.log(rec.mean) - n * math.log(m)
    try:
        return math.exp(log_val)
    except OverflowError:
        return math.inf


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(x, ".17g")


def render_trace_csv(trace: EvolutionTrace) -> str:
    """Render the trace as CSV, one row per generation, 17 significant digits."""
    k = trace.config.k_derivatives
    header = (
        "n,tilted_mass,tilted_mean,eta,mean,p_zero,log_pi,lhs26,lost_raw,support_size,"
        + ",".join(f"H{i}" for i in range(1, k + 1))
    ).rstrip(",")
    lines = [header]
    for r in trace.records:
        row = [
            str(r.n),
            _fmt(r.tilted_mass),
            _fmt(r.tilted_mean),
            _fmt(r.eta_n),
            _fmt(r.mean),
            _fmt(r.p_zero),
            _fmt(r.log_pi),
            _fmt(r.lhs26),
            _fmt(r.lost_raw),
            str(r.support_size),
        ]
        row.extend(_fmt(r.derivs[i]) for i in range(1, k + 1))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_plotdata(trace: EvolutionTrace) -> str:
    """Two-column (log n, log product) text for generations 1..n_max."""
    lines = []
    for r in trace.records[1:]:
        lines.append(f"{_fmt(math.log(r.n))} {_fmt(r.log_pi)}")
    return "\n".join(lines) + "\n"
