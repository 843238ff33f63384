"""Exact distribution-evolution engine for max-recursion with tilted weights.

The package evolves discrete laws under the recursion
``X_{n+1} = (X_{n,1} + ... + X_{n,m} - 1)^+`` in exponentially tilted
coordinates ``w_k = P(X = k) m^k``, tracks the conserved linear functional
and the generation products built from it, and ships a verification battery,
power-law fit experiments, a Monte Carlo oracle, a CLI, and an HTTP service.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (
    BadTiltPoint,
    ConfigError,
    DegenerateDelta,
    DrlabError,
    HypothesisViolated,
    InfeasibleFamily,
    MissingDerivatives,
    NegativeMass,
    NonNormalized,
    NotSubcritical,
    NumericGuard,
    SupportOverflow,
    TiltOutOfRange,
    TreeTooDeep,
    UsageError,
    WindowTooSmall,
)
from .laws import (
    MassLedger,
    ModelParams,
    StableFamilyParams,
    TiltedLaw,
    TruncationMode,
    c25_constant,
    derivatives_up_to,
    eta,
    factorial_derivative,
    make_law,
    mean,
    moment_tilted,
    p_zero,
    pgf_at,
    point_mass,
    raw_mass,
    second_moment_at,
    stable_critical_init,
    tilted_mass,
    tilted_mean,
    truncate_at,
    truncate_initial,
    two_point_critical,
)
from .evolve import (
    EvolutionTrace,
    EvolveConfig,
    StepRecord,
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
from .analysis import (
    CheckReport,
    DominabilityCertificate,
    Lemma27ScanResult,
    Lemma51Result,
    Lemma52Report,
    PlateauResult,
    PowerLawFit,
    Theorem23Result,
    check_dominability,
    corollary24_check,
    delta0,
    fit_power_law,
    lemma25_check,
    lemma27_lhs,
    lemma27_scan,
    lemma42_bound,
    lemma51_bound,
    lemma52_dichotomy,
    ratio_identity_error,
    theorem23_check,
    truncation_identity_gap,
    truncation_plateau,
)
from .mc import McConfig, McEstimate, estimate, render_mc_csv, sample_xn

__all__ = [
    "__version__",
    # errors
    "DrlabError",
    "UsageError",
    "ConfigError",
    "NonNormalized",
    "NegativeMass",
    "InfeasibleFamily",
    "BadTiltPoint",
    "TiltOutOfRange",
    "NotSubcritical",
    "DegenerateDelta",
    "MissingDerivatives",
    "HypothesisViolated",
    "WindowTooSmall",
    "TreeTooDeep",
    "NumericGuard",
    "SupportOverflow",
    # laws
    "ModelParams",
    "TiltedLaw",
    "MassLedger",
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
    "moment_tilted",
    "raw_mass",
    "mean",
    "p_zero",
    "eta",
    "pgf_at",
    "factorial_derivative",
    "derivatives_up_to",
    "second_moment_at",
    "c25_constant",
    # evolve
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
    # analysis
    "CheckReport",
    "DominabilityCertificate",
    "PowerLawFit",
    "Theorem23Result",
    "Lemma27ScanResult",
    "Lemma51Result",
    "Lemma52Report",
    "PlateauResult",
    "check_dominability",
    "theorem23_check",
    "corollary24_check",
    "lemma25_check",
    "lemma42_bound",
    "delta0",
    "lemma51_bound",
    "lemma27_lhs",
    "lemma27_scan",
    "lemma52_dichotomy",
    "fit_power_law",
    "ratio_identity_error",
    "truncation_identity_gap",
    "truncation_plateau",
    # mc
    "McConfig",
    "McEstimate",
    "sample_xn",
    "estimate",
    "render_mc_csv",
]
