"""Request/response models for the drlab service.

These are the wire contract: the CLI builds requests from config files and
either calls the handlers in-process or POSTs the same JSON to a remote
server.  Responses embed rendered CSV/plot-data strings so file layout
stays a client concern.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

SuiteName = Literal[
    "conservation",
    "bounds",
    "dominability",
    "lemma27",
    "lemma42",
    "lemma51",
    "thm23",
    "all",
]

InitialKind = Literal["point", "two_point", "raw", "stable", "truncated"]
TruncModeName = Literal["stable", "finite_variance"]


class ModelSpec(BaseModel):
    m: int = 2


class InitialSpec(BaseModel):
    """Declarative initial law.

    ``raw`` carries probabilities inline (clients resolve file paths before
    building the request).  ``truncated`` wraps a base family given by
    ``base`` — base parameters use the same fields (``alpha``/``K`` for a
    stable base, ``a`` for two-point, ``raw_probs`` for raw).
    """

    kind: InitialKind
    k: int = 0
    a: int = 2
    raw_probs: Optional[list[float]] = None
    alpha: Optional[float] = None
    K: Optional[int] = None
    M: Optional[int] = None
    truncation_mode: TruncModeName = "stable"
    base: Optional[Literal["point", "two_point", "raw", "stable"]] = None
    exact: bool = False


class EvolveSpec(BaseModel):
    n_max: int = 30
    tail_epsilon: float = 1e-14
    support_cap: int = 5_000_000
    conv_strategy: Literal["direct", "transform", "auto"] = "auto"
    k_derivatives: int = 8
    record_laws: bool = False


class EvolveRequest(BaseModel):
    model: ModelSpec = Field(default_factory=ModelSpec)
    initial: InitialSpec
    evolve: EvolveSpec = Field(default_factory=EvolveSpec)
    emit_plotdata: bool = False


class EvolveResponse(BaseModel):
    trace_csv: str
    plotdata: Optional[str] = None
    initial_descriptor: str
    n_max: int
    final_eta: float
    final_log_pi: float
    final_support: int
    lost_raw: float


class McSpec(BaseModel):
    n: int
    samples: int
    seed: int
    workers: int = 1


class McRequest(BaseModel):
    model: ModelSpec = Field(default_factory=ModelSpec)
    initial: InitialSpec
    mc: McSpec


class McResponse(BaseModel):
    csv: str
    mean_hat: float
    stderr_mean: float
    p_zero_hat: float
    stderr_p0: float
    samples: int


class SweepRequest(BaseModel):
    model: ModelSpec = Field(default_factory=ModelSpec)
    alphas: list[float]
    K: int = 100_000
    n_max: int = 512
    n_lo: int = 64
    n_hi: int = 512
    tail_epsilon: float = 1e-14
    support_cap: int = 5_000_000
    emit_plotdata: bool = False


class SweepFitModel(BaseModel):
    alpha: float
    slope: float
    target: float
    abs_err: float
    n_lo: int
    n_hi: int
    intercept: float
    max_residual: float


class SweepResponse(BaseModel):
    summary_csv: str
    fits: list[SweepFitModel]
    plotdata: Optional[dict[str, str]] = None


class Lemma27Request(BaseModel):
    m: int = 2
    l_max: int = 14
    y_list: list[float]


class CheckReportModel(BaseModel):
    check_name: str
    params: dict
    fitted_constants: dict[str, float]
    max_ratio: Optional[float] = None
    passed: bool
    details_csv: Optional[str] = None


class Lemma27Response(BaseModel):
    report: CheckReportModel
    csv: str


class VerifyOptions(BaseModel):
    """Tolerances and grids of the verification battery.

    Defaults reflect the standing gates; configs may override any of them
    (useful for tightening, loosening, or constructing failing runs in
    tests).
    """

    n_max: int = 30
    n_max_supercritical: int = 10
    tail_epsilon: float = 1e-18
    raw_drift_tol: float = 1e-13
    identity_tol: float = 1e-10
    eta_tol: float = 1e-9
    bound_slack: float = 1e-9
    c7_stability: float = 0.05
    stable_K_small: int = 2000
    # dominability
    dominability_K: int = 100_000
    dominability_alpha: float = 3.0
    dominability_M_list: list[int] = Field(default_factory=lambda: [16, 32, 64, 128, 256])
    dominability_n_max: int = 256
    dominability_k_max: int = 8
    # lemma27
    lemma27_m_list: list[int] = Field(default_factory=lambda: [2, 3])
    lemma27_l_max: int = 14
    # lemma42
    lemma42_n_max: int = 200
    lemma42_plateau_M_list: list[int] = Field(default_factory=lambda: [16, 32, 64])
    lemma42_ratio_tol: float = 1e-9
    lemma42_identity47_tol: float = 1e-12
    lemma42_bound_slack: float = 1e-8
    # lemma51
    lemma51_n_list: list[int] = Field(default_factory=lambda: [4, 8, 16, 32])
    # thm23
    thm23_n_max: int = 256
    thm23_k_max: int = 8
    thm23_spread_cap: float = 3.0


class VerifyRequest(BaseModel):
    suite: SuiteName
    options: VerifyOptions = Field(default_factory=VerifyOptions)


class VerifyResponse(BaseModel):
    suite: SuiteName
    reports: list[CheckReportModel]
    all_passed: bool


class HealthResponse(BaseModel):
    status: str
    version: str


class ErrorBody(BaseModel):
    """Error payload the CLI maps back to exit codes."""

    error_kind: Literal["usage", "numeric_guard"]
    message: str
    generation: Optional[int] = None
