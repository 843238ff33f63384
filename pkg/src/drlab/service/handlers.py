"""Operation handlers shared by the HTTP service and the CLI's local mode.

Each handler maps a request model to a response model using only the core
engine, so local runs and remote runs produce byte-identical artifacts.
Domain errors propagate; the app layer (HTTP) and the CLI map them to
status codes / exit codes.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, Sequence

from ..analysis import (
    check_dominability,
    fit_power_law,
    lemma25_check,
    lemma27_lhs,
    lemma27_scan,
    lemma42_bound,
    lemma51_bound,
    delta0,
    corollary24_check,
    ratio_identity_error,
    theorem23_check,
    truncation_identity_gap,
    truncation_plateau,
)
from ..errors import UsageError
from ..evolve import (
    EvolveConfig,
    EvolutionTrace,
    evolve,
    product_pi,
    render_plotdata,
    render_trace_csv,
    verify_identity_26,
)
from ..laws import (
    ModelParams,
    TiltedLaw,
    make_law,
    moment_tilted,
    point_mass,
    raw_mass,
    stable_critical_init,
    truncate_initial,
    two_point_critical,
)
from ..mc import McConfig, estimate, render_mc_csv
from .schemas import (
    CheckReportModel,
    EvolveRequest,
    EvolveResponse,
    InitialSpec,
    Lemma27Request,
    Lemma27Response,
    McRequest,
    McResponse,
    SweepFitModel,
    SweepRequest,
    SweepResponse,
    VerifyOptions,
    VerifyRequest,
    VerifyResponse,
)

__all__ = [
    "build_law",
    "run_evolve",
    "run_mc",
    "run_sweep",
    "run_lemma27",
    "run_verify",
]


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _csv(header: str, rows: Sequence[Sequence]) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# initial-law construction
# --------------------------------------------------------------------------


def build_law(spec: InitialSpec, params: ModelParams) -> tuple[TiltedLaw, str]:
    """Materialize an initial law from its declarative spec."""
    kind = spec.kind
    if kind == "point":
        return point_mass(spec.k, params, exact=spec.exact), f"point({spec.k})"
    if kind == "two_point":
        return two_point_critical(spec.a, params, exact=spec.exact), f"two_point(a={spec.a})"
    if kind == "raw":
        if not spec.raw_probs:
            raise UsageError("raw initial law needs raw_probs")
        if spec.exact:
            probs = [Fraction(p).limit_denominator(10 ** 15) for p in spec.raw_probs]
            law = make_law(probs, params, exact=True)
        else:
            law = make_law(spec.raw_probs, params)
        return law, f"raw(support={law.support_max})"
    if kind == "stable":
        if spec.exact:
            raise UsageError("stable family is float-only")
        if spec.alpha is None or spec.K is None:
            raise UsageError("stable initial law needs alpha and K")
        law, _fam = stable_critical_init(params.m, spec.alpha, spec.K)
        return law, f"stable(alpha={spec.alpha:g},K={spec.K})"
    if kind == "truncated":
        if spec.base is None or spec.M is None:
            raise UsageError("truncated initial law needs base and M")
        base_spec = spec.model_copy(update={"kind": spec.base, "base": None, "M": None})
        base_law, base_desc = build_law(base_spec, params)
        law, theta = truncate_initial(
            base_law, spec.M, spec.truncation_mode, params, alpha=spec.alpha
        )
        return law, f"truncated({base_desc},M={spec.M},mode={spec.truncation_mode})"
    raise UsageError(f"unknown initial kind {kind!r}")


# --------------------------------------------------------------------------
# evolve / mc / sweep / lemma27
# --------------------------------------------------------------------------


def run_evolve(req: EvolveRequest) -> EvolveResponse:
    params = ModelParams(req.model.m)
    law, descriptor = build_law(req.initial, params)
    config = EvolveConfig(
        n_max=req.evolve.n_max,
        tail_epsilon=req.evolve.tail_epsilon,
        support_cap=req.evolve.support_cap,
        conv_strategy=req.evolve.conv_strategy,
        k_derivatives=req.evolve.k_derivatives,
        record_laws=req.evolve.record_laws,
    )
    trace = evolve(law, params, config, initial_descriptor=descriptor)
    final = trace.records[-1]
    plotdata = None
    if req.emit_plotdata and trace.n_max >= 1:
        plotdata = render_plotdata(trace)
    return EvolveResponse(
        trace_csv=render_trace_csv(trace),
        plotdata=plotdata,
        initial_descriptor=descriptor,
        n_max=trace.n_max,
        final_eta=final.eta_n,
        final_log_pi=final.log_pi,
        final_support=final.support_size,
        lost_raw=final.lost_raw,
    )


def run_mc(req: McRequest) -> McResponse:
    params = ModelParams(req.model.m)
    law, _ = build_law(req.initial, params)
    config = McConfig(
        n=req.mc.n, samples=req.mc.samples, seed=req.mc.seed, workers=req.mc.workers
    )
    est = estimate(law, config, params)
    return McResponse(
        csv=render_mc_csv(est, config),
        mean_hat=est.mean_hat,
        stderr_mean=est.stderr_mean,
        p_zero_hat=est.p_zero_hat,
        stderr_p0=est.stderr_p0,
        samples=est.samples,
    )


def run_sweep(req: SweepRequest) -> SweepResponse:
    if not req.alphas:
        raise UsageError("sweep needs at least one alpha")
    params = ModelParams(req.model.m)
    fits = []
    plotdata: dict[str, str] = {}
    rows = []
    for alpha in req.alphas:
        law, _fam = stable_critical_init(params.m, alpha, req.K)
        config = EvolveConfig(
            n_max=req.n_max,
            tail_epsilon=req.tail_epsilon,
            support_cap=req.support_cap,
            k_derivatives=1,
        )
        trace = evolve(law, params, config, initial_descriptor=f"stable(alpha={alpha:g})")
        fit = fit_power_law(trace, req.n_lo, req.n_hi, target=alpha - 2.0)
        fits.append(
            SweepFitModel(
                alpha=alpha,
                slope=fit.slope,
                target=fit.target,
                abs_err=fit.abs_err,
                n_lo=fit.n_lo,
                n_hi=fit.n_hi,
                intercept=fit.intercept,
                max_residual=fit.max_residual,
            )
        )
        rows.append([alpha, fit.slope, fit.target, fit.abs_err, fit.n_lo, fit.n_hi])
        if req.emit_plotdata:
            plotdata[f"alpha_{alpha:g}"] = render_plotdata(trace)
    summary = _csv("alpha,slope,target,abs_err,n_lo,n_hi", rows)
    return SweepResponse(
        summary_csv=summary, fits=fits, plotdata=plotdata if req.emit_plotdata else None
    )


def run_lemma27(req: Lemma27Request) -> Lemma27Response:
    scan = lemma27_scan(req.m, req.l_max, req.y_list)
    agree = _lemma27_paths_agree(req.m, min(req.l_max, 10), req.y_list)
    stabilized = True
    if req.l_max >= 8:
        stabilized = scan.max_ratio_over_l(8, req.l_max) <= scan.max_ratio_over_l(4, req.l_max)
    rows = [[l, y, r] for (l, y), r in sorted(scan.ratios.items())]
    report = CheckReportModel(
        check_name=f"lemma27[m{req.m}]",
        params={"m": req.m, "l_max": req.l_max, "y_list": list(req.y_list)},
        fitted_constants={"c18_hat": scan.c18_hat},
        max_ratio=scan.c18_hat,
        passed=agree and stabilized,
        details_csv=_csv("l,y,ratio", rows),
    )
    return Lemma27Response(report=report, csv=report.details_csv)


def _lemma27_paths_agree(m: int, l_max: int, y_list: Sequence[float]) -> bool:
    for l in range(4, l_max + 1):
        for y in y_list:
            y_in = int(y) if float(y).is_integer() else y
            if lemma27_lhs(l, m, y_in, method="plain") != lemma27_lhs(l, m, y_in, method="sorted"):
                return False
    return True


# --------------------------------------------------------------------------
# verification battery
# --------------------------------------------------------------------------


def _fixture_battery(opts: VerifyOptions):
    """(name, params, law, regime, n_cap) for the standing fixture set."""
    m2 = ModelParams(2)
    m3 = ModelParams(3)
    stable_law, _ = stable_critical_init(2, 3.0, opts.stable_K_small)
    return [
        ("point0_m2", m2, point_mass(0, m2), "subcritical", None),
        ("point1_m2", m2, point_mass(1, m2), "critical", None),
        ("two_atom_subcritical_m2", m2, make_law([0.9, 0.0, 0.1], m2), "subcritical", None),
        ("two_point_critical_m2", m2, two_point_critical(2, m2), "critical", None),
        ("stable_critical_m2", m2, stable_law, "critical", None),
        ("two_atom_supercritical_m2", m2, make_law([0.7, 0.0, 0.3], m2), "supercritical",
         opts.n_max_supercritical),
        ("two_atom_subcritical_m3", m3, make_law([0.98, 0.0, 0.02], m3), "subcritical", None),
        ("two_point_critical_m3", m3, two_point_critical(2, m3), "critical", None),
        ("two_atom_supercritical_m3", m3, make_law([0.6, 0.0, 0.4], m3), "supercritical",
         min(6, opts.n_max_supercritical)),
    ]


def _report(check_name: str, params: dict, fitted: dict, max_ratio, passed: bool,
            details_csv: str | None) -> CheckReportModel:
    return CheckReportModel(
        check_name=check_name,
        params=params,
        fitted_constants={k: float(v) for k, v in fitted.items()},
        max_ratio=None if max_ratio is None else float(max_ratio),
        passed=bool(passed),
        details_csv=details_csv,
    )


def _suite_conservation(opts: VerifyOptions) -> list[CheckReportModel]:
    reports = []
    for name, params, law, regime, n_cap in _fixture_battery(opts):
        n_max = min(opts.n_max, n_cap) if n_cap is not None else opts.n_max
        config = EvolveConfig(
            n_max=n_max,
            tail_epsilon=opts.tail_epsilon,
            k_derivatives=3,
            record_laws=True,
        )
        trace = evolve(law, params, config, initial_descriptor=name)
        max_drift = max(abs(float(raw_mass(l, params)) - 1.0) for l in trace.laws)
        max_identity = max(verify_identity_26(trace, n)[2] for n in range(n_max + 1))
        eta0 = trace.records[0].eta_n
        max_abs_eta = max(abs(r.eta_n) for r in trace.records)
        if regime == "critical":
            sign_ok = max_abs_eta <= opts.eta_tol
        else:
            sign_ok = all(
                r.eta_n * eta0 > 0.0 for r in trace.records
            )
        passed = (
            max_drift <= opts.raw_drift_tol
            and max_identity <= opts.identity_tol
            and sign_ok
        )
        reports.append(
            _report(
                f"conservation[{name}]",
                {"m": params.m, "n_max": n_max, "tail_epsilon": opts.tail_epsilon,
                 "regime": regime},
                {"max_raw_drift": max_drift, "max_identity_rel_err": max_identity,
                 "max_abs_eta": max_abs_eta},
                max_identity,
                passed,
                render_trace_csv(trace),
            )
        )
    return reports


def _suite_bounds(opts: VerifyOptions) -> list[CheckReportModel]:
    reports = []
    for name, params, law, regime, n_cap in _fixture_battery(opts):
        if regime == "supercritical":
            continue
        m = params.m
        n_max = min(opts.n_max, n_cap) if n_cap is not None else opts.n_max
        config = EvolveConfig(n_max=n_max, tail_epsilon=opts.tail_epsilon, k_derivatives=1)

        def run() -> tuple[EvolutionTrace, float]:
            tr = evolve(law, params, config, initial_descriptor=name)
            c7 = max(
                (math.exp(r.log_pi) / r.n ** 2 for r in tr.records if r.n >= 1),
                default=0.0,
            )
            return tr, c7

        trace, c7_hat = run()
        _trace2, c7_again = run()
        mass_limit = m ** (1.0 / (m - 1))
        slack = 1.0 + opts.bound_slack
        mass_sup = max(r.tilted_mass for r in trace.records)
        mass_ok = mass_sup <= mass_limit * slack
        mean_side_ok = all(
            (m - 1) * r.tilted_mean <= r.tilted_mass * slack for r in trace.records
        )
        contraction_ok = all(
            b.mean <= m * a.mean * (1.0 + 1e-12) + 1e-300
            for a, b in zip(trace.records, trace.records[1:])
        )
        fe = [r.mean / float(m) ** r.n for r in trace.records]
        fe_ok = all(b <= a * (1.0 + 1e-12) + 1e-300 for a, b in zip(fe, fe[1:]))
        c7_stable = c7_hat == 0.0 or abs(c7_hat - c7_again) <= opts.c7_stability * c7_hat
        passed = mass_ok and mean_side_ok and contraction_ok and fe_ok and c7_stable
        reports.append(
            _report(
                f"bounds[{name}]",
                {"m": m, "n_max": n_max, "regime": regime},
                {"mass_sup": mass_sup, "mass_limit": mass_limit, "c7_hat": c7_hat},
                mass_sup / mass_limit,
                passed,
                render_trace_csv(trace),
            )
        )
    return reports


def _suite_dominability(opts: VerifyOptions) -> list[CheckReportModel]:
    params = ModelParams(2)
    alpha = opts.dominability_alpha
    base_law, _fam = stable_critical_init(2, alpha, opts.dominability_K)

    def builder(M: int) -> tuple[TiltedLaw, float]:
        return truncate_initial(base_law, M, "stable", params, alpha=alpha)

    cert = check_dominability(
        builder,
        params,
        opts.dominability_M_list,
        opts.dominability_n_max,
        opts.dominability_k_max,
    )
    rows = [[M, cert.theta[M]] for M in cert.M_list]
    return [
        _report(
            "dominability[stable_m2]",
            {
                "m": 2,
                "alpha": alpha,
                "K": opts.dominability_K,
                "M_list": list(cert.M_list),
                "n_max": cert.n_max,
                "k_max": cert.k_max,
            },
            {"gamma_fitted": cert.gamma_fitted, "cond21_max_ratio": cert.cond21_max_ratio},
            cert.cond21_max_ratio,
            cert.cond21_pass and cert.cond22_pass,
            _csv("M,theta", rows),
        )
    ]


def _suite_lemma27(opts: VerifyOptions) -> list[CheckReportModel]:
    reports = []
    for m in opts.lemma27_m_list:
        req = Lemma27Request(
            m=m, l_max=opts.lemma27_l_max, y_list=[3.0 * m, 6.0 * m, 12.0 * m]
        )
        reports.append(run_lemma27(req).report)
    return reports


def _subcritical_fixtures(opts: VerifyOptions):
    m2 = ModelParams(2)
    m3 = ModelParams(3)
    return [
        ("two_atom_subcritical_m2", m2, make_law([0.9, 0.0, 0.1], m2)),
        ("two_atom_subcritical_m3", m3, make_law([0.98, 0.0, 0.02], m3)),
    ]


def _suite_lemma42(opts: VerifyOptions) -> list[CheckReportModel]:
    reports = []
    for name, params, law in _subcritical_fixtures(opts):
        bound = lemma42_bound(law, params)
        config = EvolveConfig(
            n_max=opts.lemma42_n_max, tail_epsilon=1e-16, k_derivatives=1
        )
        trace = evolve(law, params, config, initial_descriptor=name)
        log_pis = [r.log_pi for r in trace.records]
        monotone = all(b >= a - 1e-12 for a, b in zip(log_pis, log_pis[1:]))
        pi_max = math.exp(log_pis[-1])
        within = pi_max <= bound * (1.0 + opts.lemma42_bound_slack)
        ratio_err = ratio_identity_error(trace)
        passed = monotone and within and ratio_err <= opts.lemma42_ratio_tol
        reports.append(
            _report(
                f"lemma42[{name}]",
                {"m": params.m, "n_max": opts.lemma42_n_max},
                {"bound": bound, "pi_max": pi_max, "ratio_identity_err": ratio_err},
                pi_max / bound,
                passed,
                render_trace_csv(trace),
            )
        )

    # truncated-tail gap identity on a stable base
    params = ModelParams(2)
    base_law, _fam = stable_critical_init(2, 3.0, 20_000)
    rows = []
    worst = 0.0
    for M in (4, 16, 64, 256):
        lhs, rhs, rel = truncation_identity_gap(base_law, M, params)
        rows.append([M, lhs, rhs, rel])
        worst = max(worst, rel)
    reports.append(
        _report(
            "lemma42[truncation_gap_identity]",
            {"m": 2, "alpha": 3.0, "K": 20_000, "M_list": [4, 16, 64, 256]},
            {"max_rel_err": worst},
            worst,
            worst <= opts.lemma42_identity47_tol,
            _csv("M,lhs,rhs,rel_err", rows),
        )
    )

    # product plateau of the truncated family against the closed-form bound
    plateau = truncation_plateau(
        base_law, 3.0, opts.lemma42_plateau_M_list, params, tail_epsilon=1e-16
    )
    rows = [
        [p.M, p.bound, p.plateau, p.ratio, p.n_converged, p.c32_local]
        for p in plateau.points
    ]
    ratio_ok = all(p.ratio <= 1.0 + opts.lemma42_bound_slack for p in plateau.points)
    reports.append(
        _report(
            "lemma42[truncated_plateau]",
            {"m": 2, "alpha": 3.0, "K": 20_000,
             "M_list": list(opts.lemma42_plateau_M_list)},
            {"c32_hat": plateau.c32_hat, "slope": plateau.slope},
            max(p.ratio for p in plateau.points),
            ratio_ok and plateau.monotone_ok,
            _csv("M,bound,plateau,ratio,n_converged,c32_local", rows),
        )
    )
    return reports


def _suite_lemma51(opts: VerifyOptions) -> list[CheckReportModel]:
    reports = []
    m2 = ModelParams(2)
    fixtures = [
        ("two_point_critical_m2", m2, two_point_critical(2, m2)),
        ("two_atom_subcritical_m2", m2, make_law([0.9, 0.0, 0.1], m2)),
    ]
    n_top = max(opts.lemma51_n_list)
    for name, params, law in fixtures:
        config = EvolveConfig(n_max=n_top, tail_epsilon=1e-16, k_derivatives=1)
        trace = evolve(law, params, config, initial_descriptor=name)
        rows = []
        ok = True
        c34 = 0.0
        for n in opts.lemma51_n_list:
            res = lemma51_bound(law, n, params)
            _lp, pi_n = product_pi(trace, n)
            rows.append([n, res.s_n, res.delta0_value, res.bound, pi_n])
            ok = ok and res.bound >= pi_n * (1.0 - 1e-12)
            c34 = max(c34, res.c34_hat)
        # the gap series must be positive on the whole admissible tilt range
        m = params.m
        s_grid = [m / 2.0 + (m - m / 2.0) * f for f in (0.1, 0.25, 0.5, 0.75, 0.9)]
        positivity = all(delta0(law, s, params) > 0.0 for s in s_grid)
        reports.append(
            _report(
                f"lemma51[{name}]",
                {"m": params.m, "n_list": list(opts.lemma51_n_list)},
                {"c34_hat": c34},
                None,
                ok and positivity,
                _csv("n,s_n,delta0,bound,pi_n", rows),
            )
        )
    return reports


def _suite_thm23(opts: VerifyOptions) -> list[CheckReportModel]:
    params = ModelParams(2)
    m = params.m
    law = two_point_critical(2, params)
    config = EvolveConfig(
        n_max=opts.thm23_n_max,
        tail_epsilon=1e-16,
        k_derivatives=opts.thm23_k_max,
        record_laws=True,
    )
    trace = evolve(law, params, config, initial_descriptor="two_point_critical_m2")
    result = theorem23_check(trace, range(1, opts.thm23_k_max + 1), M=1)
    closed_r1 = m ** (1.0 / (m - 1)) / (m * (m - 1))
    roots = {k: result.r[k] ** (1.0 / k) for k in result.k_range if k >= 3}
    spread = max(roots.values()) / min(roots.values())
    passed = result.r[1] <= closed_r1 * (1.0 + 1e-12) and spread <= opts.thm23_spread_cap
    rows = [[k, result.r[k], result.r[k] ** (1.0 / k)] for k in result.k_range]
    reports = [
        _report(
            "thm23[two_point_critical_m2]",
            {"m": 2, "n_max": opts.thm23_n_max, "k_max": opts.thm23_k_max, "M": 1},
            {"c4_hat": result.c4_hat, "r1": result.r[1], "r1_closed_form": closed_r1,
             "root_spread": spread},
            spread,
            passed,
            _csv("k,r_k,r_k_root", rows),
        )
    ]

    theta = max(float(moment_tilted(law, 3)), 1.0)
    l25 = lemma25_check(trace, theta)
    reports.append(
        _report(
            "thm23[derivative_envelopes]",
            {"m": 2, "n_max": opts.thm23_n_max, "theta": theta},
            {"c8_hat": l25.c8_hat, "c9_hat": l25.c9_hat},
            None,
            math.isfinite(l25.c8_hat) and math.isfinite(l25.c9_hat),
            None,
        )
    )

    c4 = max(result.c4_hat, 1.0)
    cor = corollary24_check(trace, M=1, c4=c4)
    v_decreasing = all(b <= a for a, b in zip(cor.v_points, cor.v_points[1:]))
    reports.append(
        _report(
            "thm23[shifted_second_moment]",
            {"m": 2, "n_max": opts.thm23_n_max, "c4": c4, "M": 1},
            {"c6_hat": cor.c6_hat},
            None,
            v_decreasing and math.isfinite(cor.c6_hat),
            _csv("n,v_n,value", [[i, cor.v_points[i], cor.values[i]]
                                 for i in range(len(cor.values))]),
        )
    )
    return reports


_SUITES: dict[str, Callable[[VerifyOptions], list[CheckReportModel]]] = {
    "conservation": _suite_conservation,
    "bounds": _suite_bounds,
    "dominability": _suite_dominability,
    "lemma27": _suite_lemma27,
    "lemma42": _suite_lemma42,
    "lemma51": _suite_lemma51,
    "thm23": _suite_thm23,
}


def run_verify(req: VerifyRequest) -> VerifyResponse:
    if req.suite == "all":
        names = list(_SUITES)
    else:
        names = [req.suite]
    reports: list[CheckReportModel] = []
    for name in names:
        reports.extend(_SUITES[name](req.options))
    return VerifyResponse(
        suite=req.suite,
        reports=reports,
        all_passed=all(r.passed for r in reports),
    )
