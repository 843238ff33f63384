"""Command-line experiment runner.

Subcommands: ``evolve``, ``verify``, ``sweep-alpha``, ``mc``, ``lemma27``,
plus ``serve`` to host the HTTP service.  Every run is driven by a flat
``key = value`` config; the effective config (defaults filled in) is written
next to the outputs so any run can be replayed float-exactly.

Exit codes: 0 success; 1 usage or config error; 2 verification suite ran but
some check failed (reports are still written); 3 numeric guard tripped (the
failing generation is reported on stderr).

``--server URL`` sends the same request to a running service instead of
computing locally; outputs and exit codes are identical either way.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from typing import Optional

from pydantic import ValidationError

from . import config as cfgmod
from .errors import ConfigError, NumericGuard, UsageError
from .service import handlers
from .service.schemas import (
    CheckReportModel,
    EvolveResponse,
    Lemma27Response,
    McResponse,
    SweepResponse,
    VerifyRequest,
    VerifyResponse,
)

__all__ = ["main"]

_SUITES = (
    "conservation",
    "bounds",
    "dominability",
    "lemma27",
    "lemma42",
    "lemma51",
    "thm23",
    "all",
)


class _ArgError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D102 - argparse hook
        raise _ArgError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="drlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run one evolution and write its trace CSV")
    p.add_argument("config", help="run config file")
    p.add_argument("--out", required=True, help="trace CSV output path")
    p.add_argument("--emit-plotdata", action="store_true",
                   help="also write (log n, log product) columns for plotting")
    p.add_argument("--server", default=None, help="base URL of a running service")
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("verify", help="run a verification suite and write JSON reports")
    p.add_argument("suite", choices=_SUITES)
    p.add_argument("config", nargs="?", default=None,
                   help="optional config overriding suite tolerances/grids")
    p.add_argument("--out-dir", required=True, help="directory for reports")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("sweep-alpha", help="slope fits for a list of tail exponents")
    p.add_argument("config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--emit-plotdata", action="store_true")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("mc", help="Monte Carlo estimate of one generation")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="estimate CSV output path")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_mc)

    p = sub.add_parser("lemma27", help="exact combinatorial scan over (l, y)")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="scan CSV output path")
    p.add_argument("--server", default=None)
    p.set_defaults(func=_cmd_lemma27)

    p = sub.add_parser("serve", help="host the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


# --------------------------------------------------------------------------
# remote plumbing
# --------------------------------------------------------------------------


def _post(server: str, route: str, payload: dict):
    """POST to the service; returns the parsed body or raises the mapped error."""
    import httpx

    url = server.rstrip("/") + route
    try:
        resp = httpx.post(url, json=payload, timeout=3600.0)
    except httpx.HTTPError as exc:
        raise UsageError(f"cannot reach server at {server!r}: {exc}") from exc
    if resp.status_code == 200:
        return json.loads(resp.text)
    try:
        body = json.loads(resp.text)
    except ValueError:
        body = {"message": resp.text}
    if resp.status_code == 500 and body.get("error_kind") == "numeric_guard":
        raise NumericGuard(body.get("message", "numeric guard"),
                           generation=body.get("generation"))
    detail = body.get("message") or body.get("detail") or resp.text
    raise UsageError(f"server rejected request ({resp.status_code}): {detail}")


def _stem(path: str) -> str:
    root, _ext = os.path.splitext(path)
    return root


def _write_effective(path: str, effective: dict) -> None:
    cfgmod.atomic_write(path, cfgmod.render_config(effective))


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_evolve(args) -> int:
    cfg = cfgmod.parse_config_file(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    req, effective = cfgmod.build_evolve_request(
        cfg, base_dir, emit_plotdata=args.emit_plotdata
    )
    if args.server:
        resp = EvolveResponse.model_validate(
            _post(args.server, "/evolve", req.model_dump(mode="json"))
        )
    else:
        resp = handlers.run_evolve(req)
    cfgmod.atomic_write(args.out, resp.trace_csv)
    if args.emit_plotdata and resp.plotdata is not None:
        cfgmod.atomic_write(_stem(args.out) + ".plotdata.csv", resp.plotdata)
    _write_effective(_stem(args.out) + ".effective.cfg", effective)
    print(
        f"evolved {resp.initial_descriptor} to n={resp.n_max}: "
        f"final eta={resp.final_eta:.6g}, log product={resp.final_log_pi:.6g}, "
        f"support={resp.final_support}, lost raw mass={resp.lost_raw:.3g}"
    )
    print(f"wrote {args.out}")
    return 0


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_")


def _write_reports(out_dir: str, reports: list[CheckReportModel]) -> None:
    for rep in reports:
        slug = _slug(rep.check_name)
        csv_path = None
        if rep.details_csv is not None:
            csv_path = os.path.join(out_dir, slug + ".details.csv")
            cfgmod.atomic_write(csv_path, rep.details_csv)
        doc = {
            "check_name": rep.check_name,
            "params": rep.params,
            "fitted_constants": rep.fitted_constants,
            "max_ratio": rep.max_ratio,
            "pass": rep.passed,
            "details_csv_path": csv_path,
        }
        cfgmod.atomic_write(
            os.path.join(out_dir, slug + ".json"),
            json.dumps(doc, indent=2, sort_keys=True) + "\n",
        )


def _cmd_verify(args) -> int:
    cfg = cfgmod.parse_config_file(args.config) if args.config else None
    base_dir = os.path.dirname(os.path.abspath(args.config)) if args.config else "."
    options, effective = cfgmod.build_verify_options(cfg, base_dir)
    req = VerifyRequest(suite=args.suite, options=options)
    if args.server:
        resp = VerifyResponse.model_validate(
            _post(args.server, "/verify", req.model_dump(mode="json"))
        )
    else:
        resp = handlers.run_verify(req)
    _write_reports(args.out_dir, resp.reports)
    _write_effective(os.path.join(args.out_dir, "effective.cfg"), effective)
    n_pass = sum(1 for r in resp.reports if r.passed)
    for rep in resp.reports:
        print(f"{'PASS' if rep.passed else 'FAIL'}  {rep.check_name}")
    print(f"{args.suite}: {n_pass}/{len(resp.reports)} checks passed")
    return 0 if resp.all_passed else 2


def _cmd_sweep(args) -> int:
    cfg = cfgmod.parse_config_file(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    req, effective = cfgmod.build_sweep_request(
        cfg, base_dir, emit_plotdata=args.emit_plotdata
    )
    if args.server:
        resp = SweepResponse.model_validate(
            _post(args.server, "/sweep-alpha", req.model_dump(mode="json"))
        )
    else:
        resp = handlers.run_sweep(req)
    cfgmod.atomic_write(os.path.join(args.out_dir, "summary.csv"), resp.summary_csv)
    if args.emit_plotdata and resp.plotdata:
        for key, text in sorted(resp.plotdata.items()):
            cfgmod.atomic_write(os.path.join(args.out_dir, key + ".plotdata.csv"), text)
    _write_effective(os.path.join(args.out_dir, "effective.cfg"), effective)
    for fit in resp.fits:
        print(
            f"alpha={fit.alpha:g}: slope={fit.slope:.4f} "
            f"(target {fit.target:g}, |err|={fit.abs_err:.4f})"
        )
    print(f"wrote {os.path.join(args.out_dir, 'summary.csv')}")
    return 0


def _cmd_mc(args) -> int:
    cfg = cfgmod.parse_config_file(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    req, effective = cfgmod.build_mc_request(cfg, base_dir)
    if args.server:
        resp = McResponse.model_validate(
            _post(args.server, "/mc", req.model_dump(mode="json"))
        )
    else:
        resp = handlers.run_mc(req)
    cfgmod.atomic_write(args.out, resp.csv)
    _write_effective(_stem(args.out) + ".effective.cfg", effective)
    print(
        f"mc n={req.mc.n}: mean={resp.mean_hat:.8g} (se {resp.stderr_mean:.3g}), "
        f"p_zero={resp.p_zero_hat:.8g} (se {resp.stderr_p0:.3g}), "
        f"samples={resp.samples}"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_lemma27(args) -> int:
    cfg = cfgmod.parse_config_file(args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    req, effective = cfgmod.build_lemma27_request(cfg, base_dir)
    if args.server:
        resp = Lemma27Response.model_validate(
            _post(args.server, "/lemma27", req.model_dump(mode="json"))
        )
    else:
        resp = handlers.run_lemma27(req)
    cfgmod.atomic_write(args.out, resp.csv)
    doc = {
        "check_name": resp.report.check_name,
        "params": resp.report.params,
        "fitted_constants": resp.report.fitted_constants,
        "max_ratio": resp.report.max_ratio,
        "pass": resp.report.passed,
        "details_csv_path": args.out,
    }
    cfgmod.atomic_write(_stem(args.out) + ".report.json",
                        json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_effective(_stem(args.out) + ".effective.cfg", effective)
    print(
        f"scan m={req.m}, l<=:{req.l_max}: normalized max {resp.report.max_ratio:.6g} "
        f"({'stable' if resp.report.passed else 'NOT stable'} over l)"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _ArgError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, UsageError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericGuard as exc:
        print(f"numeric guard tripped: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
