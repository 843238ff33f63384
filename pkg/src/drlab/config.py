"""Flat ``key = value`` run configs with dotted sections.

The format is line-based: blank lines and ``#`` comments are ignored; every
other line must be ``section.key = value``.  Unknown or duplicate keys are
errors — configs are experiment records, so silent tolerance would hide
typos.  ``docs/config_schema.txt`` documents every key.

Builders turn a parsed mapping into a request model plus the *effective*
config: the complete key set (defaults filled in) whose serialization
re-parses to an identical request, so a run can be reproduced float-exactly
from the file the run itself wrote.
"""

from __future__ import annotations

import os
import tempfile
from typing import Optional, Sequence

from .errors import ConfigError
from .service.schemas import (
    EvolveRequest,
    EvolveSpec,
    InitialSpec,
    Lemma27Request,
    McRequest,
    McSpec,
    ModelSpec,
    SweepRequest,
    VerifyOptions,
)

__all__ = [
    "parse_config_text",
    "parse_config_file",
    "render_config",
    "atomic_write",
    "build_evolve_request",
    "build_mc_request",
    "build_sweep_request",
    "build_lemma27_request",
    "build_verify_options",
]

_REQUIRED = object()


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or any(c.isspace() for c in key):
            raise ConfigError(f"line {lineno}: bad key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_config_file(path: str) -> dict[str, str]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    return parse_config_text(text)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def render_config(pairs: dict) -> str:
    lines = [f"{k} = {_fmt_value(v)}" for k, v in sorted(pairs.items())]
    return "\n".join(lines) + "\n"


def atomic_write(path: str, text: str) -> None:
    """Write via a temp file + rename so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


class _View:
    """Typed accessor over a parsed config with unknown-key detection."""

    def __init__(self, mapping: dict[str, str], base_dir: str = "."):
        self.mapping = mapping
        self.base_dir = base_dir
        self.used: set[str] = set()

    def _raw(self, key: str, default):
        if key in self.mapping:
            self.used.add(key)
            return self.mapping[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        return None

    def str_(self, key: str, default=_REQUIRED, choices: Optional[Sequence[str]] = None):
        raw = self._raw(key, default)
        value = default if raw is None else raw
        if choices is not None and value not in choices:
            raise ConfigError(f"{key}: expected one of {sorted(choices)}, got {value!r}")
        return value

    def int_(self, key: str, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected integer, got {raw!r}") from exc

    def float_(self, key: str, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected number, got {raw!r}") from exc

    def bool_(self, key: str, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        low = raw.lower()
        if low in ("true", "false"):
            return low == "true"
        raise ConfigError(f"{key}: expected true/false, got {raw!r}")

    def float_list(self, key: str, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return list(default)
        try:
            return [float(part) for part in raw.split(",") if part.strip() != ""]
        except ValueError as exc:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from exc

    def int_list(self, key: str, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return list(default)
        try:
            return [int(part) for part in raw.split(",") if part.strip() != ""]
        except ValueError as exc:
            raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from exc

    def path_(self, key: str, default=_REQUIRED):
        raw = self._raw(key, default)
        if raw is None:
            return default
        return os.path.abspath(os.path.join(self.base_dir, raw))

    def finish(self) -> None:
        unknown = sorted(set(self.mapping) - self.used)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def _read_raw_probs(path: str) -> list[float]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read raw-law file {path!r}: {exc}") from exc
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(t for t in line.replace(",", " ").split() if t)
    if not tokens:
        raise ConfigError(f"raw-law file {path!r} holds no probabilities")
    try:
        return [float(t) for t in tokens]
    except ValueError as exc:
        raise ConfigError(f"raw-law file {path!r}: non-numeric entry") from exc


_BASE_KINDS = ("point", "two_point", "raw", "stable")


def _initial_from(view: _View) -> tuple[InitialSpec, dict]:
    kind = view.str_("initial.kind", choices=_BASE_KINDS + ("truncated",))
    exact = view.bool_("initial.exact", False)
    eff: dict = {"initial.kind": kind, "initial.exact": exact}
    fields: dict = {"kind": kind, "exact": exact}

    def need_point():
        fields["k"] = eff["initial.k"] = view.int_("initial.k")

    def need_two_point():
        fields["a"] = eff["initial.a"] = view.int_("initial.a", 2)

    def need_raw():
        path = view.path_("initial.raw_file")
        eff["initial.raw_file"] = path
        fields["raw_probs"] = _read_raw_probs(path)

    def need_stable():
        fields["alpha"] = eff["initial.alpha"] = view.float_("initial.alpha")
        fields["K"] = eff["initial.K"] = view.int_("initial.K")

    if kind == "point":
        need_point()
    elif kind == "two_point":
        need_two_point()
    elif kind == "raw":
        need_raw()
    elif kind == "stable":
        need_stable()
    else:  # truncated
        base = view.str_("initial.base", choices=_BASE_KINDS)
        fields["base"] = eff["initial.base"] = base
        fields["M"] = eff["initial.M"] = view.int_("initial.M")
        mode = view.str_(
            "initial.truncation_mode", "stable", choices=("stable", "finite_variance")
        )
        fields["truncation_mode"] = eff["initial.truncation_mode"] = mode
        if base == "point":
            need_point()
        elif base == "two_point":
            need_two_point()
        elif base == "raw":
            need_raw()
        else:
            need_stable()
        if mode == "stable" and "alpha" not in fields:
            # non-stable bases still need the tail exponent for the theta witness
            fields["alpha"] = eff["initial.alpha"] = view.float_("initial.alpha")
    return InitialSpec(**fields), eff


def _model_from(view: _View) -> tuple[ModelSpec, dict]:
    m = view.int_("model.m", 2)
    return ModelSpec(m=m), {"model.m": m}


def _evolve_from(view: _View) -> tuple[EvolveSpec, dict]:
    spec = EvolveSpec(
        n_max=view.int_("evolve.n_max", 30),
        tail_epsilon=view.float_("evolve.tail_epsilon", 1e-14),
        support_cap=view.int_("evolve.support_cap", 5_000_000),
        conv_strategy=view.str_(
            "evolve.conv_strategy", "auto", choices=("direct", "transform", "auto")
        ),
        k_derivatives=view.int_("evolve.k_derivatives", 8),
        record_laws=view.bool_("evolve.record_laws", False),
    )
    eff = {
        "evolve.n_max": spec.n_max,
        "evolve.tail_epsilon": spec.tail_epsilon,
        "evolve.support_cap": spec.support_cap,
        "evolve.conv_strategy": spec.conv_strategy,
        "evolve.k_derivatives": spec.k_derivatives,
        "evolve.record_laws": spec.record_laws,
    }
    return spec, eff


def build_evolve_request(
    cfg: dict[str, str], base_dir: str = ".", emit_plotdata: bool = False
) -> tuple[EvolveRequest, dict]:
    view = _View(cfg, base_dir)
    model, eff_m = _model_from(view)
    initial, eff_i = _initial_from(view)
    evolve_spec, eff_e = _evolve_from(view)
    view.finish()
    req = EvolveRequest(
        model=model, initial=initial, evolve=evolve_spec, emit_plotdata=emit_plotdata
    )
    return req, {**eff_m, **eff_i, **eff_e}


def build_mc_request(cfg: dict[str, str], base_dir: str = ".") -> tuple[McRequest, dict]:
    view = _View(cfg, base_dir)
    model, eff_m = _model_from(view)
    initial, eff_i = _initial_from(view)
    if "mc.seed" not in cfg:
        raise ConfigError("mc.seed is required: sampling runs must be replayable")
    spec = McSpec(
        n=view.int_("mc.n"),
        samples=view.int_("mc.samples"),
        seed=view.int_("mc.seed"),
        workers=view.int_("mc.workers", 1),
    )
    view.finish()
    eff = {
        **eff_m,
        **eff_i,
        "mc.n": spec.n,
        "mc.samples": spec.samples,
        "mc.seed": spec.seed,
        "mc.workers": spec.workers,
    }
    return McRequest(model=model, initial=initial, mc=spec), eff


def build_sweep_request(
    cfg: dict[str, str], base_dir: str = ".", emit_plotdata: bool = False
) -> tuple[SweepRequest, dict]:
    view = _View(cfg, base_dir)
    model, eff_m = _model_from(view)
    req = SweepRequest(
        model=model,
        alphas=view.float_list("sweep.alphas"),
        K=view.int_("sweep.K", 100_000),
        n_max=view.int_("sweep.n_max", 512),
        n_lo=view.int_("sweep.n_lo", 64),
        n_hi=view.int_("sweep.n_hi", 512),
        tail_epsilon=view.float_("sweep.tail_epsilon", 1e-14),
        support_cap=view.int_("sweep.support_cap", 5_000_000),
        emit_plotdata=emit_plotdata,
    )
    view.finish()
    eff = {
        **eff_m,
        "sweep.alphas": req.alphas,
        "sweep.K": req.K,
        "sweep.n_max": req.n_max,
        "sweep.n_lo": req.n_lo,
        "sweep.n_hi": req.n_hi,
        "sweep.tail_epsilon": req.tail_epsilon,
        "sweep.support_cap": req.support_cap,
    }
    return req, eff


def build_lemma27_request(
    cfg: dict[str, str], base_dir: str = "."
) -> tuple[Lemma27Request, dict]:
    view = _View(cfg, base_dir)
    req = Lemma27Request(
        m=view.int_("lemma27.m", 2),
        l_max=view.int_("lemma27.l_max", 14),
        y_list=view.float_list("lemma27.y_list"),
    )
    view.finish()
    eff = {"lemma27.m": req.m, "lemma27.l_max": req.l_max, "lemma27.y_list": req.y_list}
    return req, eff


def build_verify_options(cfg: Optional[dict[str, str]], base_dir: str = ".") -> tuple[VerifyOptions, dict]:
    view = _View(cfg or {}, base_dir)
    defaults = VerifyOptions()
    fields: dict = {}
    for name, value in defaults.model_dump().items():
        key = f"verify.{name}"
        if isinstance(value, bool):
            fields[name] = view.bool_(key, value)
        elif isinstance(value, int):
            fields[name] = view.int_(key, value)
        elif isinstance(value, float):
            fields[name] = view.float_(key, value)
        elif isinstance(value, list):
            fields[name] = (
                view.int_list(key, value)
                if all(isinstance(x, int) for x in value)
                else view.float_list(key, value)
            )
        else:  # pragma: no cover - no other field types declared
            fields[name] = view.str_(key, value)
    view.finish()
    opts = VerifyOptions(**fields)
    eff = {f"verify.{name}": value for name, value in opts.model_dump().items()}
    return opts, eff
