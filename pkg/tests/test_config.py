import math
import os

import pytest

from drlab.config import (
    atomic_write,
    build_evolve_request,
    build_lemma27_request,
    build_mc_request,
    build_sweep_request,
    build_verify_options,
    parse_config_file,
    parse_config_text,
    render_config,
)
from drlab.errors import ConfigError


class TestParser:
    def test_basic_and_comments(self):
        text = """
        # run record
        model.m = 2          # branching factor
        initial.kind = point

        initial.k = 3
        """
        cfg = parse_config_text(text)
        assert cfg == {"model.m": "2", "initial.kind": "point", "initial.k": "3"}

    def test_value_may_contain_equals(self):
        cfg = parse_config_text("note.tag = a=b")
        assert cfg["note.tag"] == "a=b"

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("a.b = 1\na.b = 2\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            parse_config_text("just some words\n")

    def test_bad_key_rejected(self):
        with pytest.raises(ConfigError, match="bad key"):
            parse_config_text("a b = 1\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config_file(str(tmp_path / "nope.cfg"))


class TestBuilders:
    def test_minimal_evolve(self):
        cfg = parse_config_text("initial.kind = two_point\n")
        req, eff = build_evolve_request(cfg)
        assert req.model.m == 2
        assert req.initial.kind == "two_point"
        assert req.initial.a == 2
        assert req.evolve.n_max == 30
        assert eff["evolve.tail_epsilon"] == 1e-14

    def test_unknown_key_rejected(self):
        cfg = parse_config_text("initial.kind = two_point\ninitial.bogus = 1\n")
        with pytest.raises(ConfigError, match="unknown config keys: initial.bogus"):
            build_evolve_request(cfg)

    def test_missing_required_key(self):
        cfg = parse_config_text("initial.kind = point\n")
        with pytest.raises(ConfigError, match="initial.k"):
            build_evolve_request(cfg)

    def test_bad_choice(self):
        cfg = parse_config_text("initial.kind = gaussian\n")
        with pytest.raises(ConfigError, match="expected one of"):
            build_evolve_request(cfg)

    def test_bad_number(self):
        cfg = parse_config_text("initial.kind = point\ninitial.k = three\n")
        with pytest.raises(ConfigError, match="expected integer"):
            build_evolve_request(cfg)

    def test_bool_parsing(self):
        cfg = parse_config_text(
            "initial.kind = two_point\nevolve.record_laws = true\n"
        )
        req, _ = build_evolve_request(cfg)
        assert req.evolve.record_laws is True
        cfg = parse_config_text(
            "initial.kind = two_point\nevolve.record_laws = yes\n"
        )
        with pytest.raises(ConfigError, match="true/false"):
            build_evolve_request(cfg)

    def test_raw_file_resolved_against_config_dir(self, tmp_path):
        (tmp_path / "law.txt").write_text("0.5 0.25 0.25  # raw probabilities\n")
        cfg = parse_config_text("initial.kind = raw\ninitial.raw_file = law.txt\n")
        req, eff = build_evolve_request(cfg, base_dir=str(tmp_path))
        assert req.initial.raw_probs == [0.5, 0.25, 0.25]
        assert eff["initial.raw_file"] == str(tmp_path / "law.txt")

    def test_raw_file_rejects_garbage(self, tmp_path):
        (tmp_path / "law.txt").write_text("0.5 cabbage\n")
        cfg = parse_config_text("initial.kind = raw\ninitial.raw_file = law.txt\n")
        with pytest.raises(ConfigError, match="non-numeric"):
            build_evolve_request(cfg, base_dir=str(tmp_path))

    def test_truncated_initial_needs_base_fields(self):
        cfg = parse_config_text(
            "initial.kind = truncated\ninitial.base = stable\ninitial.M = 32\n"
            "initial.alpha = 3.0\ninitial.K = 1000\n"
        )
        req, _ = build_evolve_request(cfg)
        assert req.initial.M == 32 and req.initial.base == "stable"
        cfg = parse_config_text("initial.kind = truncated\ninitial.base = stable\n")
        with pytest.raises(ConfigError):
            build_evolve_request(cfg)

    def test_truncated_non_stable_base_needs_alpha(self):
        cfg = parse_config_text(
            "initial.kind = truncated\ninitial.base = two_point\n"
            "initial.M = 8\ninitial.a = 2\n"
        )
        with pytest.raises(ConfigError, match="initial.alpha"):
            build_evolve_request(cfg)

    def test_mc_seed_mandatory(self):
        cfg = parse_config_text(
            "initial.kind = two_point\nmc.n = 4\nmc.samples = 100\n"
        )
        with pytest.raises(ConfigError, match="mc.seed"):
            build_mc_request(cfg)

    def test_sweep_alphas(self):
        cfg = parse_config_text("sweep.alphas = 2.5, 3.0, 3.5\nsweep.K = 500\n")
        req, eff = build_sweep_request(cfg)
        assert req.alphas == [2.5, 3.0, 3.5]
        assert req.K == 500
        assert eff["sweep.n_lo"] == 64

    def test_lemma27(self):
        cfg = parse_config_text("lemma27.y_list = 6, 12\n")
        req, _ = build_lemma27_request(cfg)
        assert req.m == 2 and req.l_max == 14 and req.y_list == [6.0, 12.0]

    def test_verify_options_mapping(self):
        cfg = parse_config_text(
            "verify.identity_tol = 1e-9\nverify.lemma27_m_list = 2\n"
            "verify.dominability_M_list = 8, 16\n"
        )
        opts, eff = build_verify_options(cfg)
        assert opts.identity_tol == 1e-9
        assert opts.lemma27_m_list == [2]
        assert opts.dominability_M_list == [8, 16]
        # untouched keys keep their defaults and land in the effective map
        assert eff["verify.eta_tol"] == opts.eta_tol

    def test_verify_options_unknown_key(self):
        cfg = parse_config_text("verify.typo_tol = 1\n")
        with pytest.raises(ConfigError, match="unknown config keys"):
            build_verify_options(cfg)

    def test_verify_options_empty_config(self):
        opts, eff = build_verify_options(None)
        assert opts.n_max == 30
        assert eff["verify.n_max"] == 30


class TestRoundTrip:
    def test_effective_config_reproduces_request(self, tmp_path):
        text = (
            "model.m = 3\n"
            "initial.kind = stable\n"
            "initial.alpha = 2.75\n"
            "initial.K = 12345\n"
            "evolve.n_max = 17\n"
            "evolve.tail_epsilon = 3.5e-15\n"
        )
        req1, eff = build_evolve_request(parse_config_text(text))
        rendered = render_config(eff)
        req2, eff2 = build_evolve_request(parse_config_text(rendered))
        assert req1 == req2
        assert eff == eff2
        # floats survive the text round-trip bit-exactly
        assert req2.evolve.tail_epsilon == 3.5e-15
        assert req2.initial.alpha == 2.75

    def test_float_rendering_is_lossless(self):
        vals = [1e-14, 0.1 + 0.2, math.pi, 1.0203244993668066, 3.5e-15]
        eff = {f"x.k{i}": v for i, v in enumerate(vals)}
        parsed = parse_config_text(render_config(eff))
        for i, v in enumerate(vals):
            assert float(parsed[f"x.k{i}"]) == v

    def test_render_bool_and_list(self):
        out = render_config({"a.flag": True, "a.ms": [1, 2, 3], "a.ys": [1.5, 2.0]})
        assert "a.flag = true" in out
        assert "a.ms = 1,2,3" in out
        assert "a.ys = 1.5,2.0" in out

    def test_mc_round_trip(self, tmp_path):
        text = (
            "initial.kind = two_point\ninitial.a = 3\n"
            "mc.n = 5\nmc.samples = 777\nmc.seed = 42\n"
        )
        req1, eff = build_mc_request(parse_config_text(text))
        req2, _ = build_mc_request(parse_config_text(render_config(eff)))
        assert req1 == req2


class TestAtomicWrite:
    def test_writes_and_overwrites(self, tmp_path):
        target = tmp_path / "out" / "file.txt"
        atomic_write(str(target), "first\n")
        assert target.read_text() == "first\n"
        atomic_write(str(target), "second\n")
        assert target.read_text() == "second\n"
        leftovers = [p for p in os.listdir(tmp_path / "out") if p.startswith(".tmp_")]
        assert leftovers == []
