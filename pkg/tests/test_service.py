import json
import math

import pytest
from fastapi.testclient import TestClient

import drlab
from drlab.service.app import _LenientJSONResponse, create_app
from drlab.service.handlers import run_evolve
from drlab.service.schemas import EvolveRequest


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(), raise_server_exceptions=False)


class TestHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["version"] == drlab.__version__


class TestEvolveRoute:
    PAYLOAD = {
        "model": {"m": 2},
        "initial": {"kind": "two_point", "a": 2},
        "evolve": {"n_max": 8, "k_derivatives": 2, "tail_epsilon": 1e-16},
    }

    def test_matches_local_handler_exactly(self, client):
        resp = client.post("/evolve", json=self.PAYLOAD)
        assert resp.status_code == 200
        body = resp.json()
        local = run_evolve(EvolveRequest(**self.PAYLOAD))
        assert body["trace_csv"] == local.trace_csv
        assert body["final_log_pi"] == local.final_log_pi
        assert body["n_max"] == 8
        assert body["plotdata"] is None

    def test_plotdata_on_request(self, client):
        payload = dict(self.PAYLOAD, emit_plotdata=True)
        resp = client.post("/evolve", json=payload)
        assert resp.status_code == 200
        plot = resp.json()["plotdata"]
        lines = plot.strip().split("\n")
        # headerless two-column (log n, log product) rows for n = 1..n_max
        assert len(lines) == self.PAYLOAD["evolve"]["n_max"]
        first = lines[0].split(" ")
        assert float(first[0]) == 0.0

    def test_usage_error_maps_to_400(self, client):
        payload = {
            "initial": {"kind": "stable", "alpha": 5.0, "K": 100},
            "evolve": {"n_max": 2},
        }
        resp = client.post("/evolve", json=payload)
        assert resp.status_code == 400
        body = resp.json()
        assert body["error_kind"] == "usage"
        assert "tail exponent" in body["message"]

    def test_numeric_guard_maps_to_500(self, client):
        payload = {
            "initial": {"kind": "two_point", "a": 2},
            "evolve": {"n_max": 30, "support_cap": 8},
        }
        resp = client.post("/evolve", json=payload)
        assert resp.status_code == 500
        body = resp.json()
        assert body["error_kind"] == "numeric_guard"
        assert isinstance(body["generation"], int)

    def test_malformed_request_maps_to_422(self, client):
        resp = client.post("/evolve", json={"evolve": {"n_max": 4}})
        assert resp.status_code == 422
        resp = client.post("/verify", json={"suite": "nonsense"})
        assert resp.status_code == 422


class TestVerifyRoute:
    def test_quick_suite_passes(self, client):
        payload = {
            "suite": "lemma27",
            "options": {"lemma27_m_list": [2], "lemma27_l_max": 9},
        }
        resp = client.post("/verify", json=payload)
        assert resp.status_code == 200
        body = resp.json()
        assert body["suite"] == "lemma27"
        assert body["all_passed"] is True
        assert [r["check_name"] for r in body["reports"]] == ["lemma27[m2]"]
        assert body["reports"][0]["passed"] is True


class TestSweepRoute:
    def test_single_alpha_quick(self, client):
        payload = {
            "alphas": [3.0],
            "K": 500,
            "n_max": 64,
            "n_lo": 8,
            "n_hi": 32,
            "tail_epsilon": 1e-15,
        }
        resp = client.post("/sweep-alpha", json=payload)
        assert resp.status_code == 200
        body = resp.json()
        assert body["summary_csv"].splitlines()[0] == (
            "alpha,slope,target,abs_err,n_lo,n_hi"
        )
        (fit,) = body["fits"]
        assert fit["target"] == 1.0
        assert math.isfinite(fit["slope"])

    def test_empty_alphas_rejected(self, client):
        resp = client.post("/sweep-alpha", json={"alphas": []})
        assert resp.status_code == 400
        assert resp.json()["error_kind"] == "usage"


class TestMcRoute:
    def test_estimate(self, client):
        payload = {
            "initial": {"kind": "point", "k": 1},
            "mc": {"n": 3, "samples": 250, "seed": 7},
        }
        resp = client.post("/mc", json=payload)
        assert resp.status_code == 200
        body = resp.json()
        assert body["mean_hat"] == 1.0
        assert body["p_zero_hat"] == 0.0
        assert body["csv"].startswith("n,samples,seed,")

    def test_tree_too_deep_is_usage(self, client):
        payload = {
            "initial": {"kind": "point", "k": 1},
            "mc": {"n": 40, "samples": 1, "seed": 7},
        }
        resp = client.post("/mc", json=payload)
        assert resp.status_code == 400
        assert resp.json()["error_kind"] == "usage"


class TestLemma27Route:
    def test_scan(self, client):
        payload = {"m": 2, "l_max": 9, "y_list": [6.0]}
        resp = client.post("/lemma27", json=payload)
        assert resp.status_code == 200
        body = resp.json()
        assert body["report"]["passed"] is True
        header = body["csv"].splitlines()[0]
        assert header.split(",")[:2] == ["l", "y"]

    def test_hypothesis_violation_is_400(self, client):
        resp = client.post("/lemma27", json={"m": 2, "l_max": 9, "y_list": [5.0]})
        assert resp.status_code == 400


class TestLenientJson:
    def test_non_finite_floats_serialize(self):
        payload = {"gamma": math.inf, "ok": 1.5}
        raw = _LenientJSONResponse(content=payload).body
        parsed = json.loads(raw)
        assert parsed["gamma"] == math.inf
        assert parsed["ok"] == 1.5
