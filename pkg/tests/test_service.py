import asyncio
import json

import httpx
import pytest

from coagfrag.config import builtin_configs
from coagfrag.service.app import app, create_app


def call(method: str, path: str, payload: dict | None = None) -> httpx.Response:
    async def go():
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, base_url="http://test") as client:
            if method == "GET":
                return await client.get(path)
            return await client.post(path, json=payload)

    return asyncio.run(go())


@pytest.fixture(scope="module")
def cfg_doc():
    return builtin_configs()["h4_dominated"].model_dump()


def test_health():
    r = call("GET", "/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok" and body["version"]


def test_create_app_returns_fresh_instance():
    assert create_app() is not app


class TestSimulateEndpoint:
    def test_success_bundle(self, cfg_doc):
        r = call("POST", "/simulate", {"config": cfg_doc})
        assert r.status_code == 200
        doc = r.json()
        assert doc["status"] == "ok" and doc["exit_code"] == 0
        assert set(doc["files"]) == {"moments.csv", "snapshots.csv", "steps.csv", "run.json"}
        run = json.loads(doc["files"]["run.json"])
        for key in ("config_hash", "apriori", "final_mass_residual", "wall_time_s"):
            assert key in run
        assert run["apriori"]["V1"] is not None
        assert abs(run["final_mass_residual"]) < 1e-9

    def test_deterministic_bodies(self, cfg_doc):
        a = call("POST", "/simulate", {"config": cfg_doc}).json()["files"]
        b = call("POST", "/simulate", {"config": cfg_doc}).json()["files"]
        for name in ("moments.csv", "snapshots.csv", "steps.csv"):
            assert a[name] == b[name]

    def test_range_refusal_is_validation_failure(self, cfg_doc):
        bad = json.loads(json.dumps(cfg_doc))
        bad["kernels"]["nu"] = -1.0
        r = call("POST", "/simulate", {"config": bad})
        assert r.status_code == 200
        doc = r.json()
        assert doc["status"] == "validation_failure" and doc["exit_code"] == 1
        assert "run.json" in doc["files"]

    def test_malformed_document_schema_422(self):
        r = call("POST", "/simulate", {"config": {"grid": {"z_min": "oops"}}})
        assert r.status_code == 422

    def test_overflowed_bounds_keep_run_json_strict(self):
        # enormous collision rate overflows the Gronwall exponent; the bound
        # slots go to null with the overflow flagged, never to "Infinity"
        doc = builtin_configs()["pure_breakage"].model_dump()
        doc["kernels"]["k2"] = 1e6
        out = call("POST", "/simulate", {"config": doc}).json()
        assert out["status"] == "ok"
        run = json.loads(out["files"]["run.json"])
        assert run["apriori"] == {"V": None, "V1": None, "overflowed": True}
        assert "Infinity" not in out["files"]["run.json"]
        assert abs(run["final_mass_residual"]) < 1e-9

    def test_allow_unvalidated_runs_out_of_range_parameters(self, cfg_doc):
        loose = json.loads(json.dumps(cfg_doc))
        loose["kernels"]["omega"] = 1.2  # outside the guaranteed range
        refused = call("POST", "/simulate", {"config": loose}).json()
        assert refused["status"] == "validation_failure"
        forced = call("POST", "/simulate", {"config": loose, "allow_unvalidated": True}).json()
        assert forced["status"] == "ok" and forced["exit_code"] == 0

    def test_header_carries_grid_summary(self, cfg_doc):
        doc = call("POST", "/simulate", {"config": cfg_doc}).json()
        head = doc["files"]["moments.csv"].splitlines()[:3]
        assert head[1].startswith("# config_hash=")
        assert "z_min=" in head[2] and "cells=" in head[2] and "ratio=" in head[2]

    def test_extra_moment_orders_become_columns(self, cfg_doc):
        custom = json.loads(json.dumps(cfg_doc))
        custom["outputs"]["moment_orders"] = [1.5]
        doc = call("POST", "/simulate", {"config": custom}).json()
        header = [
            l for l in doc["files"]["moments.csv"].splitlines() if not l.startswith("#")
        ][0]
        assert header == "t,M0,M1,M2,M1.5,mass_residual"

    def test_snapshot_columns_present(self, cfg_doc):
        custom = json.loads(json.dumps(cfg_doc))
        custom["time"]["snapshot_times"] = [0.5, 1.0]
        doc = call("POST", "/simulate", {"config": custom}).json()
        header = [
            l for l in doc["files"]["snapshots.csv"].splitlines() if not l.startswith("#")
        ][0]
        assert header == "z,g_initial,g_t0.5,g_t1"


class TestValidateKernelsEndpoint:
    def test_pass_and_fail_classification(self, cfg_doc):
        r = call("POST", "/validate-kernels", {"config": cfg_doc})
        doc = r.json()
        names = {h["name"]: h["passed"] for h in doc["hypotheses"]}
        assert names["H4"] is True

        bad = json.loads(json.dumps(cfg_doc))
        bad["kernels"]["k1"] = 0.1
        bad["kernels"]["k2"] = 1.0
        doc = call("POST", "/validate-kernels", {"config": bad}).json()
        names = {h["name"]: h for h in doc["hypotheses"]}
        assert names["H4"]["passed"] is False
        assert names["H4"]["witness"] is not None
        assert doc["exit_code"] == 1


class TestStudyEndpoints:
    def test_converge_rows(self):
        cfg = builtin_configs()["mixed"].model_dump()
        doc = call("POST", "/converge", {"config": cfg, "doublings": 2}).json()
        assert doc["status"] == "ok"
        body = [l for l in doc["files"]["truncation.csv"].splitlines() if not l.startswith("#")]
        assert body[0] == "level,n,distance"
        assert len(body) == 3  # header + 2 doublings

    def test_perturb_trace(self):
        cfg = builtin_configs()["mixed"].model_dump()
        doc = call("POST", "/perturb", {"config": cfg, "delta": 1e-3}).json()
        assert doc["status"] == "ok"
        assert doc["summary"]["envelope_ok"] is True
        body = [l for l in doc["files"]["perturbation.csv"].splitlines() if not l.startswith("#")]
        assert body[0] == "t,u"
        assert len(body) > 10

    def test_oracle_endpoint(self):
        doc = call("POST", "/oracle", {"cases": 24, "seed": 7}).json()
        assert doc["status"] == "ok" and doc["exit_code"] == 0
        assert doc["summary"]["oracle"]["failures"] == 0
