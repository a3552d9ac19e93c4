import json

import pytest
from click.testing import CliRunner

from congait.cli import main
from test_server import gait_text

RATINGS = {
    "Explainability": 2, "Openness to Contestation": 2, "Traceability": 9,
    "Built-in Safeguards": 1, "Adaptivity": 2, "Auditing": 2,
    "Ease of Contestation": 9, "Explanation Quality": 42,
}


@pytest.fixture
def env(tmp_path):
    config = {"store_root": str(tmp_path / "store-root"), "port": 8099}
    config_path = tmp_path / "congait.json"
    config_path.write_text(json.dumps(config))
    walk = tmp_path / "walk.vgrf"
    walk.write_text(gait_text(30.0))
    return {"config": str(config_path), "walk": str(walk), "tmp": tmp_path}


def invoke(env, *args):
    return CliRunner().invoke(main, ["--config", env["config"], *args])


class TestCli:
    def test_ingest_then_run(self, env):
        result = invoke(env, "ingest", env["walk"], "--patient", "p1",
                        "--session", "s1", "--cohort", "PD",
                        "--date", "2026-01-05")
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["window_count"] == 3

        result = invoke(env, "run", "s1")
        assert result.exit_code == 0, result.output
        assert "3 windows (3 new)" in result.output
        assert "stage" in result.output

    def test_ingest_rejects_malformed(self, env):
        bad = env["tmp"] / "bad.vgrf"
        bad.write_text("0.0 1 2\n")
        result = invoke(env, "ingest", str(bad), "--patient", "p1",
                        "--session", "sx", "--cohort", "PD")
        assert result.exit_code != 0
        assert "19 columns" in result.output

    def test_cas_command(self, env):
        ratings = env["tmp"] / "ratings.json"
        ratings.write_text(json.dumps({"ratings": RATINGS}))
        result = invoke(env, "cas", str(ratings))
        assert result.exit_code == 0, result.output
        assert "total: 0.970" in result.output

    def test_audit_verify_and_export(self, env):
        invoke(env, "ingest", env["walk"], "--patient", "p1", "--session", "s1",
               "--cohort", "PD")
        result = invoke(env, "audit", "verify")
        assert result.exit_code == 0
        assert result.output.startswith("Ok")

        result = invoke(env, "export-audit", "0", "0")
        assert result.exit_code == 0
        bundle = json.loads(result.output)
        assert bundle["entries"][0]["event_kind"] == "SessionIngested"

    def test_serve_refuses_tampered_store_with_exit_3(self, env):
        invoke(env, "ingest", env["walk"], "--patient", "p1", "--session", "s1",
               "--cohort", "PD")
        log_path = env["tmp"] / "store-root" / "store" / "audit.log"
        data = bytearray(log_path.read_bytes())
        data[len(data) // 3] ^= 0x01
        log_path.write_bytes(bytes(data))

        result = invoke(env, "serve")
        assert result.exit_code == 3
        assert "refusing to start" in result.output

        result = invoke(env, "audit", "verify")
        assert result.exit_code == 1
        assert "FAILED" in result.output
