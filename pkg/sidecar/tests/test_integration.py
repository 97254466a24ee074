"""End-to-end: a live sidecar on localhost serving the primary toolkit's CLI.

The primary is driven purely through its external interfaces (the ``lfag``
command with the sidecar endpoint flag); downstream reports must stay valid
against the shared schemas whichever provider backend produced them.
"""

import json
import socket
import subprocess
import sys
import threading
import time

import jsonschema
import pytest
import uvicorn

from lfag_sidecar import SidecarConfig, create_app


@pytest.fixture(scope="module")
def live_sidecar():
    port = _free_port()
    config = SidecarConfig(port=port, generation_backend="echo")
    server = uvicorn.Server(
        uvicorn.Config(create_app(config), host="127.0.0.1", port=port, log_level="error")
    )
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 10
    import requests

    url = f"http://127.0.0.1:{port}"
    while time.monotonic() < deadline:
        try:
            if requests.get(f"{url}/health", timeout=0.5).status_code == 200:
                break
        except requests.RequestException:
            time.sleep(0.05)
    else:
        raise RuntimeError("sidecar did not come up")
    yield url
    server.should_exit = True
    thread.join(timeout=5)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _run_cli(args, env_extra=None):
    import os

    env = dict(os.environ)
    env.update(env_extra or {})
    return subprocess.run(
        [sys.executable, "-m", "lfag.cli", *args],
        capture_output=True,
        text=True,
        env=env,
        timeout=120,
    )


def _detection_report(tmp_path, url_args, name):
    generated = tmp_path / f"{name}-g.txt"
    reference = tmp_path / f"{name}-r.txt"
    generated.write_text("AlphaGo visited Zanzibar with Fan Hui.", encoding="utf-8")
    reference.write_text(
        "AlphaGo beat Fan Hui in London. The program was built by DeepMind.", encoding="utf-8"
    )
    out = tmp_path / f"{name}.json"
    result = _run_cli(
        [*url_args, "hdacr", "--generated", str(generated), "--reference", str(reference), "--out", str(out)]
    )
    assert result.returncode == 0, result.stderr
    return json.loads(out.read_text(encoding="utf-8"))


def test_primary_cli_reports_schema_valid_with_sidecar(live_sidecar, tmp_path):
    schema = json.loads(
        (__import__("pathlib").Path(__file__).parents[2] / "schemas" / "hallucination_report.schema.json")
        .read_text(encoding="utf-8")
    )
    sidecar_report = _detection_report(
        tmp_path, ["--providers", "sidecar", "--endpoint", live_sidecar], "sidecar"
    )
    fallback_report = _detection_report(tmp_path, ["--providers", "fallback"], "fallback")

    jsonschema.validate(sidecar_report, schema)
    jsonschema.validate(fallback_report, schema)
    # swapping backends changes values, never shapes
    assert sidecar_report.keys() == fallback_report.keys()
    assert {s["surface"] for s in sidecar_report["scores"]} == {
        s["surface"] for s in fallback_report["scores"]
    }
    assert sidecar_report["verdict"] in ("hallucination_present", "no_hallucination")


def test_sidecar_env_var_selects_endpoint(live_sidecar, tmp_path):
    # DEFINE_SIDECAR_URL alone must be enough to reach the service
    generated = tmp_path / "env-g.txt"
    reference = tmp_path / "env-r.txt"
    generated.write_text("AlphaGo beat Fan Hui.", encoding="utf-8")
    reference.write_text("AlphaGo beat Fan Hui in London.", encoding="utf-8")
    out = tmp_path / "env.json"
    result = _run_cli(
        ["--providers", "sidecar", "hdacr", "--generated", str(generated),
         "--reference", str(reference), "--out", str(out)],
        env_extra={"DEFINE_SIDECAR_URL": live_sidecar},
    )
    assert result.returncode == 0, result.stderr
    assert json.loads(out.read_text(encoding="utf-8"))["verdict"] == "no_hallucination"


def test_sidecar_down_is_runtime_error(tmp_path):
    generated = tmp_path / "g.txt"
    reference = tmp_path / "r.txt"
    generated.write_text("AlphaGo.", encoding="utf-8")
    reference.write_text("AlphaGo beat Fan Hui.", encoding="utf-8")
    out = tmp_path / "never.json"
    result = _run_cli(
        ["--providers", "sidecar", "--endpoint", "http://127.0.0.1:9",
         "hdacr", "--generated", str(generated), "--reference", str(reference), "--out", str(out)]
    )
    assert result.returncode == 2
    assert not out.exists()
