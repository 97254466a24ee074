import json
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from lfag_sidecar import SidecarConfig, create_app

SCHEMA_DIR = Path(__file__).parents[2] / "schemas"


def load_schema(name: str) -> dict:
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def schemas() -> dict:
    return {
        name: load_schema(name)
        for name in (
            "embed_request",
            "embed_response",
            "ner_request",
            "ner_response",
            "generate_request",
            "generate_response",
            "health_response",
            "error_response",
            "hallucination_report",
        )
    }


@pytest.fixture()
def client() -> TestClient:
    config = SidecarConfig(generation_backend="echo")
    return TestClient(create_app(config), raise_server_exceptions=False)
