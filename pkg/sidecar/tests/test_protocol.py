import math
import random

import jsonschema
import pytest
from fastapi.testclient import TestClient

from lfag_sidecar import SidecarConfig, create_app

FIXTURE_SENTENCES = [
    "AlphaGo beat Fan Hui in London.",
    "Barack Obama visited Paris in 2009.",
    "The match was played in October 2015.",
    "DeepMind built the program in Britain.",
    "Lee Sedol studied the opening moves.",
    "Seoul National University was founded in 1946.",
    "The European Go Federation published ratings.",
    "Fan Hui analysed every game afterwards.",
    "Neural networks evaluate board positions.",
    "Monte Carlo search explores candidate moves.",
] * 5  # 50 sentences


def test_health_conforms(client, schemas):
    response = client.get("/health")
    assert response.status_code == 200
    payload = response.json()
    jsonschema.validate(payload, schemas["health_response"])
    assert "caps-rules" in payload["models"]


def test_embed_conforms_and_unit_norm(client, schemas):
    request = {"texts": ["AlphaGo", "Fan Hui", "首尔大学"]}
    jsonschema.validate(request, schemas["embed_request"])
    response = client.post("/embed", json=request)
    assert response.status_code == 200
    payload = response.json()
    jsonschema.validate(payload, schemas["embed_response"])
    assert len(payload["vectors"]) == 3
    for vector in payload["vectors"]:
        assert len(vector) == payload["dim"]
        norm = math.sqrt(sum(v * v for v in vector))
        assert abs(norm - 1.0) <= 1e-6


def test_embed_batch_equals_single(client):
    texts = ["alpha go", "fan hui", "prescription history"]
    batched = client.post("/embed", json={"texts": texts}).json()["vectors"]
    for text, batch_vector in zip(texts, batched):
        single = client.post("/embed", json={"texts": [text]}).json()["vectors"][0]
        assert all(abs(a - b) <= 1e-5 for a, b in zip(single, batch_vector))


def test_embed_batch_limit(schemas):
    config = SidecarConfig(max_batch_size=4)
    client = TestClient(create_app(config), raise_server_exceptions=False)
    response = client.post("/embed", json={"texts": ["x"] * 5})
    assert response.status_code == 400
    jsonschema.validate(response.json(), schemas["error_response"])
    assert response.json()["error"] == "E_BATCH"


def test_embed_rejects_empty_strings(client, schemas):
    response = client.post("/embed", json={"texts": [""]})
    assert response.status_code in (400, 422)
    jsonschema.validate(response.json(), schemas["error_response"])


def test_ner_conforms_and_spans_slice_fixture(client, schemas):
    for sentence in FIXTURE_SENTENCES:
        request = {"text": sentence, "model": "caps-rules"}
        jsonschema.validate(request, schemas["ner_request"])
        response = client.post("/ner", json=request)
        assert response.status_code == 200
        payload = response.json()
        jsonschema.validate(payload, schemas["ner_response"])
        for entity in payload["entities"]:
            assert sentence[entity["start"] : entity["end"]] == entity["surface"]


def test_ner_spans_non_overlapping(client):
    rng = random.Random(5)
    words = "Plain Word Capital Runs with numbers 1999 2021 and lowercase fillers".split()
    for _ in range(30):
        text = " ".join(rng.choice(words) for _ in range(rng.randint(4, 14))) + "."
        entities = client.post("/ner", json={"text": text, "model": "caps-rules"}).json()["entities"]
        spans = sorted((e["start"], e["end"]) for e in entities)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2


def test_ner_unknown_model(client, schemas):
    response = client.post("/ner", json={"text": "x", "model": "missing"})
    assert response.status_code == 404
    jsonschema.validate(response.json(), schemas["error_response"])
    assert response.json()["error"] == "E_MODEL"


def test_generate_conforms(client, schemas):
    request = {"prompt": "Please provide detailed answers with a minimum of 40 words: What is Go?"}
    jsonschema.validate(request, schemas["generate_request"])
    response = client.post("/generate", json=request)
    assert response.status_code == 200
    payload = response.json()
    jsonschema.validate(payload, schemas["generate_response"])
    assert len(payload["text"].split()) >= 40


def test_generate_deterministic(client):
    request = {"prompt": "minimum of 30 words: Tell me about AlphaGo", "seed": 7}
    first = client.post("/generate", json=request).json()["text"]
    second = client.post("/generate", json=request).json()["text"]
    assert first == second


def test_generate_disabled_by_default(schemas):
    client = TestClient(create_app(SidecarConfig()), raise_server_exceptions=False)
    response = client.post("/generate", json={"prompt": "hello"})
    assert response.status_code == 503
    jsonschema.validate(response.json(), schemas["error_response"])
    assert response.json()["error"] == "E_DISABLED"


def test_malformed_request_yields_error_shape(client, schemas):
    response = client.post("/embed", json={"wrong": 1})
    assert response.status_code == 400
    jsonschema.validate(response.json(), schemas["error_response"])
    assert response.json()["error"] == "E_SCHEMA"


def test_bearer_token_auth(schemas):
    config = SidecarConfig(bearer_token="sesame")
    client = TestClient(create_app(config), raise_server_exceptions=False)
    denied = client.get("/health")
    assert denied.status_code == 401
    jsonschema.validate(denied.json(), schemas["error_response"])
    allowed = client.get("/health", headers={"Authorization": "Bearer sesame"})
    assert allowed.status_code == 200


def test_config_requires_a_capability():
    with pytest.raises(ValueError):
        SidecarConfig(embedding_model="", ner_models=(), generation_backend="disabled")


def test_real_model_ids_fail_loudly_without_weights():
    from lfag_sidecar.backends import ModelLoadError

    with pytest.raises(ModelLoadError):
        create_app(SidecarConfig(ner_models=("flair",)))
