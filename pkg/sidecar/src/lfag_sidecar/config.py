"""Sidecar configuration: which model backs each capability.

Model choices are configuration, not code. The deterministic builtin
backends keep the service useful (and testable) without weights or
credentials; real model ids load their libraries at startup and exit
non-zero when that fails.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

DEFAULT_EMBEDDING = "hash-trigram-256"
DEFAULT_NER_MODELS = ("caps-rules",)
GENERATION_DISABLED = "disabled"


@dataclass
class SidecarConfig:
    host: str = "127.0.0.1"
    port: int = 8601
    embedding_model: str = DEFAULT_EMBEDDING
    ner_models: tuple[str, ...] = DEFAULT_NER_MODELS
    generation_backend: str = GENERATION_DISABLED
    max_batch_size: int = 64
    bearer_token: str | None = None

    def __post_init__(self) -> None:
        capabilities = [
            bool(self.embedding_model),
            bool(self.ner_models),
            self.generation_backend != GENERATION_DISABLED,
        ]
        if not any(capabilities):
            raise ValueError("at least one capability must be enabled")
        if self.max_batch_size < 1:
            raise ValueError("max_batch_size must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "SidecarConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            host=data.get("host", "127.0.0.1"),
            port=int(data.get("port", 8601)),
            embedding_model=data.get("embedding_model", DEFAULT_EMBEDDING),
            ner_models=tuple(data.get("ner_models", DEFAULT_NER_MODELS)),
            generation_backend=data.get("generation_backend", GENERATION_DISABLED),
            max_batch_size=int(data.get("max_batch_size", 64)),
            bearer_token=data.get("bearer_token"),
        )

    def enabled_models(self) -> list[str]:
        models = []
        if self.embedding_model:
            models.append(self.embedding_model)
        models.extend(self.ner_models)
        if self.generation_backend != GENERATION_DISABLED:
            models.append(self.generation_backend)
        return models
