"""Entity-level hallucination detection for citation reliability.

Generated text G is checked against reference text R: entities are extracted
from both by every model in the configured model set, each generated entity
gets a match score against the reference, and the verdict flips to
"hallucination present" as soon as any score falls below the threshold.

Scoring: an exact (normalized-surface) match is a hard match worth 1.0;
otherwise the score is the mean of an embedding similarity and a normalized
BM25 score, both in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .bm25 import Bm25Index, DEFAULT_B, DEFAULT_K1
from .providers import Entity, NerRegistry, ProviderSet, cosine
from .records import dumps_canonical
from .retrieve import Sentence, segment_sentences, segmentation_lang
from .textutils import sha256_hex

DEFAULT_THRESHOLD = 0.6

ROLE_REFERENCE = "reference"
ROLE_GENERATED = "generated"

VERDICT_HALLUCINATION = "hallucination_present"
VERDICT_CLEAN = "no_hallucination"


@dataclass
class HdacrConfig:
    model_set: tuple[str, ...] = ("caps-rules",)
    threshold: float = DEFAULT_THRESHOLD
    embedder_id: str = "fallback-trigram"
    bm25_k1: float = DEFAULT_K1
    bm25_b: float = DEFAULT_B
    # Soft embedding score compares entity<->entity by default; "sentence"
    # compares the entity against whole reference sentences instead.
    sbert_compare: str = "entity"

    def __post_init__(self) -> None:
        if not self.model_set:
            raise ValueError("model set must be non-empty")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.sbert_compare not in ("entity", "sentence"):
            raise ValueError(f"unknown sbert_compare {self.sbert_compare!r}")


@dataclass
class EntitySet:
    source_role: str
    entities: list[Entity] = field(default_factory=list)

    def surfaces(self) -> list[str]:
        return [e.surface for e in self.entities]


@dataclass(frozen=True)
class MatchScore:
    entity: Entity
    kind: str  # hard | soft
    gamma: float
    gamma_sbert: float | None = None
    gamma_bm25: float | None = None
    best_reference_entity: str | None = None


@dataclass
class HallucinationReport:
    verdict: str
    scores: list[MatchScore]
    unverifiable: list[MatchScore]
    threshold: float
    reference_digest: str
    generated_digest: str

    def to_dict(self) -> dict:
        def score_dict(s: MatchScore) -> dict:
            return {
                "best_reference_entity": s.best_reference_entity,
                "gamma": s.gamma,
                "gamma_bm25": s.gamma_bm25,
                "gamma_sbert": s.gamma_sbert,
                "kind": s.kind,
                "label": s.entity.label,
                "model": s.entity.model,
                "span": list(s.entity.span),
                "surface": s.entity.surface,
            }

        return {
            "generated_digest": self.generated_digest,
            "reference_digest": self.reference_digest,
            "scores": [score_dict(s) for s in self.scores],
            "threshold": self.threshold,
            "unverifiable": [score_dict(s) for s in self.unverifiable],
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())


def extract_entities(text: str, role: str, config: HdacrConfig, ner: NerRegistry) -> EntitySet:
    """Union of every model's entities, surface-normalized and deduplicated;
    the first extraction of a surface keeps its span and model attribution."""
    if not text:
        raise ValueError("text must be non-empty")
    seen: set[str] = set()
    kept: list[Entity] = []
    for model in config.model_set:
        for entity in ner.extract(text, model):
            normalized = entity.normalized()
            if not normalized or normalized in seen:
                continue
            seen.add(normalized)
            kept.append(Entity(normalized, entity.span, entity.label, entity.model))
    return EntitySet(source_role=role, entities=kept)


def build_reference_index(ref_sentences: Sequence[Sentence], config: HdacrConfig) -> Bm25Index:
    return Bm25Index([s.text for s in ref_sentences], k1=config.bm25_k1, b=config.bm25_b)


def entity_match_score(
    entity: Entity,
    reference_set: EntitySet,
    ref_sentences: Sequence[Sentence],
    embedder,
    bm25_index: Bm25Index,
    config: HdacrConfig,
) -> MatchScore:
    ref_surfaces = reference_set.surfaces()
    if entity.surface in ref_surfaces:
        return MatchScore(entity, "hard", 1.0, best_reference_entity=entity.surface)

    if config.sbert_compare == "sentence":
        candidates = [s.text for s in ref_sentences]
    else:
        candidates = ref_surfaces
    gamma_sbert = 0.0
    best_ref: str | None = None
    if candidates:
        vectors = embedder.embed([entity.surface] + list(candidates))
        entity_vec = vectors[0]
        sims = [max(0.0, cosine(entity_vec, vec)) for vec in vectors[1:]]
        gamma_sbert = max(sims)
        if config.sbert_compare == "entity":
            best_ref = ref_surfaces[sims.index(gamma_sbert)]  # ties -> first

    gamma_bm25 = bm25_index.best_normalized(entity.surface)
    gamma = (gamma_sbert + gamma_bm25) / 2.0
    return MatchScore(entity, "soft", gamma, gamma_sbert, gamma_bm25, best_ref)


def detect(generated: str, reference: str, config: HdacrConfig, providers: ProviderSet) -> HallucinationReport:
    """Score every generated-content entity against the reference; the
    verdict is "hallucination present" iff some score is below the threshold
    (an entity-free generation passes vacuously)."""
    if not generated or not reference:
        raise ValueError("generated and reference text must be non-empty")
    reference_set = extract_entities(reference, ROLE_REFERENCE, config, providers.ner)
    generated_set = extract_entities(generated, ROLE_GENERATED, config, providers.ner)
    ref_sentences = segment_sentences(reference, segmentation_lang(reference))
    bm25_index = build_reference_index(ref_sentences, config)

    scores = [
        entity_match_score(entity, reference_set, ref_sentences, providers.embedder, bm25_index, config)
        for entity in generated_set.entities
    ]
    unverifiable = [s for s in scores if s.gamma < config.threshold]
    return HallucinationReport(
        verdict=VERDICT_HALLUCINATION if unverifiable else VERDICT_CLEAN,
        scores=scores,
        unverifiable=unverifiable,
        threshold=config.threshold,
        reference_digest=sha256_hex(reference),
        generated_digest=sha256_hex(generated),
    )
