"""Evaluation metrics for outlines and generated articles: heading soft
recall (soft cardinality over embedded heading paths), heading entity recall,
ROUGE-1/2/L, article-level entity recall, and the rubric-grading harness.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .providers import EmbeddingProvider, GenerationProvider, NerRegistry, cosine
from .records import OutlineRecord, dumps_canonical
from .textutils import tokenize, tokenize_chars

PATH_JOINER = " - "

RUBRIC_DIMENSIONS = (
    ("interest_level", "Interest Level", "how engaging and readable the article is"),
    ("organization", "Coherence and Organization", "how logically structured and coherent the article is"),
    ("relevance", "Relevance and Focus", "how well the article stays on its topic without digressions"),
    ("coverage", "Coverage", "how completely the article covers the important aspects of its topic"),
)

_SCORE_RE = re.compile(r"\bscore\b\s*[:：=]?\s*([1-5])\b", re.I)
_BARE_SCORE_RE = re.compile(r"^\s*([1-5])\s*$")
_PARAGRAPH_SPLIT_RE = re.compile(r"\n\s*\n")


class MetricsError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class ScoreTriple:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class RougeScores:
    rouge1: ScoreTriple
    rouge2: ScoreTriple
    rougeL: ScoreTriple

    def to_dict(self) -> dict:
        def triple(t: ScoreTriple) -> dict:
            return {"f1": t.f1, "precision": t.precision, "recall": t.recall}

        return {"rouge1": triple(self.rouge1), "rouge2": triple(self.rouge2), "rougeL": triple(self.rougeL)}


@dataclass(frozen=True)
class RubricScores:
    interest_level: float
    organization: float
    relevance: float
    coverage: float
    judge: str
    transcript: str

    def to_dict(self) -> dict:
        return {
            "coverage": self.coverage,
            "interest_level": self.interest_level,
            "judge": self.judge,
            "organization": self.organization,
            "relevance": self.relevance,
            "transcript": self.transcript,
        }


@dataclass
class MetricReport:
    topic: str
    heading_soft_recall: float | None = None
    heading_entity_recall: float | None = None
    rouge: RougeScores | None = None
    entity_recall: float | None = None
    rubric: RubricScores | None = None

    def to_dict(self) -> dict:
        return {
            "entity_recall": self.entity_recall,
            "heading_entity_recall": self.heading_entity_recall,
            "heading_soft_recall": self.heading_soft_recall,
            "rouge": self.rouge.to_dict() if self.rouge else None,
            "rubric": self.rubric.to_dict() if self.rubric else None,
            "topic": self.topic,
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())


# ---------------------------------------------------------------------------
# Heading soft recall (soft cardinality)


def _heading_strings(outline: OutlineRecord, full_paths: bool) -> list[str]:
    if full_paths:
        strings = [PATH_JOINER.join(h.path) for h in outline.headings]
    else:
        strings = [h.text for h in outline.headings]
    return sorted(set(strings))


def heading_soft_recall(
    gen: OutlineRecord,
    ref: OutlineRecord,
    embedder: EmbeddingProvider,
    full_paths: bool = True,
) -> float:
    """Soft-cardinality recall of the reference headings by the generated
    ones: |R∩G|s / |R|s with sim(a,b) = max(0, cos(embed(a), embed(b)))."""
    if not gen.headings or not ref.headings:
        raise ValueError("both outlines must have headings")
    gen_strings = _heading_strings(gen, full_paths)
    ref_strings = _heading_strings(ref, full_paths)
    union_strings = sorted(set(gen_strings) | set(ref_strings))
    vectors = dict(zip(union_strings, embedder.embed(union_strings)))

    def soft_cardinality(items: list[str]) -> float:
        total = 0.0
        for a in items:
            sims = sum(max(0.0, cosine(vectors[a], vectors[b])) for b in items)
            total += 1.0 / sims  # sims >= sim(a,a) = 1 for unit vectors
        return total

    card_ref = soft_cardinality(ref_strings)
    card_gen = soft_cardinality(gen_strings)
    card_union = soft_cardinality(union_strings)
    intersection = card_ref + card_gen - card_union
    return min(1.0, max(0.0, intersection / card_ref))


# ---------------------------------------------------------------------------
# Entity recalls


def _entity_surfaces(texts: Sequence[str], ner: NerRegistry, model: str) -> set[str]:
    surfaces: set[str] = set()
    for text in texts:
        if not text:
            continue
        for entity in ner.extract(text, model):
            normalized = entity.normalized()
            if normalized:
                surfaces.add(normalized)
    return surfaces


def heading_entity_recall(gen: OutlineRecord, ref: OutlineRecord, ner: NerRegistry, model: str) -> float:
    """Fraction of reference-heading entities present among generated-heading
    entities; 1.0 when the reference has none (vacuous)."""
    ref_entities = _entity_surfaces([h.text for h in ref.headings], ner, model)
    if not ref_entities:
        return 1.0
    gen_entities = _entity_surfaces([h.text for h in gen.headings], ner, model)
    return len(ref_entities & gen_entities) / len(ref_entities)


def article_entity_recall(gen: str, ref: str, ner: NerRegistry, model: str) -> float:
    """Paragraph-level extraction, union over paragraphs, set recall."""
    ref_entities = _entity_surfaces(_PARAGRAPH_SPLIT_RE.split(ref), ner, model)
    if not ref_entities:
        return 1.0
    gen_entities = _entity_surfaces(_PARAGRAPH_SPLIT_RE.split(gen), ner, model)
    return len(ref_entities & gen_entities) / len(ref_entities)


# ---------------------------------------------------------------------------
# ROUGE


def _rouge_tokens(text: str, lang: str) -> list[str]:
    return tokenize_chars(text) if lang == "zh" else tokenize(text)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _triple(match: int, gen_total: int, ref_total: int) -> ScoreTriple:
    precision = match / gen_total if gen_total else 0.0
    recall = match / ref_total if ref_total else 0.0
    f1 = (2 * precision * recall / (precision + recall)) if (precision + recall) else 0.0
    return ScoreTriple(precision, recall, f1)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, 1):
            current.append(previous[j - 1] + 1 if x == y else max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def rouge(gen: str, ref: str, lang: str = "en") -> RougeScores:
    """ROUGE-1/2 n-gram overlap with clipped counts and whole-text LCS
    ROUGE-L, F1 as the harmonic mean (0 when both sides are empty)."""
    if not ref:
        raise ValueError("reference must be non-empty")
    gen_tokens = _rouge_tokens(gen, lang)
    ref_tokens = _rouge_tokens(ref, lang)

    triples = []
    for n in (1, 2):
        gen_counts = _ngrams(gen_tokens, n)
        ref_counts = _ngrams(ref_tokens, n)
        match = sum(min(count, ref_counts[gram]) for gram, count in gen_counts.items())
        triples.append(_triple(match, sum(gen_counts.values()), sum(ref_counts.values())))

    lcs = _lcs_length(gen_tokens, ref_tokens)
    triples.append(_triple(lcs, len(gen_tokens), len(ref_tokens)))
    return RougeScores(rouge1=triples[0], rouge2=triples[1], rougeL=triples[2])


# ---------------------------------------------------------------------------
# Rubric grading


RUBRIC_PROMPT = (
    "You are grading an article about {topic}.\n"
    "Criterion: {name} ({description}).\n"
    "Rate the article on a scale of 1 to 5 for this criterion and reply in the form 'Score: N'.\n"
    "Article:\n{article}"
)
_RUBRIC_RETRY_SUFFIX = "\nReply with exactly one line of the form 'Score: N' where N is 1-5."


def _parse_score(reply: str) -> int | None:
    match = _SCORE_RE.search(reply)
    if match:
        return int(match.group(1))
    match = _BARE_SCORE_RE.match(reply)
    return int(match.group(1)) if match else None


def rubric_grade(
    article: str,
    topic: str,
    judge: GenerationProvider,
    judge_id: str = "fallback-echo",
) -> RubricScores:
    """One prompt per dimension; the judge reply must contain a strict
    'Score: N' (one retry, then E_JUDGE_PARSE)."""
    values: dict[str, float] = {}
    transcript_parts: list[str] = []
    for key, name, description in RUBRIC_DIMENSIONS:
        prompt = RUBRIC_PROMPT.format(topic=topic, name=name, description=description, article=article)
        reply = judge.generate(prompt)
        score = _parse_score(reply)
        if score is None:
            reply = judge.generate(prompt + _RUBRIC_RETRY_SUFFIX)
            score = _parse_score(reply)
        if score is None:
            raise MetricsError("E_JUDGE_PARSE", f"judge reply for {name!r} has no parseable score")
        values[key] = float(score)
        transcript_parts.append(f"[{name}] {reply}")
    return RubricScores(
        interest_level=values["interest_level"],
        organization=values["organization"],
        relevance=values["relevance"],
        coverage=values["coverage"],
        judge=judge_id,
        transcript="\n".join(transcript_parts),
    )
