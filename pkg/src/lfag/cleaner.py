"""Dataset cleaning: richness, relevance, and coverage filters plus the
answer-length gate, with exact per-stage accounting.

Stage order keeps the expensive entity-coverage check last: articles that
fail the cheap richness thresholds never reach it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from . import hdacr
from .hdacr import HallucinationReport, HdacrConfig
from .providers import ProviderError, ProviderSet
from .records import Abstract, AbstractSetRecord, OutlineRecord, QARecord, dumps_canonical
from .textutils import word_count
from .wiki import ParsedArticle

R_RICHNESS_WORDS = "R_RICHNESS_WORDS"
R_RICHNESS_REFS = "R_RICHNESS_REFS"
R_RELEVANCE = "R_RELEVANCE"
R_COVERAGE = "R_COVERAGE"
R_SHORT_ANSWER = "R_SHORT_ANSWER"

STAGE_RICHNESS = "richness"
STAGE_RELEVANCE = "relevance"
STAGE_COVERAGE = "coverage"
STAGE_ANSWER_LENGTH = "answer_length"
STAGES = (STAGE_RICHNESS, STAGE_RELEVANCE, STAGE_COVERAGE, STAGE_ANSWER_LENGTH)


class CleanerError(RuntimeError):
    """Cleaning aborted; carries the partial report (flagged incomplete)."""

    def __init__(self, message: str, report: "CleaningReport"):
        super().__init__(message)
        self.report = report


@dataclass
class CleanerConfig:
    min_article_words: int = 1000
    min_references: int = 5
    min_abstract_relevance: float = 0.35
    min_answer_words: int = 150
    hdacr: HdacrConfig = field(default_factory=HdacrConfig)

    def __post_init__(self) -> None:
        if min(self.min_article_words, self.min_references, self.min_answer_words) < 0:
            raise ValueError("cleaner thresholds must be >= 0")
        if not 0.0 <= self.min_abstract_relevance <= 1.0:
            raise ValueError("min_abstract_relevance must be within [0, 1]")


@dataclass(frozen=True)
class Decision:
    keep: bool
    reason: str | None = None

    @classmethod
    def kept(cls) -> "Decision":
        return cls(True)

    @classmethod
    def dropped(cls, reason: str) -> "Decision":
        return cls(False, reason)


@dataclass
class StageStats:
    input: int = 0
    kept: int = 0
    dropped: int = 0
    drops_by_reason: dict = field(default_factory=dict)

    def record(self, decision: Decision) -> None:
        self.input += 1
        if decision.keep:
            self.kept += 1
        else:
            self.dropped += 1
            self.drops_by_reason[decision.reason] = self.drops_by_reason.get(decision.reason, 0) + 1


@dataclass
class CleaningReport:
    stages: dict = field(default_factory=lambda: {name: StageStats() for name in STAGES})
    dropped_records: list = field(default_factory=list)  # {stage, record_id, reason}
    hdacr_reports: dict = field(default_factory=dict)  # record_id -> HallucinationReport
    trimmed_abstracts: int = 0
    incomplete: bool = False

    def note_drop(self, stage: str, record_id: str, reason: str) -> None:
        self.dropped_records.append({"reason": reason, "record_id": record_id, "stage": stage})

    def to_dict(self, hdacr_refs: dict | None = None) -> dict:
        return {
            "dropped_records": self.dropped_records,
            "hdacr_reports": hdacr_refs
            if hdacr_refs is not None
            else {rid: report.to_dict() for rid, report in sorted(self.hdacr_reports.items())},
            "incomplete": self.incomplete,
            "stages": {
                name: {
                    "dropped": s.dropped,
                    "drops_by_reason": dict(sorted(s.drops_by_reason.items())),
                    "input": s.input,
                    "kept": s.kept,
                }
                for name, s in self.stages.items()
            },
            "trimmed_abstracts": self.trimmed_abstracts,
        }

    def to_json(self, hdacr_refs: dict | None = None) -> str:
        return dumps_canonical(self.to_dict(hdacr_refs))


@dataclass
class Corpus:
    articles: list[ParsedArticle] = field(default_factory=list)
    outlines: list[OutlineRecord] = field(default_factory=list)
    abstract_sets: list[AbstractSetRecord] = field(default_factory=list)
    qa_records: list[QARecord] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Filters


def richness_filter(article: ParsedArticle, config: CleanerConfig) -> Decision:
    if article.total_words() < config.min_article_words:
        return Decision.dropped(R_RICHNESS_WORDS)
    distinct_urls = {m.url for m in article.citation_markers}
    if len(distinct_urls) < config.min_references:
        return Decision.dropped(R_RICHNESS_REFS)
    return Decision.kept()


def relevance_filter(record: AbstractSetRecord, config: CleanerConfig) -> AbstractSetRecord:
    """Drop abstracts below the relevance floor, then deduplicate exact
    texts keeping the highest-relevance copy (ties to the earliest)."""
    survivors = [a for a in record.abstracts if a.relevance >= config.min_abstract_relevance]
    best_by_text: dict[str, int] = {}
    for i, abstract in enumerate(survivors):
        current = best_by_text.get(abstract.text)
        if current is None or abstract.relevance > survivors[current].relevance:
            best_by_text[abstract.text] = i
    keep_indices = sorted(best_by_text.values())
    return replace(record, abstracts=[survivors[i] for i in keep_indices])


def coverage_filter(
    paragraph: str,
    abstracts: Sequence[Abstract],
    config: CleanerConfig,
    providers: ProviderSet,
) -> tuple[Decision, HallucinationReport]:
    """The paragraph plays the generated content, the concatenated abstracts
    the reference: keep only paragraphs whose entities the references cover."""
    if not abstracts:
        raise ValueError("abstracts must be non-empty")
    reference = "\n".join(a.text for a in abstracts)
    report = hdacr.detect(paragraph, reference, config.hdacr, providers)
    if report.verdict == hdacr.VERDICT_CLEAN:
        return Decision.kept(), report
    return Decision.dropped(R_COVERAGE), report


# ---------------------------------------------------------------------------
# Full pipeline


def clean(corpus: Corpus, config: CleanerConfig, providers: ProviderSet) -> tuple[Corpus, CleaningReport]:
    """Richness -> relevance -> coverage -> answer length. Provider or I/O
    failures abort with the partial report attached and flagged."""
    report = CleaningReport()
    cleaned = Corpus()
    try:
        dropped_articles: set[str] = set()
        dropped_topics: set[str] = set()
        for article in corpus.articles:
            decision = richness_filter(article, config)
            report.stages[STAGE_RICHNESS].record(decision)
            if decision.keep:
                cleaned.articles.append(article)
            else:
                dropped_articles.add(article.article_id)
                dropped_topics.add(article.topic)
                report.note_drop(STAGE_RICHNESS, article.article_id, decision.reason or "")
        cleaned.outlines = [o for o in corpus.outlines if o.id not in dropped_articles]

        coverage_input = []
        for record in corpus.abstract_sets:
            if record.article_id in dropped_articles:
                continue
            trimmed = relevance_filter(record, config)
            report.trimmed_abstracts += len(record.abstracts) - len(trimmed.abstracts)
            if trimmed.abstracts:
                decision = Decision.kept()
                coverage_input.append(trimmed)
            else:
                decision = Decision.dropped(R_RELEVANCE)
                report.note_drop(STAGE_RELEVANCE, record.id, R_RELEVANCE)
            report.stages[STAGE_RELEVANCE].record(decision)

        for record in coverage_input:
            decision, hreport = coverage_filter(record.paragraph, record.abstracts, config, providers)
            report.stages[STAGE_COVERAGE].record(decision)
            report.hdacr_reports[record.id] = hreport
            if decision.keep:
                cleaned.abstract_sets.append(record)
            else:
                report.note_drop(STAGE_COVERAGE, record.id, R_COVERAGE)

        for qa in corpus.qa_records:
            if qa.topic in dropped_topics:
                continue  # cascade: the source article failed richness
            if word_count(qa.answer) < config.min_answer_words:
                decision = Decision.dropped(R_SHORT_ANSWER)
                report.note_drop(STAGE_ANSWER_LENGTH, qa.id, R_SHORT_ANSWER)
            else:
                decision = Decision.kept()
                cleaned.qa_records.append(qa)
            report.stages[STAGE_ANSWER_LENGTH].record(decision)
    except (ProviderError, OSError, KeyboardInterrupt) as exc:
        # interrupt or backend failure: drain with the partial report flagged
        report.incomplete = True
        raise CleanerError(f"cleaning aborted: {exc}", report) from exc
    return cleaned, report
