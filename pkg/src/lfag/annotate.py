"""Question-answer annotation: length-bucketed prompt template selection,
question generation from (topic, subtitle), and QA record assembly.

Template choice inside a bucket is a content hash of the record key, so the
three template variants spread uniformly over a corpus while any single
record is annotated identically on every run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .providers import GenerationProvider, ProviderError
from .records import (
    Abstract,
    Provenance,
    QARecord,
    paragraph_record_id,
    validate_qa,
)
from .textutils import stable_int, word_count

BUCKET_SHORT = "short"  # < 200 chars
BUCKET_MEDIUM = "medium"  # 200-400 chars
BUCKET_LONG = "long"  # > 400 chars

QUESTION_INSTRUCTION = (
    "Given the topic {topic}, and the subtitle {subtitle}, "
    "please generate a question based on these two titles."
)
_QUESTION_RETRY_SUFFIX = " Reply with a single question ending in a question mark."

EPOCH_TIMESTAMP = "1970-01-01T00:00:00+00:00"


class AnnotateError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    length_bucket: str
    body: str
    min_answer_words: int

    def __post_init__(self) -> None:
        if self.body.count("{Abstracts}") != 1 or self.body.count("{Question}") != 1:
            raise AnnotateError(
                "E_TEMPLATE",
                f"template {self.template_id!r} must contain {{Abstracts}} and {{Question}} exactly once",
            )
        if self.min_answer_words < 1:
            raise AnnotateError("E_TEMPLATE", f"template {self.template_id!r} min_answer_words must be >= 1")
        if self.length_bucket not in (BUCKET_SHORT, BUCKET_MEDIUM, BUCKET_LONG):
            raise AnnotateError("E_TEMPLATE", f"template {self.template_id!r} has unknown bucket")


@dataclass(frozen=True)
class QuestionRequest:
    topic: str
    heading_path: tuple[str, ...]
    paragraph: str = ""

    def __post_init__(self) -> None:
        if not self.topic or not self.heading_path:
            raise ValueError("topic and heading_path must be non-empty")

    @property
    def subtitle(self) -> str:
        return " - ".join(self.heading_path)


def load_template_bank(path: str | Path | None = None) -> list[PromptTemplate]:
    if path is None:
        raw = json.loads(resources.files("lfag").joinpath("data/templates.json").read_text("utf-8"))
    else:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return [
        PromptTemplate(t["template_id"], t["length_bucket"], t["body"], int(t["min_answer_words"]))
        for t in raw
    ]


def length_bucket(paragraph_len_chars: int) -> str:
    if paragraph_len_chars < 200:
        return BUCKET_SHORT
    if paragraph_len_chars <= 400:
        return BUCKET_MEDIUM
    return BUCKET_LONG


def select_template(paragraph_len_chars: int, bank: Sequence[PromptTemplate], key: str) -> PromptTemplate:
    bucket = length_bucket(paragraph_len_chars)
    candidates = [t for t in bank if t.length_bucket == bucket]
    if not candidates:
        raise AnnotateError("E_NO_TEMPLATE", f"no templates in bucket {bucket!r}")
    return candidates[stable_int(key) % len(candidates)]


def render_prompt(template: PromptTemplate, abstracts: Sequence[Abstract], question: str) -> str:
    if not abstracts:
        raise ValueError("abstracts must be non-empty")
    if not question.strip():
        raise ValueError("question must be non-empty")
    block = "\n".join(f"Abstract[{i}]: {a.text}" for i, a in enumerate(abstracts, 1))
    return template.body.replace("{Abstracts}", block).replace("{Question}", question)


def _single_question(reply: str) -> str | None:
    for line in reply.strip().splitlines():
        line = line.strip().strip('"').strip()
        if line:
            return line if line.endswith(("?", "？")) else None
    return None


def generate_question(req: QuestionRequest, llm: GenerationProvider) -> str:
    prompt = QUESTION_INSTRUCTION.format(topic=req.topic, subtitle=req.subtitle)
    question = _single_question(llm.generate(prompt))
    if question is None:
        question = _single_question(llm.generate(prompt + _QUESTION_RETRY_SUFFIX))
    if question is None:
        raise AnnotateError("E_BAD_QUESTION", f"no well-formed question for {req.subtitle!r}")
    return question


def build_qa_pair(
    paragraph: str,
    abstracts: Sequence[Abstract],
    req: QuestionRequest,
    llm: GenerationProvider,
    bank: Sequence[PromptTemplate],
    min_answer_words: int = 150,
    model_name: str = "fallback-echo",
    clock: Callable[[], str] = lambda: EPOCH_TIMESTAMP,
) -> QARecord:
    if not abstracts:
        raise ValueError("abstracts must be non-empty")
    record_key = paragraph_record_id(req.topic, req.heading_path, paragraph)
    template = select_template(len(paragraph), bank, record_key)
    question = generate_question(req, llm)
    prompt = render_prompt(template, abstracts, question)

    answer = llm.generate(prompt)
    if word_count(answer) < template.min_answer_words:
        answer = llm.generate(prompt)
        if word_count(answer) < template.min_answer_words:
            raise AnnotateError(
                "E_SHORT_ANSWER",
                f"answer below {template.min_answer_words} words after retry for {req.subtitle!r}",
            )

    record = QARecord(
        id=record_key,
        topic=req.topic,
        heading_path=req.heading_path,
        question=question,
        answer=answer,
        abstracts=list(abstracts),
        template_id=template.template_id,
        provenance=Provenance(model=model_name, timestamp=clock()),
    )
    problems = validate_qa(record, min_answer_words)
    if problems:
        rule, message = problems[0]
        raise AnnotateError(rule, message)
    return record


def annotate_records(
    abstract_records,
    llm: GenerationProvider,
    bank: Sequence[PromptTemplate],
    min_answer_words: int = 150,
    model_name: str = "fallback-echo",
    clock: Callable[[], str] = lambda: EPOCH_TIMESTAMP,
) -> tuple[list[QARecord], dict[str, int]]:
    """Annotate every abstract-set record that has abstracts and a heading
    path; rejections are counted, not raised."""
    out: list[QARecord] = []
    stats = {"annotated": 0, "no_abstracts": 0, "no_heading": 0, "rejected": 0}
    for record in abstract_records:
        if not record.abstracts:
            stats["no_abstracts"] += 1
            continue
        if not record.section_path or not record.topic:
            stats["no_heading"] += 1
            continue
        req = QuestionRequest(record.topic, tuple(record.section_path), record.paragraph)
        try:
            qa = build_qa_pair(
                record.paragraph,
                record.abstracts,
                req,
                llm,
                bank,
                min_answer_words=min_answer_words,
                model_name=model_name,
                clock=clock,
            )
        except AnnotateError:
            stats["rejected"] += 1
            continue
        except ProviderError:
            raise
        out.append(qa)
        stats["annotated"] += 1
    return out, stats
