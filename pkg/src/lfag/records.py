"""Corpus record model: the three dataset record kinds, their JSONL codec,
and the dataset validator.

Serialization is line-delimited JSON with lexicographic key order, so files
diff cleanly and re-runs are byte-reproducible. Ids are content hashes, so
re-running a stage on the same inputs yields the same ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .textutils import content_id, word_count

DEFAULT_MIN_ANSWER_WORDS = 150

KIND_OUTLINE = "outline"
KIND_ABSTRACT_SET = "abstract_set"
KIND_QA = "qa"
KINDS = (KIND_OUTLINE, KIND_ABSTRACT_SET, KIND_QA)

# Conventional file names for the three dataset kinds.
KIND_FILENAMES = {
    KIND_OUTLINE: "outline.jsonl",
    KIND_ABSTRACT_SET: "abstract_set.jsonl",
    KIND_QA: "qa.jsonl",
}


class RecordError(ValueError):
    """Codec or invariant failure, carrying a stable rule id."""

    def __init__(self, code: str, message: str, *, field: str | None = None, offset: int | None = None):
        self.code = code
        self.field = field
        self.offset = offset
        label = f"{code}({field})" if field else code
        if offset is not None:
            label += f" at byte {offset}"
        super().__init__(f"{label}: {message}")


def dumps_canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Domain types


@dataclass
class HeadingNode:
    """One heading; ``path`` is the ancestor chain including the node's own
    text. In flattened (record) form ``children`` stays empty."""

    level: int
    text: str
    path: tuple[str, ...]
    children: list["HeadingNode"] = field(default_factory=list)


@dataclass(frozen=True)
class Citation:
    url: str
    title: str | None = None


@dataclass(frozen=True)
class Abstract:
    """Selected source sentences for one paragraph; ``text`` is the ordered
    join of the sentences at ``source_sentence_indices``."""

    text: str
    source_url: str
    source_sentence_indices: tuple[int, ...]
    relevance: float


@dataclass(frozen=True)
class Provenance:
    model: str
    timestamp: str


@dataclass
class OutlineRecord:
    id: str
    topic: str
    lang: str
    headings: list[HeadingNode]
    source_url: str = ""


@dataclass
class AbstractSetRecord:
    id: str
    article_id: str
    topic: str
    section_path: tuple[str, ...]
    paragraph: str
    citations: list[Citation]
    abstracts: list[Abstract]


@dataclass
class QARecord:
    id: str
    topic: str
    heading_path: tuple[str, ...]
    question: str
    answer: str
    abstracts: list[Abstract]
    template_id: str
    provenance: Provenance


RECORD_TYPES = {
    KIND_OUTLINE: OutlineRecord,
    KIND_ABSTRACT_SET: AbstractSetRecord,
    KIND_QA: QARecord,
}


def outline_id(topic: str, source_url: str, paths: Iterable[tuple[str, ...]]) -> str:
    return content_id("outline", topic, source_url, *["/".join(p) for p in paths])


def paragraph_record_id(topic: str, section_path: Sequence[str], paragraph: str) -> str:
    return content_id(topic, "/".join(section_path), paragraph)


# ---------------------------------------------------------------------------
# Heading tree <-> flat list


def flatten_headings(roots: Sequence[HeadingNode]) -> list[HeadingNode]:
    flat: list[HeadingNode] = []

    def walk(node: HeadingNode) -> None:
        flat.append(HeadingNode(node.level, node.text, tuple(node.path)))
        for child in node.children:
            walk(child)

    for root in roots:
        walk(root)
    return flat


def unflatten_headings(flat: Sequence[HeadingNode]) -> list[HeadingNode]:
    """Rebuild the unique heading forest from a valid pre-order flattening."""
    violations = validate_heading_sequence(flat)
    if violations:
        rule, message = violations[0]
        raise RecordError(rule, message)
    roots: list[HeadingNode] = []
    stack: list[HeadingNode] = []
    for entry in flat:
        node = HeadingNode(entry.level, entry.text, tuple(entry.path))
        while stack and stack[-1].level >= node.level:
            stack.pop()
        if stack:
            stack[-1].children.append(node)
        else:
            roots.append(node)
        stack.append(node)
    return roots


def validate_heading_sequence(flat: Sequence[HeadingNode]) -> list[tuple[str, str]]:
    problems: list[tuple[str, str]] = []
    if not flat:
        problems.append(("E_NO_HEADINGS", "outline has no headings"))
        return problems
    path_stack: list[str] = []
    prev_level = 0
    for i, node in enumerate(flat):
        if not node.text.strip():
            problems.append(("E_EMPTY_HEADING", f"heading {i} has empty text"))
            continue
        if node.level < 1:
            problems.append(("E_BAD_LEVEL", f"heading {i} ({node.text!r}) has level {node.level}"))
            continue
        if node.level > prev_level + 1:
            problems.append(
                ("E_BAD_LEVEL", f"heading {i} ({node.text!r}) jumps from level {prev_level} to {node.level}")
            )
            continue
        del path_stack[node.level - 1 :]
        path_stack.append(node.text)
        if tuple(node.path) != tuple(path_stack):
            problems.append(
                ("E_BAD_PATH", f"heading {i} ({node.text!r}) path {list(node.path)!r} != {path_stack!r}")
            )
        prev_level = node.level
    return problems


# ---------------------------------------------------------------------------
# Per-kind invariant checks


def validate_outline(record: OutlineRecord) -> list[tuple[str, str]]:
    problems = []
    if not record.topic.strip():
        problems.append(("E_EMPTY_TOPIC", "topic is empty"))
    if record.lang not in ("en", "zh"):
        problems.append(("E_BAD_LANG", f"lang {record.lang!r} not in en/zh"))
    problems.extend(validate_heading_sequence(record.headings))
    return problems


def _validate_abstracts(abstracts: Sequence[Abstract]) -> list[tuple[str, str]]:
    problems = []
    for i, abstract in enumerate(abstracts):
        idx = abstract.source_sentence_indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            problems.append(("E_BAD_INDICES", f"abstract {i} indices {list(idx)!r} not strictly ascending"))
        if not 0.0 <= abstract.relevance <= 1.0:
            problems.append(("E_BAD_RELEVANCE", f"abstract {i} relevance {abstract.relevance} outside [0,1]"))
    return problems


def validate_abstract_set(record: AbstractSetRecord) -> list[tuple[str, str]]:
    problems = []
    if not record.paragraph.strip():
        problems.append(("E_EMPTY_PARAGRAPH", "paragraph is empty"))
    cited = {c.url for c in record.citations}
    for i, abstract in enumerate(record.abstracts):
        if abstract.source_url not in cited:
            problems.append(
                ("E_ABSTRACT_URL", f"abstract {i} source_url {abstract.source_url!r} not among citations")
            )
    problems.extend(_validate_abstracts(record.abstracts))
    return problems


def validate_qa(record: QARecord, min_answer_words: int = DEFAULT_MIN_ANSWER_WORDS) -> list[tuple[str, str]]:
    problems = []
    if not record.question.strip():
        problems.append(("E_EMPTY_QUESTION", "question is empty"))
    words = word_count(record.answer)
    if words < min_answer_words:
        problems.append(("E_SHORT_ANSWER", f"answer has {words} words, minimum is {min_answer_words}"))
    if len(record.abstracts) < 1:
        problems.append(("E_NO_ABSTRACTS", "record has no abstracts"))
    problems.extend(_validate_abstracts(record.abstracts))
    return problems


def validate_record(record, min_answer_words: int = DEFAULT_MIN_ANSWER_WORDS) -> list[tuple[str, str]]:
    if isinstance(record, OutlineRecord):
        return validate_outline(record)
    if isinstance(record, AbstractSetRecord):
        return validate_abstract_set(record)
    if isinstance(record, QARecord):
        return validate_qa(record, min_answer_words)
    raise TypeError(f"not a record: {type(record).__name__}")


# ---------------------------------------------------------------------------
# Encoding


def _heading_to_dict(node: HeadingNode) -> dict:
    return {"level": node.level, "path": list(node.path), "text": node.text}


def _abstract_to_dict(abstract: Abstract) -> dict:
    return {
        "relevance": abstract.relevance,
        "source_sentence_indices": list(abstract.source_sentence_indices),
        "source_url": abstract.source_url,
        "text": abstract.text,
    }


def record_to_dict(record) -> dict:
    if isinstance(record, OutlineRecord):
        return {
            "headings": [_heading_to_dict(h) for h in record.headings],
            "id": record.id,
            "lang": record.lang,
            "source_url": record.source_url,
            "topic": record.topic,
        }
    if isinstance(record, AbstractSetRecord):
        return {
            "abstracts": [_abstract_to_dict(a) for a in record.abstracts],
            "article_id": record.article_id,
            "citations": [{"title": c.title, "url": c.url} for c in record.citations],
            "id": record.id,
            "paragraph": record.paragraph,
            "section_path": list(record.section_path),
            "topic": record.topic,
        }
    if isinstance(record, QARecord):
        return {
            "abstracts": [_abstract_to_dict(a) for a in record.abstracts],
            "answer": record.answer,
            "heading_path": list(record.heading_path),
            "id": record.id,
            "provenance": {"model": record.provenance.model, "timestamp": record.provenance.timestamp},
            "question": record.question,
            "template_id": record.template_id,
            "topic": record.topic,
        }
    raise TypeError(f"not a record: {type(record).__name__}")


def encode_record(record, min_answer_words: int = DEFAULT_MIN_ANSWER_WORDS) -> str:
    problems = validate_record(record, min_answer_words)
    if problems:
        rule, message = problems[0]
        raise RecordError(rule, message)
    return dumps_canonical(record_to_dict(record))


# ---------------------------------------------------------------------------
# Decoding


def _need(obj: dict, key: str, types, kind: str):
    if key not in obj:
        raise RecordError("E_MISSING_FIELD", f"{kind} record lacks {key!r}", field=key)
    value = obj[key]
    if not isinstance(value, types):
        raise RecordError("E_BAD_TYPE", f"{kind} field {key!r} has type {type(value).__name__}", field=key)
    return value


def _parse_heading(obj: dict) -> HeadingNode:
    level = _need(obj, "level", int, KIND_OUTLINE)
    text = _need(obj, "text", str, KIND_OUTLINE)
    path = _need(obj, "path", list, KIND_OUTLINE)
    return HeadingNode(level, text, tuple(str(p) for p in path))


def _parse_abstract(obj: dict, kind: str) -> Abstract:
    text = _need(obj, "text", str, kind)
    url = _need(obj, "source_url", str, kind)
    indices = _need(obj, "source_sentence_indices", list, kind)
    relevance = _need(obj, "relevance", (int, float), kind)
    return Abstract(text, url, tuple(int(i) for i in indices), float(relevance))


def decode_record(
    line: str,
    kind: str,
    key_map: Mapping[str, str] | None = None,
    min_answer_words: int = DEFAULT_MIN_ANSWER_WORDS,
):
    """Parse one JSONL line into a typed record.

    ``key_map`` renames external top-level keys to the canonical ones (the
    published files' exact key names may differ from this reconstruction).
    """
    if kind not in RECORD_TYPES:
        raise ValueError(f"unknown record kind {kind!r}")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        byte_offset = len(line[: exc.pos].encode("utf-8"))
        raise RecordError("E_JSON", exc.msg, offset=byte_offset) from exc
    if not isinstance(obj, dict):
        raise RecordError("E_JSON", f"expected a JSON object, got {type(obj).__name__}")
    if key_map:
        obj = {key_map.get(k, k): v for k, v in obj.items()}

    if kind == KIND_OUTLINE:
        record = OutlineRecord(
            id=_need(obj, "id", str, kind),
            topic=_need(obj, "topic", str, kind),
            lang=_need(obj, "lang", str, kind),
            headings=[_parse_heading(h) for h in _need(obj, "headings", list, kind)],
            source_url=str(obj.get("source_url", "")),
        )
    elif kind == KIND_ABSTRACT_SET:
        citations = [
            Citation(url=_need(c, "url", str, kind), title=c.get("title"))
            for c in _need(obj, "citations", list, kind)
        ]
        record = AbstractSetRecord(
            id=_need(obj, "id", str, kind),
            article_id=_need(obj, "article_id", str, kind),
            topic=str(obj.get("topic", "")),
            section_path=tuple(str(p) for p in _need(obj, "section_path", list, kind)),
            paragraph=_need(obj, "paragraph", str, kind),
            citations=citations,
            abstracts=[_parse_abstract(a, kind) for a in _need(obj, "abstracts", list, kind)],
        )
    else:
        prov = _need(obj, "provenance", dict, kind)
        record = QARecord(
            id=_need(obj, "id", str, kind),
            topic=_need(obj, "topic", str, kind),
            heading_path=tuple(str(p) for p in _need(obj, "heading_path", list, kind)),
            question=_need(obj, "question", str, kind),
            answer=_need(obj, "answer", str, kind),
            abstracts=[_parse_abstract(a, kind) for a in _need(obj, "abstracts", list, kind)],
            template_id=_need(obj, "template_id", str, kind),
            provenance=Provenance(str(prov.get("model", "")), str(prov.get("timestamp", ""))),
        )

    problems = validate_record(record, min_answer_words)
    if problems:
        rule, message = problems[0]
        raise RecordError(rule, message)
    return record


# ---------------------------------------------------------------------------
# Dataset validation


@dataclass
class ValidationReport:
    counts: dict
    violations: dict
    stats: dict

    def to_json(self) -> str:
        return dumps_canonical({"counts": self.counts, "stats": self.stats, "violations": self.violations})


def _mean(values: Sequence[float]) -> float | None:
    return (sum(values) / len(values)) if values else None


def validate_dataset(
    paths: Mapping[str, str | Path],
    min_answer_words: int = DEFAULT_MIN_ANSWER_WORDS,
    key_map: Mapping[str, str] | None = None,
) -> ValidationReport:
    """Validate line-delimited record files; every line is counted exactly
    once, and aggregate statistics are computed over valid records only."""
    counts: dict = {}
    violations: dict = {}
    heading_counts: list[int] = []
    qa_abstract_counts: list[int] = []
    answer_words: list[int] = []

    for kind in sorted(paths):
        if kind not in RECORD_TYPES:
            raise ValueError(f"unknown record kind {kind!r}")
        path = Path(paths[kind])
        if not path.exists():
            raise FileNotFoundError(f"{kind} file not found: {path}")
        kind_counts = {"invalid": 0, "lines": 0, "valid": 0}
        kind_violations: list[dict] = []
        with path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                if not line.strip():
                    continue
                kind_counts["lines"] += 1
                try:
                    record = decode_record(line, kind, key_map=key_map, min_answer_words=min_answer_words)
                except RecordError as exc:
                    kind_counts["invalid"] += 1
                    record_id = _line_record_id(line, path, lineno)
                    kind_violations.append({"id": record_id, "rule": exc.code})
                    continue
                kind_counts["valid"] += 1
                if kind == KIND_OUTLINE:
                    heading_counts.append(len(record.headings))
                elif kind == KIND_QA:
                    qa_abstract_counts.append(len(record.abstracts))
                    answer_words.append(word_count(record.answer))
        counts[kind] = kind_counts
        violations[kind] = kind_violations

    stats = {
        "answer_words": (
            {"max": max(answer_words), "mean": _mean(answer_words), "min": min(answer_words)}
            if answer_words
            else None
        ),
        "mean_abstracts_per_qa": _mean(qa_abstract_counts),
        "mean_headings_per_outline": _mean(heading_counts),
    }
    return ValidationReport(counts=counts, violations=violations, stats=stats)


def _line_record_id(line: str, path: Path, lineno: int) -> str:
    try:
        obj = json.loads(line)
        if isinstance(obj, dict) and isinstance(obj.get("id"), str):
            return obj["id"]
    except json.JSONDecodeError:
        pass
    return f"{path.name}:{lineno}"


def read_records(path: str | Path, kind: str, **kwargs) -> list:
    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(decode_record(line, kind, **kwargs))
    return out


def write_records(path: str | Path, records: Iterable, min_answer_words: int = DEFAULT_MIN_ANSWER_WORDS) -> int:
    count = 0
    with Path(path).open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(encode_record(record, min_answer_words) + "\n")
            count += 1
    return count
