"""Article-generation baselines: outline generation plus per-section
retrieval and drafting.

Modes: ``direct`` (no retrieval at all), ``web`` (search + fetch + abstract),
``local`` (BM25 over a prebuilt abstract index), and ``grounded`` (caller
supplies the reference abstracts). Every model call goes through the provider
bundle, so generation and scoring backends are interchangeable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .annotate import (
    EPOCH_TIMESTAMP,
    PromptTemplate,
    QuestionRequest,
    generate_question,
    load_template_bank,
    render_prompt,
    select_template,
)
from .bm25 import Bm25Index
from .providers import ProviderError, ProviderSet
from .records import (
    Abstract,
    HeadingNode,
    OutlineRecord,
    dumps_canonical,
    flatten_headings,
    unflatten_headings,
)
from .retrieve import (
    Fetcher,
    RetrieveConfig,
    build_abstract,
    extract_main_text,
    segment_sentences,
    segmentation_lang,
)
from .textutils import content_id, has_cjk

MODES = ("direct", "web", "local", "grounded")

OUTLINE_INSTRUCTION = (
    'Write a numbered outline for a long-form article about "{topic}". '
    "Use decimal numbering (1., 1.1, 2., ...) with several top-level sections "
    "and nested subsections covering the main aspects of the topic."
)
_OUTLINE_RETRY_SUFFIX = " The outline must contain at least two numbered headings."

SECTION_PROMPT_NO_REFS = (
    "Answer the following question about {topic}. Please provide detailed "
    "answers with a minimum of {min_words} words: {question}"
)


class PipelineError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


# ---------------------------------------------------------------------------
# Outline generation


_NUMBERED_RE = re.compile(r"^\s*(\d+(?:\.\d+)*)[.)]?\s+(.*\S)\s*$")
_MARKDOWN_RE = re.compile(r"^\s*(#{1,6})\s+(.*\S)\s*$")
_BULLET_RE = re.compile(r"^(\s*)[-*•]\s+(.*\S)\s*$")


def parse_outline_reply(reply: str) -> list[HeadingNode]:
    """Turn a numbered/markdown/bulleted list into a heading forest; lines
    that look like prose are ignored."""
    entries: list[tuple[int, str]] = []
    for line in reply.splitlines():
        match = _NUMBERED_RE.match(line)
        if match:
            entries.append((match.group(1).count(".") + 1, match.group(2)))
            continue
        match = _MARKDOWN_RE.match(line)
        if match:
            entries.append((len(match.group(1)), match.group(2)))
            continue
        match = _BULLET_RE.match(line)
        if match:
            entries.append((len(match.group(1)) // 2 + 1, match.group(2)))
    roots: list[HeadingNode] = []
    stack: list[HeadingNode] = []
    for raw_level, text in entries:
        while stack and stack[-1].level >= raw_level:
            stack.pop()
        level = (stack[-1].level + 1) if stack else 1  # clamps level jumps
        path = (stack[-1].path if stack else ()) + (text,)
        node = HeadingNode(level, text, path)
        if stack:
            stack[-1].children.append(node)
        else:
            roots.append(node)
        stack.append(node)
    return roots


def generate_outline(topic: str, llm, key: str = "") -> OutlineRecord:
    if not topic.strip():
        raise ValueError("topic must be non-empty")
    prompt = OUTLINE_INSTRUCTION.format(topic=topic)
    roots = parse_outline_reply(llm.generate(prompt))
    if sum(1 for _ in flatten_headings(roots)) < 2:
        roots = parse_outline_reply(llm.generate(prompt + _OUTLINE_RETRY_SUFFIX))
    flat = flatten_headings(roots)
    if len(flat) < 2:
        raise PipelineError("E_OUTLINE_PARSE", f"provider reply yields {len(flat)} headings for {topic!r}")
    return OutlineRecord(
        id=content_id("outline", topic, key, *[" / ".join(h.path) for h in flat]),
        topic=topic,
        lang="zh" if has_cjk(topic) else "en",
        headings=flat,
        source_url="",
    )


# ---------------------------------------------------------------------------
# Local retrieval index


@dataclass(frozen=True)
class IndexDocument:
    doc_id: str
    topic: str
    section_path: tuple[str, ...]
    text: str
    source_url: str


@dataclass
class LocalIndex:
    documents: list[IndexDocument]
    bm25: Bm25Index

    @property
    def urls(self) -> set[str]:
        return {d.source_url for d in self.documents}


def build_local_index(corpus: Iterable, k1: float | None = None, b: float | None = None) -> LocalIndex:
    """One index document per (abstract-set record, abstract)."""
    documents: list[IndexDocument] = []
    for record in corpus:
        for i, abstract in enumerate(record.abstracts):
            documents.append(
                IndexDocument(
                    doc_id=f"{record.id}#{i:03d}",
                    topic=record.topic,
                    section_path=tuple(record.section_path),
                    text=abstract.text,
                    source_url=abstract.source_url,
                )
            )
    kwargs = {}
    if k1 is not None:
        kwargs["k1"] = k1
    if b is not None:
        kwargs["b"] = b
    return LocalIndex(documents=documents, bm25=Bm25Index([d.text for d in documents], **kwargs))


def retrieve_local(query: str, index: LocalIndex, k: int) -> list[Abstract]:
    """Top-k documents by BM25 (ties broken by doc_id), returned as whole-text
    abstracts with the normalized score as relevance."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.documents:
        return []
    raw = index.bm25.scores(query)
    normalized = index.bm25.normalized_scores(query)
    order = sorted(range(len(index.documents)), key=lambda i: (-raw[i], index.documents[i].doc_id))
    out = []
    for i in order[:k]:
        doc = index.documents[i]
        out.append(
            Abstract(
                text=doc.text,
                source_url=doc.source_url,
                source_sentence_indices=(0,),
                relevance=normalized[i],
            )
        )
    return out


def retrieve_web(
    query: str,
    searcher,
    fetcher: Fetcher,
    embedder,
    k: int,
    retrieve_config: RetrieveConfig | None = None,
) -> tuple[list[Abstract], int]:
    """Search, fetch each hit, extract the main text, and build one abstract
    per page against the query. Per-hit failures are skipped and counted."""
    if k < 1:
        raise ValueError("k must be >= 1")
    config = retrieve_config or RetrieveConfig()
    warnings = 0
    abstracts: list[Abstract] = []
    for hit in searcher.search(query, k):
        result = fetcher.fetch(hit.url)
        if not result.ok:
            warnings += 1
            continue
        try:
            text = extract_main_text(result.body or b"", result.content_type)
        except ValueError:
            warnings += 1
            continue
        sentences = segment_sentences(text, segmentation_lang(text))
        if not sentences:
            warnings += 1
            continue
        abstract = build_abstract(
            query,
            sentences,
            embedder,
            k=config.sentences_per_abstract,
            min_relevance=config.min_relevance,
            source_url=hit.url,
        )
        if abstract is not None:
            abstracts.append(abstract)
    return abstracts, warnings


# ---------------------------------------------------------------------------
# Article assembly


@dataclass(frozen=True)
class GeneratedSection:
    heading_path: tuple[str, ...]
    text: str
    citations: tuple[str, ...]


@dataclass
class GeneratedArticle:
    topic: str
    outline: OutlineRecord
    sections: list[GeneratedSection]
    mode: str
    provenance: dict

    def to_dict(self) -> dict:
        from .records import record_to_dict

        return {
            "mode": self.mode,
            "outline": record_to_dict(self.outline),
            "provenance": self.provenance,
            "sections": [
                {"citations": list(s.citations), "path": list(s.heading_path), "text": s.text}
                for s in self.sections
            ],
            "topic": self.topic,
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict())

    def full_text(self) -> str:
        return "\n\n".join(s.text for s in self.sections if s.text)

    def all_citations(self) -> list[str]:
        seen: set[str] = set()
        out = []
        for section in self.sections:
            for url in section.citations:
                if url not in seen:
                    seen.add(url)
                    out.append(url)
        return out

    def to_markdown(self) -> str:
        numbering: dict[str, int] = {}
        for url in self.all_citations():
            numbering[url] = len(numbering) + 1
        lines = [f"# {self.topic}", ""]
        by_path = {s.heading_path: s for s in self.sections}
        for node in _preorder(unflatten_headings(self.outline.headings)):
            lines.append(f"{'#' * (node.level + 1)} {node.text}")
            section = by_path.get(tuple(node.path))
            if section and section.text:
                refs = "".join(f"[{numbering[u]}]" for u in section.citations)
                lines.append("")
                lines.append(section.text + (f" {refs}" if refs else ""))
            lines.append("")
        if numbering:
            lines.append("## References")
            lines.append("")
            for url, number in sorted(numbering.items(), key=lambda kv: kv[1]):
                lines.append(f"[{number}] {url}")
            lines.append("")
        return "\n".join(lines)


def _preorder(roots: Sequence[HeadingNode]) -> list[HeadingNode]:
    out: list[HeadingNode] = []

    def walk(node: HeadingNode) -> None:
        out.append(node)
        for child in node.children:
            walk(child)

    for root in roots:
        walk(root)
    return out


def _leaves(roots: Sequence[HeadingNode]) -> list[HeadingNode]:
    return [n for n in _preorder(roots) if not n.children]


@dataclass
class PipelineConfig:
    retrieval_k: int = 4  # reference summaries per section
    retrieve: RetrieveConfig = field(default_factory=RetrieveConfig)
    template_bank: list[PromptTemplate] | None = None
    section_paragraph_chars: int = 300  # selects the medium template bucket
    model_name: str = "fallback-echo"
    clock: Callable[[], str] = lambda: EPOCH_TIMESTAMP

    def bank(self) -> list[PromptTemplate]:
        return self.template_bank if self.template_bank is not None else load_template_bank()

    def config_hash(self) -> str:
        return content_id(
            "pipeline-config",
            str(self.retrieval_k),
            str(self.retrieve.sentences_per_abstract),
            str(self.retrieve.min_relevance),
            str(self.section_paragraph_chars),
            self.model_name,
        )


def _align_grounded(
    grounded: Sequence[Abstract] | Mapping[tuple[str, ...], Sequence[Abstract]],
    leaves: Sequence[HeadingNode],
    topic: str,
) -> dict[tuple[str, ...], list[Abstract]]:
    """Spread a flat abstract list over leaf headings by best BM25 match;
    abstracts matching nothing go to the first leaf."""
    if isinstance(grounded, Mapping):
        return {tuple(path): list(items) for path, items in grounded.items()}
    index = Bm25Index([a.text for a in grounded])
    assignment: dict[tuple[str, ...], list[Abstract]] = {}
    queries = [" ".join((topic,) + tuple(leaf.path)) for leaf in leaves]
    scores_per_leaf = [index.scores(q) for q in queries]
    for i, abstract in enumerate(grounded):
        best_leaf = 0
        best_score = 0.0
        for leaf_idx in range(len(leaves)):
            score = scores_per_leaf[leaf_idx][i]
            if score > best_score:
                best_score = score
                best_leaf = leaf_idx
        assignment.setdefault(tuple(leaves[best_leaf].path), []).append(abstract)
    return assignment


def run_pipeline(
    topic: str,
    mode: str,
    config: PipelineConfig,
    providers: ProviderSet,
    grounded_abstracts: Sequence[Abstract] | Mapping[tuple[str, ...], Sequence[Abstract]] | None = None,
    index: LocalIndex | None = None,
    fetcher: Fetcher | None = None,
) -> GeneratedArticle:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "grounded" and grounded_abstracts is None:
        raise ValueError("grounded mode requires grounded_abstracts")
    if mode == "local" and index is None:
        raise ValueError("local mode requires a LocalIndex")
    if mode == "web" and fetcher is None:
        fetcher = Fetcher()

    outline = generate_outline(topic, providers.generator)
    roots = unflatten_headings(outline.headings)
    leaves = _leaves(roots)
    bank = config.bank()

    grounded_by_path: dict[tuple[str, ...], list[Abstract]] = {}
    if mode == "grounded":
        grounded_by_path = _align_grounded(grounded_abstracts or [], leaves, topic)

    sections: list[GeneratedSection] = []
    failed: list[list[str]] = []
    total_warnings = 0
    for leaf in leaves:
        path = tuple(leaf.path)
        query = " ".join((topic,) + path)
        if mode == "direct":
            abstracts: list[Abstract] = []
        elif mode == "web":
            abstracts, warnings = retrieve_web(
                query, providers.searcher, fetcher, providers.embedder, config.retrieval_k, config.retrieve
            )
            total_warnings += warnings
        elif mode == "local":
            abstracts = retrieve_local(query, index, config.retrieval_k)
        else:
            abstracts = grounded_by_path.get(path, [])

        request = QuestionRequest(topic, path)
        template = select_template(config.section_paragraph_chars, bank, key=f"{topic}|{query}")
        try:
            question = generate_question(request, providers.generator)
            if abstracts:
                prompt = render_prompt(template, abstracts, question)
            else:
                prompt = SECTION_PROMPT_NO_REFS.format(
                    topic=topic, min_words=template.min_answer_words, question=question
                )
            text = providers.generator.generate(prompt)
        except ProviderError:
            failed.append(list(path))
            text = ""
        citations = []
        if text:
            seen: set[str] = set()
            for abstract in abstracts:
                if abstract.source_url and abstract.source_url not in seen:
                    seen.add(abstract.source_url)
                    citations.append(abstract.source_url)
        sections.append(GeneratedSection(path, text, tuple(citations)))

    provenance = {
        "config_hash": config.config_hash(),
        "failed_sections": failed,
        "models": {"generation": config.model_name},
        "retrieval_warnings": total_warnings,
        "timestamp": config.clock(),
    }
    return GeneratedArticle(topic=topic, outline=outline, sections=sections, mode=mode, provenance=provenance)
