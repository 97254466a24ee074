"""Cited-reference retrieval: polite URL fetching with an offline cache,
main-text extraction, sentence segmentation, and relevance-ranked abstract
construction.

``file://`` URLs are first-class so fixture corpora never touch the network.
"""

from __future__ import annotations

import hashlib
import json
import re
import socket
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
import urllib.robotparser
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from html.parser import HTMLParser
from pathlib import Path
from typing import Callable, Sequence

from .providers import EmbeddingProvider, cosine
from .records import Abstract, AbstractSetRecord, Citation
from .textutils import has_cjk

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_MAX_BYTES = 2 * 1024 * 1024
DEFAULT_SENTENCES_PER_ABSTRACT = 3
DEFAULT_MIN_RELEVANCE = 0.35


class RetrieveError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


# ---------------------------------------------------------------------------
# Fetching


@dataclass(frozen=True)
class FetchPolicy:
    timeout: float = DEFAULT_TIMEOUT_S
    max_bytes: int = DEFAULT_MAX_BYTES
    per_host_rate: float | None = None  # requests per second, per host
    user_agent: str = "lfag-fetcher/0.1"
    respect_robots: bool = True


@dataclass(frozen=True)
class FetchResult:
    url: str
    status: str  # ok | http_error | timeout | robots_denied | too_large
    code: int | None = None
    content_type: str = ""
    body: bytes | None = None
    fetched_at: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class Fetcher:
    """Fetches URLs under a policy: bounded read size, per-host token bucket,
    robots.txt checks for http(s), and an optional content-addressed cache.
    Failures are encoded in FetchResult.status, never raised."""

    def __init__(
        self,
        policy: FetchPolicy | None = None,
        cache_dir: str | Path | None = None,
        clock: Callable[[], str] = _utc_now,
    ):
        self.policy = policy or FetchPolicy()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.clock = clock
        self._lock = threading.Lock()
        self._next_slot: dict[str, float] = {}
        self._robots: dict[str, urllib.robotparser.RobotFileParser | None] = {}

    # -- cache

    def _cache_paths(self, url: str) -> tuple[Path, Path] | None:
        if not self.cache_dir:
            return None
        key = hashlib.sha256(url.encode("utf-8")).hexdigest()
        return self.cache_dir / f"{key}.json", self.cache_dir / f"{key}.bin"

    def _cache_get(self, url: str) -> FetchResult | None:
        paths = self._cache_paths(url)
        if not paths or not paths[0].exists():
            return None
        meta = json.loads(paths[0].read_text(encoding="utf-8"))
        body = paths[1].read_bytes() if paths[1].exists() else b""
        return FetchResult(
            url=url, status="ok", content_type=meta.get("content_type", ""), body=body,
            fetched_at=meta.get("fetched_at", ""),
        )

    def _cache_put(self, result: FetchResult) -> None:
        paths = self._cache_paths(result.url)
        if not paths or not result.ok:
            return
        paths[1].write_bytes(result.body or b"")
        meta = {"content_type": result.content_type, "fetched_at": result.fetched_at, "url": result.url}
        paths[0].write_text(json.dumps(meta, sort_keys=True, ensure_ascii=False), encoding="utf-8")

    # -- politeness

    def _rate_limit(self, host: str) -> None:
        rate = self.policy.per_host_rate
        if not rate or not host:
            return
        with self._lock:
            now = time.monotonic()
            slot = max(now, self._next_slot.get(host, now))
            self._next_slot[host] = slot + 1.0 / rate
        wait = slot - time.monotonic()
        if wait > 0:
            time.sleep(wait)

    def _robots_allowed(self, parsed: urllib.parse.ParseResult, url: str) -> bool:
        if not self.policy.respect_robots or parsed.scheme not in ("http", "https"):
            return True
        host_key = f"{parsed.scheme}://{parsed.netloc}"
        with self._lock:
            cached = self._robots.get(host_key, "miss")
        if cached == "miss":
            parser: urllib.robotparser.RobotFileParser | None
            parser = urllib.robotparser.RobotFileParser()
            try:
                req = urllib.request.Request(
                    f"{host_key}/robots.txt", headers={"User-Agent": self.policy.user_agent}
                )
                with urllib.request.urlopen(req, timeout=self.policy.timeout) as resp:
                    parser.parse(resp.read(65536).decode("utf-8", "replace").splitlines())
            except Exception:
                parser = None  # unreachable robots.txt means no restrictions
            with self._lock:
                self._robots[host_key] = parser
            cached = parser
        if cached is None:
            return True
        return cached.can_fetch(self.policy.user_agent, url)

    # -- fetching

    def fetch(self, url: str) -> FetchResult:
        parsed = urllib.parse.urlparse(url)
        if parsed.scheme not in ("http", "https", "file"):
            raise RetrieveError("E_URL", f"unsupported URL scheme in {url!r}")
        cached = self._cache_get(url)
        if cached:
            return cached
        if not self._robots_allowed(parsed, url):
            return FetchResult(url=url, status="robots_denied", fetched_at=self.clock())
        if parsed.scheme != "file":
            self._rate_limit(parsed.netloc)
        headers = {"User-Agent": self.policy.user_agent} if parsed.scheme != "file" else {}
        request = urllib.request.Request(url, headers=headers)
        try:
            with urllib.request.urlopen(request, timeout=self.policy.timeout) as resp:
                body = resp.read(self.policy.max_bytes + 1)
                if len(body) > self.policy.max_bytes:
                    return FetchResult(url=url, status="too_large", fetched_at=self.clock())
                content_type = resp.headers.get("Content-Type", "") if resp.headers else ""
                if not content_type and parsed.scheme == "file":
                    content_type = _guess_content_type(parsed.path)
                result = FetchResult(
                    url=url, status="ok", content_type=content_type, body=body, fetched_at=self.clock()
                )
                self._cache_put(result)
                return result
        except urllib.error.HTTPError as exc:
            return FetchResult(url=url, status="http_error", code=exc.code, fetched_at=self.clock())
        except (socket.timeout, TimeoutError):
            return FetchResult(url=url, status="timeout", fetched_at=self.clock())
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                return FetchResult(url=url, status="timeout", fetched_at=self.clock())
            return FetchResult(url=url, status="http_error", code=0, fetched_at=self.clock())
        except OSError:
            return FetchResult(url=url, status="http_error", code=0, fetched_at=self.clock())

    def fetch_many(self, urls: Sequence[str], max_workers: int = 4) -> list[FetchResult]:
        """Fetch concurrently; results come back in input order."""
        if not urls:
            return []
        with ThreadPoolExecutor(max_workers=max(1, max_workers)) as pool:
            return list(pool.map(self.fetch, urls))


def fetch_url(url: str, policy: FetchPolicy | None = None, cache_dir: str | Path | None = None) -> FetchResult:
    return Fetcher(policy, cache_dir).fetch(url)


def _guess_content_type(path: str) -> str:
    lower = path.lower()
    if lower.endswith((".html", ".htm")):
        return "text/html"
    return "text/plain"


# ---------------------------------------------------------------------------
# Main-text extraction


_BOILERPLATE_TAGS = {"script", "style", "nav", "header", "footer", "aside", "noscript", "form", "table", "template"}
_WS_RUN_RE = re.compile(r"\s+")


class _MainTextParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.paragraphs: list[str] = []
        self.other_text: list[str] = []
        self._skip = 0
        self._in_p = False
        self._buf: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag in _BOILERPLATE_TAGS:
            self._skip += 1
        elif tag == "p" and not self._skip:
            self._in_p = True
            self._buf = []

    def handle_endtag(self, tag):
        if tag in _BOILERPLATE_TAGS:
            self._skip = max(0, self._skip - 1)
        elif tag == "p" and self._in_p:
            self._in_p = False
            text = _WS_RUN_RE.sub(" ", "".join(self._buf)).strip()
            if text:
                self.paragraphs.append(text)

    def handle_data(self, data):
        if self._skip:
            return
        if self._in_p:
            self._buf.append(data)
        elif data.strip():
            self.other_text.append(_WS_RUN_RE.sub(" ", data).strip())


def _decode(body: bytes, charset: str | None) -> str:
    try:
        return body.decode(charset or "utf-8")
    except (UnicodeDecodeError, LookupError) as exc:
        raise RetrieveError("E_ENCODING", f"cannot decode body as {charset or 'utf-8'}: {exc}") from exc


def extract_main_text(body: bytes, content_type: str) -> str:
    """Strip boilerplate from an HTML page, keeping paragraph order; plain
    text passes through unchanged."""
    mime, _, params = content_type.partition(";")
    mime = mime.strip().lower()
    charset = None
    charset_match = re.search(r"charset=([\w-]+)", params, re.I)
    if charset_match:
        charset = charset_match.group(1)
    if mime in ("", "text/plain"):
        return _decode(body, charset)
    if mime not in ("text/html", "application/xhtml+xml"):
        raise RetrieveError("E_CONTENT_TYPE", f"unsupported content type {content_type!r}")
    parser = _MainTextParser()
    parser.feed(_decode(body, charset))
    parser.close()
    if parser.paragraphs:
        return "\n\n".join(parser.paragraphs)
    return " ".join(parser.other_text).strip()


# ---------------------------------------------------------------------------
# Sentence segmentation


@dataclass(frozen=True)
class Sentence:
    text: str
    index: int
    char_span: tuple[int, int]


_EN_TERMINATORS = ".!?"
_ZH_TERMINATORS = "。！？；"  # 。！？；
_CLOSERS = "\"')’”」』）】》]"
_ABBREVIATIONS = frozenset(
    "mr mrs ms dr prof sr jr st vs etc fig no inc ltd co al approx dept est "
    "u.s u.k u.n e.g i.e a.m p.m".split()
)


def _is_abbreviation(text: str, dot_pos: int) -> bool:
    match = re.search(r"[\w.]+$", text[:dot_pos])
    if not match:
        return False
    return match.group().rstrip(".").casefold() in _ABBREVIATIONS


def _boundaries(text: str, lang: str) -> list[int]:
    terminators = {
        "en": _EN_TERMINATORS,
        "zh": _ZH_TERMINATORS,
        "auto": _EN_TERMINATORS + _ZH_TERMINATORS,
    }.get(lang)
    if terminators is None:
        raise ValueError(f"unsupported lang {lang!r}")
    bounds = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch not in terminators:
            i += 1
            continue
        j = i
        while j < n and text[j] in terminators:
            j += 1
        if ch == ".":
            if j < n and text[j].isdigit():  # decimal like 3.14
                i = j
                continue
            if _is_abbreviation(text, i):
                i = j
                continue
        while j < n and text[j] in _CLOSERS:
            j += 1
        if ch in _ZH_TERMINATORS:
            # CJK sentences carry no whitespace between them.
            bounds.append(j)
            i = j
            continue
        if j >= n or text[j].isspace():
            if ch == "." and j < n:
                follow = text[j:].lstrip()
                if follow and not (
                    follow[0].isupper() or follow[0].isdigit() or has_cjk(follow[0]) or follow[0] in "\"'“‘(["
                ):
                    i = j
                    continue
            bounds.append(j)
        i = j
    return bounds


def segment_sentences(text: str, lang: str = "en") -> list[Sentence]:
    """Rule-based segmentation; spans cover every non-whitespace character
    and never overlap. ``lang`` is en, zh, or auto (both terminator sets)."""
    if not text:
        return []
    cuts = _boundaries(text, lang)
    sentences: list[Sentence] = []
    start = 0
    for cut in cuts + [len(text)]:
        segment = text[start:cut]
        stripped = segment.strip()
        if stripped:
            lead = len(segment) - len(segment.lstrip())
            begin = start + lead
            sentences.append(Sentence(stripped, len(sentences), (begin, begin + len(stripped))))
        start = cut
    return sentences


def segmentation_lang(text: str) -> str:
    return "auto" if has_cjk(text) else "en"


# ---------------------------------------------------------------------------
# Abstract construction


def build_abstract(
    paragraph: str,
    source_sentences: Sequence[Sentence],
    embedder: EmbeddingProvider,
    k: int = DEFAULT_SENTENCES_PER_ABSTRACT,
    min_relevance: float = DEFAULT_MIN_RELEVANCE,
    source_url: str = "",
) -> Abstract | None:
    """Select the k source sentences most relevant to the paragraph
    (embedding cosine clamped to [0, 1]); None when even the best sentence
    falls below ``min_relevance``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= min_relevance <= 1.0:
        raise ValueError("min_relevance must be within [0, 1]")
    if not source_sentences:
        return None
    vectors = embedder.embed([paragraph] + [s.text for s in source_sentences])
    para_vec = vectors[0]
    scores = [max(0.0, cosine(para_vec, v)) for v in vectors[1:]]
    if max(scores) < min_relevance:
        return None
    ranked = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    chosen = sorted(ranked[:k])
    return Abstract(
        text=" ".join(source_sentences[i].text for i in chosen),
        source_url=source_url,
        source_sentence_indices=tuple(chosen),
        relevance=sum(scores[i] for i in chosen) / len(chosen),
    )


# ---------------------------------------------------------------------------
# Stage: ParsedArticle -> AbstractSetRecords


@dataclass
class RetrieveConfig:
    sentences_per_abstract: int = DEFAULT_SENTENCES_PER_ABSTRACT
    min_relevance: float = DEFAULT_MIN_RELEVANCE


def abstract_sets_for_article(
    article,
    fetcher: Fetcher,
    embedder: EmbeddingProvider,
    config: RetrieveConfig | None = None,
) -> tuple[list[AbstractSetRecord], dict[str, int]]:
    """Build one AbstractSetRecord per cited paragraph of a parsed article.

    Lead paragraphs (no heading path) are skipped: downstream question
    generation needs a non-empty subtitle.
    """
    from .records import paragraph_record_id

    config = config or RetrieveConfig()
    stats = {"paragraphs": 0, "fetch_failures": 0, "empty_pages": 0, "low_relevance": 0}
    by_paragraph: dict[tuple[tuple[str, ...], int], list] = {}
    for marker in article.citation_markers:
        if len(marker.heading_path) < 2:
            continue  # lead
        by_paragraph.setdefault((marker.heading_path, marker.paragraph_index), []).append(marker)

    records = []
    for (path, para_index), markers in by_paragraph.items():
        paragraph = article.sections[path][para_index]
        stats["paragraphs"] += 1
        citations: list[Citation] = []
        seen_urls: set[str] = set()
        for marker in markers:
            if marker.url not in seen_urls:
                seen_urls.add(marker.url)
                citations.append(Citation(marker.url, marker.title))
        abstracts = []
        for citation in citations:
            result = fetcher.fetch(citation.url)
            if not result.ok:
                stats["fetch_failures"] += 1
                continue
            try:
                text = extract_main_text(result.body or b"", result.content_type)
            except RetrieveError:
                stats["fetch_failures"] += 1
                continue
            sentences = segment_sentences(text, segmentation_lang(text))
            if not sentences:
                stats["empty_pages"] += 1
                continue
            abstract = build_abstract(
                paragraph,
                sentences,
                embedder,
                k=config.sentences_per_abstract,
                min_relevance=config.min_relevance,
                source_url=citation.url,
            )
            if abstract is None:
                stats["low_relevance"] += 1
                continue
            abstracts.append(abstract)
        section_path = path[1:]  # outline-relative: drop the title node
        records.append(
            AbstractSetRecord(
                id=paragraph_record_id(article.topic, section_path, paragraph),
                article_id=article.article_id,
                topic=article.topic,
                section_path=section_path,
                paragraph=paragraph,
                citations=citations,
                abstracts=abstracts,
            )
        )
    return records, stats
