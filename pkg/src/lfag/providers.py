"""External-capability contracts and their implementations.

Four capabilities back the pipeline: text embedding, named-entity
recognition, text generation, and web search. Each has a deterministic
offline fallback (so every downstream stage is testable without weights or
network) and, except search, an HTTP client for the model sidecar service.
"""

from __future__ import annotations

import json
import math
import re
import threading
import time
from dataclasses import dataclass
from hashlib import blake2b
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .bm25 import Bm25Index
from .textutils import normalize_surface

EMBED_DIM = 256
FALLBACK_NER_MODEL = "caps-rules"
RETRY_ATTEMPTS = 3
RETRY_BACKOFF_S = 0.25


class ProviderError(RuntimeError):
    """Failure in an external capability, tagged with its source."""

    def __init__(self, source: str, message: str):
        super().__init__(f"{source}: {message}")
        self.source = source


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.values)

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.values))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    va = np.asarray(a.values)
    vb = np.asarray(b.values)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(va, vb) / (na * nb))


@dataclass(frozen=True)
class Entity:
    """A mention extracted by one NER model; span slices the source text to
    the raw surface."""

    surface: str
    span: tuple[int, int]
    label: str
    model: str

    def normalized(self) -> str:
        return normalize_surface(self.surface)


@dataclass(frozen=True)
class SearchHit:
    url: str
    title: str
    snippet: str


@dataclass
class ProviderConfig:
    kind: str = "fallback"  # fallback | sidecar
    endpoint: str | None = None
    timeout: float = 30.0
    max_concurrency: int = 4
    api_key: str | None = None
    search_index: str | None = None  # fixture page file for fallback search

    def __post_init__(self) -> None:
        if self.kind == "sidecar" and not self.endpoint:
            raise ValueError("sidecar provider config requires an endpoint")


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


class GenerationProvider(Protocol):
    def generate(self, prompt: str, params: dict | None = None) -> str: ...


class SearchProvider(Protocol):
    def search(self, query: str, k: int) -> list[SearchHit]: ...


# ---------------------------------------------------------------------------
# Fallback embedding: character trigram hashing, unit-normalized.


class FallbackEmbedding:
    """256-dim character-trigram hash embedding.

    Counts are unsigned so a vector can never cancel to zero; cosine of two
    texts is then a lexical-overlap similarity in [0, 1], which is all the
    offline pipeline needs.
    """

    dim = EMBED_DIM

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._embed_one(t) for t in texts]

    def _embed_one(self, text: str) -> EmbeddingVector:
        if not isinstance(text, str) or not text:
            raise ProviderError("embed", "texts must be non-empty strings")
        padded = f"##{text.casefold()}##"
        vec = np.zeros(self.dim)
        for i in range(len(padded) - 2):
            tri = padded[i : i + 3]
            digest = blake2b(tri.encode("utf-8"), digest_size=8).digest()
            vec[int.from_bytes(digest, "big") % self.dim] += 1.0
        vec /= np.linalg.norm(vec)
        return EmbeddingVector(tuple(float(v) for v in vec))


# ---------------------------------------------------------------------------
# Fallback NER: capitalized-token runs + number runs.

_NER_WORD = r"[^\W\d_]+(?:['’\-][^\W\d_]+)*"
_NER_NUMBER = r"\d+(?:[.,]\d+)*"
_NER_TOKEN_RE = re.compile(f"({_NER_WORD})|({_NER_NUMBER})", re.UNICODE)
_SENT_BREAK_RE = re.compile(r"[.!?。！？]")

NER_STOPWORDS = frozenset(
    """the a an and or but nor so yet if then this that these those it its he she
    they we i you his her their our your my in on at of for to with from by as
    is was are were be been being has have had do does did not no what when
    where who whom how why which there here also however moreover meanwhile
    after before during since until while because although though such some
    most many much more""".split()
)


class FallbackNer:
    """Extracts maximal runs of capitalized tokens (dropping sentence-initial
    stopwords) and standalone number runs. Crude, but deterministic and
    span-exact."""

    model = FALLBACK_NER_MODEL

    def extract(self, text: str) -> list[Entity]:
        tokens = [
            (m.start(), m.end(), m.group(), m.group(2) is not None)
            for m in _NER_TOKEN_RE.finditer(text)
        ]
        entities: list[Entity] = []
        i = 0
        while i < len(tokens):
            start, end, tok, is_number = tokens[i]
            if is_number:
                j = i
                run_end = end
                while j + 1 < len(tokens):
                    nstart, nend, _, nnum = tokens[j + 1]
                    if nnum and text[run_end:nstart].isspace() and text[run_end:nstart]:
                        j += 1
                        run_end = nend
                    else:
                        break
                entities.append(Entity(text[start:run_end], (start, run_end), "NUMBER", self.model))
                i = j + 1
                continue
            if self._is_capitalized(tok) and not self._skip_initial(text, start, tok):
                j = i
                run_end = end
                while j + 1 < len(tokens):
                    nstart, nend, ntok, nnum = tokens[j + 1]
                    gap = text[run_end:nstart]
                    if not nnum and gap and gap.isspace() and "\n" not in gap and self._is_capitalized(ntok):
                        j += 1
                        run_end = nend
                    else:
                        break
                entities.append(Entity(text[start:run_end], (start, run_end), "NAME", self.model))
                i = j + 1
                continue
            i += 1
        return entities

    @staticmethod
    def _is_capitalized(token: str) -> bool:
        return token[0].isupper() or token[0].istitle()

    @staticmethod
    def _skip_initial(text: str, start: int, token: str) -> bool:
        if token.casefold() not in NER_STOPWORDS:
            return False
        before = text[:start]
        tail = _SENT_BREAK_RE.split(before)[-1]
        return tail.strip(" \t\"'“”‘’()[]\n") == ""


class NerRegistry:
    """The model set: named NER providers, queried in registration order."""

    def __init__(self, providers: dict[str, object] | None = None):
        self._providers: dict[str, object] = dict(providers or {})

    def register(self, name: str, provider: object) -> None:
        self._providers[name] = provider

    def models(self) -> list[str]:
        return list(self._providers)

    def extract(self, text: str, model: str) -> list[Entity]:
        if model not in self._providers:
            raise ProviderError("ner", f"unknown model {model!r}")
        return self._providers[model].extract(text)  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Fallback generation: deterministic template-echo engine.

_Q_GEN_RE = re.compile(
    r"Given the topic (?P<topic>.+?), and the subtitle (?P<subtitle>.+?), "
    r"please generate a question",
    re.DOTALL,
)
_MIN_WORDS_RE = re.compile(r"minimum of (\d+) words")
_QUESTION_LINE_RE = re.compile(r"^\s*Question:\s*(.+)$", re.MULTILINE)
_ABSTRACT_LINE_RE = re.compile(r"^Abstract\[\d+\]:\s*(.*)$", re.MULTILINE)

_FALLBACK_OUTLINE = """1. Overview
1.1 Background
1.2 Key Concepts
2. History
2.1 Origins
2.2 Recent Developments
3. Impact
3.1 Applications
3.2 Reception"""


class FallbackGeneration:
    """Recognizes the pipeline's own prompt shapes and emits canned,
    deterministic expansions so end-to-end runs work offline."""

    model = "fallback-echo"

    def generate(self, prompt: str, params: dict | None = None) -> str:
        if not prompt:
            raise ProviderError("generate", "prompt must be non-empty")
        qmatch = _Q_GEN_RE.search(prompt)
        if qmatch:
            topic = qmatch.group("topic").strip()
            subtitle = qmatch.group("subtitle").strip()
            return f"What is known about {subtitle} in the context of {topic}?"
        if "numbered outline" in prompt or "directory structure" in prompt:
            return _FALLBACK_OUTLINE
        if "scale of 1 to 5" in prompt:
            return "Score: 3"
        min_words = _MIN_WORDS_RE.search(prompt)
        if min_words:
            return self._answer(prompt, int(min_words.group(1)))
        first_line = prompt.strip().splitlines()[0]
        return f"Response: {first_line[:200]}"

    @staticmethod
    def _answer(prompt: str, min_words: int) -> str:
        qline = _QUESTION_LINE_RE.search(prompt)
        if qline:
            question = qline.group(1).strip()
        else:
            # Prompt-1/2 layouts put the question after the min-words clause.
            tail = prompt.rsplit("words:", 1)
            question = tail[1].strip() if len(tail) == 2 else prompt.strip().splitlines()[-1]
        sources = _ABSTRACT_LINE_RE.findall(prompt)
        body = " ".join(s for s in sources if s) or f"General notes on {question}"
        words = f'Regarding the question "{question}", the references state the following. {body}'.split()
        pool = body.split() or ["reference"]
        k = 0
        while len(words) < min_words:
            words.append(pool[k % len(pool)])
            k += 1
        return " ".join(words)


# ---------------------------------------------------------------------------
# Fallback search: BM25 over a local fixture page index.


@dataclass(frozen=True)
class FixturePage:
    url: str
    title: str
    text: str


class FallbackSearch:
    def __init__(self, pages: Sequence[FixturePage] = ()):
        self.pages = list(pages)
        self._index = Bm25Index([f"{p.title}\n{p.text}" for p in self.pages])

    @classmethod
    def from_file(cls, path: str | Path) -> "FallbackSearch":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls([FixturePage(p["url"], p.get("title", ""), p.get("text", "")) for p in raw])

    def search(self, query: str, k: int) -> list[SearchHit]:
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = self._index.scores(query)
        ranked = sorted(
            (i for i in range(len(self.pages)) if scores[i] > 0.0),
            key=lambda i: (-scores[i], i),
        )
        hits = []
        for i in ranked[:k]:
            page = self.pages[i]
            hits.append(SearchHit(page.url, page.title, page.text[:160]))
        return hits


# ---------------------------------------------------------------------------
# Sidecar HTTP clients (wire protocol shared with the sidecar service).


class _SidecarSession:
    def __init__(self, config: ProviderConfig):
        import requests

        self.config = config
        self.base = (config.endpoint or "").rstrip("/")
        self.session = requests.Session()
        if config.api_key:
            self.session.headers["Authorization"] = f"Bearer {config.api_key}"
        self._gate = threading.BoundedSemaphore(max(1, config.max_concurrency))

    def post(self, path: str, payload: dict, source: str) -> dict:
        import requests

        last_error = "unknown error"
        for attempt in range(RETRY_ATTEMPTS):
            if attempt:
                time.sleep(RETRY_BACKOFF_S * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = self.session.post(
                        f"{self.base}{path}", json=payload, timeout=self.config.timeout
                    )
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code // 100 == 2:
                return resp.json()
            try:
                detail = resp.json()
                last_error = f"HTTP {resp.status_code}: {detail.get('message', detail)}"
            except ValueError:
                last_error = f"HTTP {resp.status_code}"
            if 400 <= resp.status_code < 500:
                break  # client errors do not heal on retry
        raise ProviderError(source, last_error)


class SidecarEmbedding:
    def __init__(self, session: _SidecarSession):
        self._session = session

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            return []
        data = self._session.post("/embed", {"texts": list(texts)}, "embed")
        return [EmbeddingVector(tuple(float(v) for v in vec)) for vec in data["vectors"]]


class SidecarNer:
    def __init__(self, session: _SidecarSession, model: str):
        self._session = session
        self.model = model

    def extract(self, text: str) -> list[Entity]:
        data = self._session.post("/ner", {"text": text, "model": self.model}, "ner")
        return [
            Entity(e["surface"], (int(e["start"]), int(e["end"])), e.get("label", ""), self.model)
            for e in data["entities"]
        ]


class SidecarGeneration:
    def __init__(self, session: _SidecarSession):
        self._session = session
        self.model = "sidecar"

    def generate(self, prompt: str, params: dict | None = None) -> str:
        payload: dict = {"prompt": prompt}
        payload.update(params or {})
        return self._session.post("/generate", payload, "generate")["text"]


class SerperSearch:
    """Google SERPER API client. Needs an API key and outbound network, so it
    is never exercised by the offline suite."""

    ENDPOINT = "https://google.serper.dev/search"

    def __init__(self, api_key: str, timeout: float = 10.0):
        self.api_key = api_key
        self.timeout = timeout

    def search(self, query: str, k: int) -> list[SearchHit]:
        import requests

        if k < 1:
            raise ValueError("k must be >= 1")
        try:
            resp = requests.post(
                self.ENDPOINT,
                json={"q": query, "num": k},
                headers={"X-API-KEY": self.api_key},
                timeout=self.timeout,
            )
            resp.raise_for_status()
        except requests.RequestException as exc:
            raise ProviderError("search", str(exc)) from exc
        organic = resp.json().get("organic", [])
        return [
            SearchHit(r.get("link", ""), r.get("title", ""), r.get("snippet", ""))
            for r in organic[:k]
        ]


# ---------------------------------------------------------------------------
# Bundle handed to the pipeline stages.


@dataclass
class ProviderSet:
    embedder: EmbeddingProvider
    ner: NerRegistry
    generator: GenerationProvider
    searcher: SearchProvider
    generation_model: str = "fallback-echo"

    @classmethod
    def fallback(cls, search_pages: Sequence[FixturePage] = ()) -> "ProviderSet":
        registry = NerRegistry({FALLBACK_NER_MODEL: FallbackNer()})
        return cls(
            embedder=FallbackEmbedding(),
            ner=registry,
            generator=FallbackGeneration(),
            searcher=FallbackSearch(search_pages),
            generation_model="fallback-echo",
        )

    @classmethod
    def from_config(cls, config: ProviderConfig, ner_models: Sequence[str] = ()) -> "ProviderSet":
        if config.kind == "fallback":
            if config.search_index:
                return cls.fallback(FallbackSearch.from_file(config.search_index).pages)
            return cls.fallback()
        if config.kind != "sidecar":
            raise ValueError(f"unknown provider kind {config.kind!r}")
        session = _SidecarSession(config)
        models = list(ner_models) or ["default"]
        registry = NerRegistry({m: SidecarNer(session, m) for m in models})
        searcher: SearchProvider
        if config.api_key:
            searcher = SerperSearch(config.api_key, timeout=config.timeout)
        else:
            searcher = FallbackSearch(
                FallbackSearch.from_file(config.search_index).pages if config.search_index else ()
            )
        return cls(
            embedder=SidecarEmbedding(session),
            ner=registry,
            generator=SidecarGeneration(session),
            searcher=searcher,
            generation_model="sidecar",
        )
