"""Model backends behind the wire protocol.

Builtin backends are deterministic and dependency-free; the reference model
ids (bge-m3 for embeddings, flair for NER) load heavyweight libraries and
are selected purely by configuration.
"""

from __future__ import annotations

import hashlib
import re
import threading

import numpy as np


class ModelLoadError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Embedding


class HashTrigramEmbedding:
    """Deterministic 256-dim character-trigram embedding, unit-normalized."""

    dim = 256

    def embed(self, texts: list[str]) -> list[list[float]]:
        return [self._one(t) for t in texts]

    def _one(self, text: str) -> list[float]:
        padded = f"##{text.casefold()}##"
        vec = np.zeros(self.dim)
        for i in range(len(padded) - 2):
            digest = hashlib.blake2b(padded[i : i + 3].encode("utf-8"), digest_size=8).digest()
            vec[int.from_bytes(digest, "big") % self.dim] += 1.0
        vec /= np.linalg.norm(vec)
        return [float(v) for v in vec]


class SentenceTransformerEmbedding:
    """Wraps a sentence-transformers model (the reference setup uses bge-m3)."""

    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelLoadError(
                f"embedding model {model_id!r} needs the 'real' extra (sentence-transformers)"
            ) from exc
        name = "BAAI/bge-m3" if model_id == "bge-m3" else model_id
        try:
            self._model = SentenceTransformer(name)
        except Exception as exc:  # weights missing, no network, ...
            raise ModelLoadError(f"cannot load embedding model {name!r}: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = self._model.encode(texts, normalize_embeddings=True)
        return [[float(v) for v in row] for row in vectors]


def load_embedding_backend(model_id: str):
    if model_id == "hash-trigram-256":
        return HashTrigramEmbedding()
    return SentenceTransformerEmbedding(model_id)


# ---------------------------------------------------------------------------
# NER


_WORD = r"[^\W\d_]+(?:['’\-][^\W\d_]+)*"
_NUMBER = r"\d+(?:[.,]\d+)*"
_TOKEN_RE = re.compile(f"({_WORD})|({_NUMBER})", re.UNICODE)
_BREAK_RE = re.compile(r"[.!?。！？]")
_STOPWORDS = frozenset(
    """the a an and or but if this that these those it its he she they we i you
    in on at of for to with from by as is was are were be not no there here
    also however after before during since while such some most many much""".split()
)


class CapsRulesNer:
    """Capitalized-token runs plus number runs, with exact spans."""

    def extract(self, text: str) -> list[dict]:
        tokens = [
            (m.start(), m.end(), m.group(), m.group(2) is not None)
            for m in _TOKEN_RE.finditer(text)
        ]
        out: list[dict] = []
        i = 0
        while i < len(tokens):
            start, end, tok, is_number = tokens[i]
            run_end = end
            j = i
            if is_number:
                while j + 1 < len(tokens):
                    nstart, nend, _, nnum = tokens[j + 1]
                    gap = text[run_end:nstart]
                    if nnum and gap and gap.isspace():
                        j, run_end = j + 1, nend
                    else:
                        break
                out.append(self._entity(text, start, run_end, "NUMBER"))
            elif self._capitalized(tok) and not self._initial_stopword(text, start, tok):
                while j + 1 < len(tokens):
                    nstart, nend, ntok, nnum = tokens[j + 1]
                    gap = text[run_end:nstart]
                    if not nnum and gap and gap.isspace() and "\n" not in gap and self._capitalized(ntok):
                        j, run_end = j + 1, nend
                    else:
                        break
                out.append(self._entity(text, start, run_end, "NAME"))
            i = j + 1 if run_end > end or is_number or self._capitalized(tok) else i + 1
        return out

    @staticmethod
    def _entity(text: str, start: int, end: int, label: str) -> dict:
        return {"surface": text[start:end], "start": start, "end": end, "label": label}

    @staticmethod
    def _capitalized(token: str) -> bool:
        return token[0].isupper() or token[0].istitle()

    @staticmethod
    def _initial_stopword(text: str, start: int, token: str) -> bool:
        if token.casefold() not in _STOPWORDS:
            return False
        tail = _BREAK_RE.split(text[:start])[-1]
        return tail.strip(" \t\"'“”‘’()[]\n") == ""


class FlairNer:
    def __init__(self, model_id: str):
        try:
            from flair.data import Sentence
            from flair.models import SequenceTagger
        except ImportError as exc:
            raise ModelLoadError(f"NER model {model_id!r} needs the 'real' extra (flair)") from exc
        name = "flair/ner-english-large" if model_id == "flair" else model_id
        try:
            self._tagger = SequenceTagger.load(name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load NER model {name!r}: {exc}") from exc
        self._sentence_cls = Sentence

    def extract(self, text: str) -> list[dict]:
        sentence = self._sentence_cls(text)
        self._tagger.predict(sentence)
        out = []
        for span in sentence.get_spans("ner"):
            out.append(
                {
                    "surface": text[span.start_position : span.end_position],
                    "start": span.start_position,
                    "end": span.end_position,
                    "label": span.tag,
                }
            )
        return out


def load_ner_backend(model_id: str):
    if model_id == "caps-rules":
        return CapsRulesNer()
    return FlairNer(model_id)


# ---------------------------------------------------------------------------
# Generation


class EchoGeneration:
    """Deterministic expansion engine: pads prompt-derived words up to any
    requested minimum so offline pipelines complete."""

    _MIN_WORDS_RE = re.compile(r"minimum of (\d+) words")

    def generate(self, prompt: str, max_tokens: int | None = None, temperature: float | None = None,
                 seed: int | None = None) -> str:
        match = self._MIN_WORDS_RE.search(prompt)
        words = prompt.split()
        if match:
            target = int(match.group(1))
            body = words[-40:]
            out = list(body)
            k = 0
            while len(out) < target:
                out.append(body[k % len(body)])
                k += 1
            return " ".join(out)
        if "question" in prompt.casefold():
            tail = " ".join(words[-12:])
            return f"What is known about {tail}?"
        return " ".join(words[:60])


def load_generation_backend(backend_id: str):
    if backend_id == "echo":
        return EchoGeneration()
    raise ModelLoadError(f"unknown generation backend {backend_id!r}")


class LockedBackend:
    """Serializes calls into one model instance (real models are rarely
    thread-safe); the service stays stateless between requests."""

    def __init__(self, backend):
        self._backend = backend
        self._lock = threading.Lock()

    def __getattr__(self, name):
        method = getattr(self._backend, name)

        def locked(*args, **kwargs):
            with self._lock:
                return method(*args, **kwargs)

        return locked
