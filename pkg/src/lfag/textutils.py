"""Shared text primitives: normalization, word counting, tokenization, hashing.

The corpus is bilingual (English/Chinese), so every function here has to be
well-defined for CJK text, Latin text, and mixtures of the two.
"""

from __future__ import annotations

import hashlib
import re
import unicodedata
from typing import Iterable

_WS_RE = re.compile(r"\s+")
_WORD_RUN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Main CJK blocks: unified ideographs, extension A, compatibility ideographs.
_CJK_RANGES = (
    (0x4E00, 0x9FFF),
    (0x3400, 0x4DBF),
    (0xF900, 0xFAFF),
)


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def has_cjk(text: str) -> bool:
    return any(is_cjk(ch) for ch in text)


def normalize_surface(text: str) -> str:
    """Canonical form used for entity comparison: NFKC, casefolded,
    whitespace collapsed to single spaces."""
    folded = unicodedata.normalize("NFKC", text).casefold()
    return _WS_RE.sub(" ", folded).strip()


def word_count(text: str) -> int:
    """Count words: CJK codepoints count individually, everything else is
    counted as whitespace-delimited runs.

    On pure-Latin text this equals ``len(text.split())``, so a single counter
    serves both languages without a per-record language tag.
    """
    count = 0
    in_run = False
    for ch in text:
        if ch.isspace():
            if in_run:
                count += 1
                in_run = False
        elif is_cjk(ch):
            if in_run:
                count += 1
                in_run = False
            count += 1
        else:
            in_run = True
    if in_run:
        count += 1
    return count


def tokenize(text: str) -> list[str]:
    """Word-level tokens for ranking and n-gram metrics: casefolded
    alphanumeric runs, with CJK codepoints split into single-char tokens."""
    tokens: list[str] = []
    for match in _WORD_RUN_RE.finditer(text.casefold()):
        run = match.group()
        buf: list[str] = []
        for ch in run:
            if is_cjk(ch):
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


def tokenize_chars(text: str) -> list[str]:
    """Single-codepoint tokens (alphanumerics only), casefolded. Used for
    Chinese-mode n-gram metrics."""
    folded = text.casefold()
    return [ch for ch in folded if ch.isalnum() and ch != "_"]


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def content_id(*parts: str | Iterable[str]) -> str:
    """Stable 16-hex-char id from content parts, so re-runs are idempotent."""
    pieces: list[str] = []
    for part in parts:
        if isinstance(part, str):
            pieces.append(part)
        else:
            pieces.extend(part)
    digest = hashlib.sha256("\x1f".join(pieces).encode("utf-8")).hexdigest()
    return digest[:16]


def stable_int(key: str) -> int:
    """Deterministic non-negative integer hash (process- and run-stable)."""
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")
