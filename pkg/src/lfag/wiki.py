"""Wiki-style article mining: parse markup into a heading tree, sectioned
paragraphs, and resolved citation markers.

Both raw wikitext (dumps) and rendered HTML (live pages) are supported.
Markup without prose value (templates, infoboxes, tables) is dropped, not
expanded. Heading level 1 is reserved for the article title; ``==`` maps to
level 2, h2 likewise.
"""

from __future__ import annotations

import html
import json
import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterable

from .records import HeadingNode, OutlineRecord, flatten_headings, unflatten_headings
from .textutils import content_id, has_cjk


class ParseError(ValueError):
    def __init__(self, code: str, message: str):
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass(frozen=True)
class SourceDocument:
    topic: str
    lang: str
    body: str
    format: str  # wikitext | html
    source_url: str = ""


@dataclass(frozen=True)
class CitationMarker:
    heading_path: tuple[str, ...]
    paragraph_index: int
    char_offset: int
    url: str
    title: str | None = None


@dataclass(frozen=True)
class ArticleCitation:
    heading_path: tuple[str, ...]
    url: str


@dataclass
class ParsedArticle:
    topic: str
    lang: str
    root: HeadingNode
    sections: dict[tuple[str, ...], list[str]]
    citation_markers: list[CitationMarker]
    source_url: str = ""
    warnings: dict[str, int] = field(default_factory=dict)

    @property
    def article_id(self) -> str:
        return content_id("article", self.topic, self.source_url)

    def total_words(self) -> int:
        from .textutils import word_count

        return sum(word_count(p) for paras in self.sections.values() for p in paras)

    def full_text(self) -> str:
        parts = []
        for node in [self.root] + _preorder(self.root.children):
            for para in self.sections.get(node.path, []):
                parts.append(para)
        return "\n\n".join(parts)


def _preorder(roots: Iterable[HeadingNode]) -> list[HeadingNode]:
    out: list[HeadingNode] = []

    def walk(node: HeadingNode) -> None:
        out.append(node)
        for child in node.children:
            walk(child)

    for root in roots:
        walk(root)
    return out


# ---------------------------------------------------------------------------
# Wikitext


_COMMENT_RE = re.compile(r"<!--.*?-->", re.S)
_REF_RE = re.compile(
    r"<ref(?P<attrs1>[^>/]*)>(?P<content>.*?)</ref\s*>|<ref(?P<attrs2>[^>]*?)/\s*>",
    re.S | re.I,
)
_REF_NAME_RE = re.compile(r"""name\s*=\s*(?:"([^"]*)"|'([^']*)'|([^\s/>]+))""", re.I)
_TEMPLATE_RE = re.compile(r"\{\{[^{}]*\}\}", re.S)
_TABLE_RE = re.compile(r"\{\|(?:[^{}]|\{(?!\|)|\}(?!\}))*?\|\}", re.S)
_HEADING_RE = re.compile(r"^(={1,6})\s*(.+?)\s*\1\s*$")
_FILE_LINK_RE = re.compile(r"\[\[(?:File|Image|文件|图像):[^\[\]]*\]\]", re.I)
_PIPED_LINK_RE = re.compile(r"\[\[([^\[\]|]*)\|([^\[\]|]*)\]\]")
_PLAIN_LINK_RE = re.compile(r"\[\[([^\[\]|]*)\]\]")
_EXT_LINK_RE = re.compile(r"\[(https?://[^\s\]]+)(?:\s+([^\]]*))?\]")
_QUOTES_RE = re.compile(r"'{2,}")
_TAG_RE = re.compile(r"<[^>\x00]+>")
_URL_IN_REF_RE = re.compile(r"""url\s*=\s*([^\s|}]+)|\b(https?://[^\s|}\]<]+)""", re.I)
_TITLE_IN_REF_RE = re.compile(r"title\s*=\s*([^|}\n]+)", re.I)
_SENTINEL_RE = re.compile(r"\x00(\d+)\x00")
_LIST_MARKER_RE = re.compile(r"^[*#:;]+\s*")


def _ref_url_title(content: str) -> tuple[str | None, str | None]:
    url = None
    match = _URL_IN_REF_RE.search(content)
    if match:
        url = (match.group(1) or match.group(2)).rstrip(".,;")
    title = None
    tmatch = _TITLE_IN_REF_RE.search(content)
    if tmatch:
        title = tmatch.group(1).strip() or None
    elif url:
        # external-link form: [http://url Some title]
        ext = _EXT_LINK_RE.search(content)
        if ext and ext.group(2):
            title = ext.group(2).strip() or None
    return url, title


def _extract_refs(text: str) -> tuple[str, list[dict]]:
    """Replace every <ref> element with a numbered sentinel; return the new
    text plus per-ref metadata (url/title resolved by name where needed)."""
    refs: list[dict] = []
    named: dict[str, tuple[str | None, str | None]] = {}

    def repl(match: re.Match) -> str:
        attrs = match.group("attrs1") if match.group("attrs1") is not None else match.group("attrs2")
        name_match = _REF_NAME_RE.search(attrs or "")
        name = next((g for g in name_match.groups() if g), None) if name_match else None
        content = match.group("content")
        url = title = None
        if content is not None:
            url, title = _ref_url_title(content)
            if name and url and name not in named:
                named[name] = (url, title)
        index = len(refs)
        refs.append({"name": name, "url": url, "title": title})
        return f"\x00{index}\x00"

    new_text = _REF_RE.sub(repl, text)
    for ref in refs:
        if ref["url"] is None and ref["name"] in named:
            ref["url"], ref["title"] = named[ref["name"]]
    return new_text, refs


def _strip_tables_templates(text: str) -> str:
    for pattern in (_TEMPLATE_RE, _TABLE_RE):
        for _ in range(50):
            new = pattern.sub("", text)
            if new == text:
                break
            text = new
    return text


def _clean_inline(text: str) -> str:
    for _ in range(10):
        new = _FILE_LINK_RE.sub("", text)
        if new == text:
            break
        text = new
    for _ in range(10):
        new = _PIPED_LINK_RE.sub(lambda m: m.group(2), text)
        new = _PLAIN_LINK_RE.sub(lambda m: m.group(1), new)
        if new == text:
            break
        text = new
    text = _EXT_LINK_RE.sub(lambda m: m.group(2) or "", text)
    text = _QUOTES_RE.sub("", text)
    text = _TAG_RE.sub("", text)
    text = html.unescape(text)
    return re.sub(r"[ \t]+", " ", text).strip()


def _sweep_sentinels(paragraph: str, refs: list[dict]) -> tuple[str, list[tuple[int, int]]]:
    """Strip sentinels, recording (ref_index, char_offset) into the final text."""
    out: list[str] = []
    found: list[tuple[int, int]] = []
    pos = 0
    for match in _SENTINEL_RE.finditer(paragraph):
        chunk = paragraph[pos : match.start()]
        if out and out[-1].endswith(" ") and chunk.startswith(" "):
            chunk = chunk.lstrip(" ")
        out.append(chunk)
        found.append((int(match.group(1)), sum(len(c) for c in out)))
        pos = match.end()
    tail = paragraph[pos:]
    if out and out[-1].endswith(" ") and tail.startswith(" "):
        tail = tail.lstrip(" ")
    out.append(tail)
    text = "".join(out).strip()
    shift = len("".join(out)) - len("".join(out).lstrip())
    markers = [(idx, max(0, min(off - shift, len(text)))) for idx, off in found]
    return text, markers


def _parse_wikitext(doc: SourceDocument) -> ParsedArticle:
    text = _COMMENT_RE.sub("", doc.body)
    text, refs = _extract_refs(text)
    text = _strip_tables_templates(text)

    root = HeadingNode(1, doc.topic, (doc.topic,))
    stack = [root]
    sections: dict[tuple[str, ...], list[str]] = {root.path: []}
    markers: list[CitationMarker] = []
    warnings = {"unresolved_citations": 0, "unplaced_citations": 0}
    block: list[str] = []

    def flush_block() -> None:
        if not block:
            return
        raw = " ".join(block)
        block.clear()
        cleaned = _clean_inline(raw)
        text_out, found = _sweep_sentinels(cleaned, refs)
        section_path = stack[-1].path
        if not text_out:
            warnings["unplaced_citations"] += len(found)
            return
        paragraphs = sections[section_path]
        paragraphs.append(text_out)
        for ref_index, offset in found:
            ref = refs[ref_index]
            if not ref["url"]:
                warnings["unresolved_citations"] += 1
                continue
            markers.append(
                CitationMarker(section_path, len(paragraphs) - 1, offset, ref["url"], ref["title"])
            )

    for line in text.splitlines():
        heading = _HEADING_RE.match(line.strip())
        if heading:
            flush_block()
            level = max(2, len(heading.group(1)))
            title = _clean_inline(heading.group(2))
            title = _SENTINEL_RE.sub("", title).strip()
            if not title:
                continue
            while stack[-1].level >= level:
                stack.pop()
            parent = stack[-1]
            node = HeadingNode(parent.level + 1, title, parent.path + (title,))
            parent.children.append(node)
            stack.append(node)
            sections[node.path] = []
            continue
        stripped = _LIST_MARKER_RE.sub("", line.strip())
        if stripped:
            block.append(stripped)
        else:
            flush_block()
    flush_block()

    if not root.children:
        raise ParseError("E_NO_STRUCTURE", f"no headings found in {doc.topic!r}")
    return ParsedArticle(
        topic=doc.topic,
        lang=doc.lang,
        root=root,
        sections=sections,
        citation_markers=markers,
        source_url=doc.source_url,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# HTML


_SKIP_TAGS = {"script", "style", "nav", "header", "footer", "aside", "noscript", "form", "table", "template"}
_WS_RUN_RE = re.compile(r"\s+")


class _HtmlArticleParser(HTMLParser):
    def __init__(self, topic: str):
        super().__init__(convert_charrefs=True)
        self.root = HeadingNode(1, topic, (topic,))
        self.stack = [self.root]
        self.sections: dict[tuple[str, ...], list[str]] = {self.root.path: []}
        self.pending: list[dict] = []  # unresolved markers
        self.note_urls: dict[str, tuple[str, str | None]] = {}
        self._skip_depth = 0
        self._heading_level: int | None = None
        self._heading_buf: list[str] = []
        self._in_p = False
        self._para_buf = ""
        self._para_markers: list[dict] = []
        self._in_sup_ref = 0
        self._current_li_note: str | None = None
        self._li_anchor: tuple[str, str] | None = None
        self._anchor_href: str | None = None
        self._anchor_text: list[str] = []

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag in ("h2", "h3", "h4", "h5", "h6"):
            self._heading_level = int(tag[1])
            self._heading_buf = []
        elif tag == "p":
            self._in_p = True
            self._para_buf = ""
            self._para_markers = []
        elif tag == "sup" and self._in_p and "reference" in (attrs.get("class") or ""):
            self._in_sup_ref += 1
        elif tag == "li" and (attrs.get("id") or "").startswith("cite_note"):
            self._current_li_note = attrs["id"]
            self._li_anchor = None
        elif tag == "a":
            self._anchor_href = attrs.get("href")
            self._anchor_text = []

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            self._skip_depth = max(0, self._skip_depth - 1)
            return
        if self._skip_depth:
            return
        if tag in ("h2", "h3", "h4", "h5", "h6") and self._heading_level:
            text = _WS_RUN_RE.sub(" ", "".join(self._heading_buf)).strip()
            if text:
                while self.stack[-1].level >= self._heading_level:
                    self.stack.pop()
                parent = self.stack[-1]
                node = HeadingNode(parent.level + 1, text, parent.path + (text,))
                parent.children.append(node)
                self.stack.append(node)
                self.sections[node.path] = []
            self._heading_level = None
        elif tag == "p" and self._in_p:
            self._in_p = False
            text = self._para_buf.strip()
            shift = len(self._para_buf) - len(self._para_buf.lstrip())
            if text:
                section_path = self.stack[-1].path
                paragraphs = self.sections[section_path]
                paragraphs.append(text)
                for marker in self._para_markers:
                    marker["heading_path"] = section_path
                    marker["paragraph_index"] = len(paragraphs) - 1
                    marker["char_offset"] = max(0, min(marker["char_offset"] - shift, len(text)))
                    self.pending.append(marker)
        elif tag == "sup" and self._in_sup_ref:
            self._in_sup_ref -= 1
        elif tag == "li" and self._current_li_note:
            if self._li_anchor:
                url, title = self._li_anchor
                self.note_urls[self._current_li_note] = (url, title or None)
            self._current_li_note = None
        elif tag == "a" and self._anchor_href is not None:
            href = self._anchor_href
            text = _WS_RUN_RE.sub(" ", "".join(self._anchor_text)).strip()
            if self._in_sup_ref and self._in_p:
                self._para_markers.append(
                    {"href": href, "title": None, "char_offset": len(self._para_buf)}
                )
            elif self._current_li_note and href.startswith("http") and self._li_anchor is None:
                self._li_anchor = (href, text)
            self._anchor_href = None
            self._anchor_text = []

    def handle_data(self, data):
        if self._skip_depth:
            return
        if self._anchor_href is not None:
            self._anchor_text.append(data)
        if self._heading_level is not None:
            self._heading_buf.append(data)
            return
        if self._in_p and not self._in_sup_ref:
            chunk = _WS_RUN_RE.sub(" ", data)
            if self._para_buf.endswith(" ") and chunk.startswith(" "):
                chunk = chunk.lstrip(" ")
            self._para_buf += chunk


def _parse_html(doc: SourceDocument) -> ParsedArticle:
    parser = _HtmlArticleParser(doc.topic)
    parser.feed(doc.body)
    parser.close()
    markers: list[CitationMarker] = []
    warnings = {"unresolved_citations": 0, "unplaced_citations": 0}
    for pending in parser.pending:
        href = pending["href"] or ""
        title = pending["title"]
        if href.startswith("#"):
            resolved = parser.note_urls.get(href[1:])
            if not resolved:
                warnings["unresolved_citations"] += 1
                continue
            href, title = resolved
        if not href.startswith("http"):
            warnings["unresolved_citations"] += 1
            continue
        markers.append(
            CitationMarker(
                pending["heading_path"], pending["paragraph_index"], pending["char_offset"], href, title
            )
        )
    if not parser.root.children:
        raise ParseError("E_NO_STRUCTURE", f"no headings found in {doc.topic!r}")
    return ParsedArticle(
        topic=doc.topic,
        lang=doc.lang,
        root=parser.root,
        sections=parser.sections,
        citation_markers=markers,
        source_url=doc.source_url,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# Operations


def parse_article(doc: SourceDocument) -> ParsedArticle:
    if not doc.body.strip():
        raise ParseError("E_NO_STRUCTURE", "document body is empty")
    if doc.format == "wikitext":
        return _parse_wikitext(doc)
    if doc.format == "html":
        return _parse_html(doc)
    raise ParseError("E_FORMAT", f"unsupported format {doc.format!r}")


def extract_outline(article: ParsedArticle) -> OutlineRecord:
    """Outline headings start at the section level: the title node is implied
    by ``topic`` and stripped from every path."""
    def relevel(node: HeadingNode) -> HeadingNode:
        return HeadingNode(
            node.level - 1, node.text, node.path[1:], [relevel(c) for c in node.children]
        )

    roots = [relevel(c) for c in article.root.children]
    flat = flatten_headings(roots)
    if not flat:
        raise ParseError("E_NO_STRUCTURE", "article has no headings")
    return OutlineRecord(
        id=article.article_id,
        topic=article.topic,
        lang=article.lang,
        headings=flat,
        source_url=article.source_url,
    )


def extract_citations(article: ParsedArticle) -> list[ArticleCitation]:
    seen: set[tuple[tuple[str, ...], str]] = set()
    out: list[ArticleCitation] = []
    for marker in article.citation_markers:
        key = (marker.heading_path, marker.url)
        if key in seen:
            continue
        seen.add(key)
        out.append(ArticleCitation(marker.heading_path, marker.url))
    return out


# ---------------------------------------------------------------------------
# Intermediate serialization (articles.jsonl) and manifests


def article_to_dict(article: ParsedArticle) -> dict:
    ordered = [article.root] + _preorder(article.root.children)
    return {
        "citation_markers": [
            {
                "char_offset": m.char_offset,
                "heading_path": list(m.heading_path),
                "paragraph_index": m.paragraph_index,
                "title": m.title,
                "url": m.url,
            }
            for m in article.citation_markers
        ],
        "headings": [
            {"level": n.level - 1, "path": list(n.path[1:]), "text": n.text}
            for n in _preorder(article.root.children)
        ],
        "lang": article.lang,
        "sections": [
            {"paragraphs": article.sections.get(n.path, []), "path": list(n.path)} for n in ordered
        ],
        "source_url": article.source_url,
        "topic": article.topic,
        "warnings": article.warnings,
    }


def article_from_dict(data: dict) -> ParsedArticle:
    topic = data["topic"]
    root = HeadingNode(1, topic, (topic,))
    flat = [HeadingNode(h["level"], h["text"], tuple(h["path"])) for h in data["headings"]]
    if flat:
        def reattach(node: HeadingNode) -> HeadingNode:
            return HeadingNode(
                node.level + 1, node.text, (topic,) + tuple(node.path), [reattach(c) for c in node.children]
            )

        root.children = [reattach(n) for n in unflatten_headings(flat)]
    sections = {tuple(s["path"]): list(s["paragraphs"]) for s in data["sections"]}
    markers = [
        CitationMarker(
            tuple(m["heading_path"]), m["paragraph_index"], m["char_offset"], m["url"], m.get("title")
        )
        for m in data["citation_markers"]
    ]
    return ParsedArticle(
        topic=topic,
        lang=data["lang"],
        root=root,
        sections=sections,
        citation_markers=markers,
        source_url=data.get("source_url", ""),
        warnings=dict(data.get("warnings", {})),
    )


def detect_lang(text: str) -> str:
    return "zh" if has_cjk(text) else "en"


@dataclass(frozen=True)
class ManifestEntry:
    topic: str
    path: str
    lang: str = "en"
    format: str | None = None
    source_url: str = ""


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    base = Path(path).parent
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = []
    for item in raw:
        source = Path(item["path"])
        if not source.is_absolute():
            source = base / source
        fmt = item.get("format")
        if fmt is None:
            fmt = "html" if source.suffix.lower() in (".html", ".htm") else "wikitext"
        entries.append(
            ManifestEntry(
                topic=item["topic"],
                path=str(source),
                lang=item.get("lang", detect_lang(item["topic"])),
                format=fmt,
                source_url=item.get("source_url", ""),
            )
        )
    return entries


def scan_source_dir(path: str | Path) -> list[ManifestEntry]:
    """Manifest-free ingestion: every .wiki/.html file under the directory
    becomes an entry, topic taken from the file stem."""
    root = Path(path)
    entries = []
    for source in sorted(root.rglob("*")):
        suffix = source.suffix.lower()
        if suffix not in (".wiki", ".html", ".htm") or not source.is_file():
            continue
        topic = source.stem
        entries.append(
            ManifestEntry(
                topic=topic,
                path=str(source),
                lang=detect_lang(source.read_text(encoding="utf-8")[:2000]),
                format="html" if suffix in (".html", ".htm") else "wikitext",
            )
        )
    return entries


def load_document(entry: ManifestEntry) -> SourceDocument:
    body = Path(entry.path).read_text(encoding="utf-8")
    return SourceDocument(
        topic=entry.topic, lang=entry.lang, body=body, format=entry.format or "wikitext",
        source_url=entry.source_url,
    )
