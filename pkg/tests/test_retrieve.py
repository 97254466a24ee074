import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from oracles import naive_cosine

from lfag.providers import FallbackEmbedding
from lfag.retrieve import (
    FetchPolicy,
    Fetcher,
    RetrieveError,
    Sentence,
    build_abstract,
    extract_main_text,
    fetch_url,
    segment_sentences,
)


@pytest.fixture(scope="module")
def http_server():
    """Tiny localhost server: /page -> HTML, /slow -> sleeps, /big -> large body."""

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            if self.path == "/robots.txt":
                self._send(b"User-agent: *\nDisallow: /private/\n", "text/plain")
            elif self.path.startswith("/private/"):
                self._send(b"secret", "text/plain")
            elif self.path == "/slow":
                time.sleep(1.5)
                self._send(b"<html><p>late</p></html>", "text/html")
            elif self.path == "/big":
                self._send(b"x" * 4096, "text/plain")
            elif self.path == "/missing":
                self.send_error(404)
            else:
                self._send(b"<html><body><nav>menu</nav><p>Hello page.</p></body></html>", "text/html")

        def _send(self, body: bytes, ctype: str):
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_fetch_ok(http_server):
    result = fetch_url(f"{http_server}/page")
    assert result.ok and b"Hello page." in result.body
    assert result.content_type.startswith("text/html")


def test_fetch_timeout(http_server):
    result = fetch_url(f"{http_server}/slow", FetchPolicy(timeout=0.3))
    assert result.status == "timeout" and result.body is None


def test_fetch_too_large(http_server):
    result = fetch_url(f"{http_server}/big", FetchPolicy(max_bytes=1024))
    assert result.status == "too_large"


def test_fetch_http_error(http_server):
    result = fetch_url(f"{http_server}/missing")
    assert result.status == "http_error" and result.code == 404


def test_fetch_robots_denied(http_server):
    result = fetch_url(f"{http_server}/private/x")
    assert result.status == "robots_denied"


def test_per_host_rate_limit(http_server):
    fetcher = Fetcher(FetchPolicy(per_host_rate=1.0))
    start = time.monotonic()
    results = [fetcher.fetch(f"{http_server}/page") for _ in range(3)]
    elapsed = time.monotonic() - start
    assert all(r.ok for r in results)
    assert elapsed >= 2.0  # 3 requests at 1/s: slots at t=0, 1, 2


def test_fetch_many_preserves_input_order(http_server):
    fetcher = Fetcher()
    urls = [f"{http_server}/page", f"{http_server}/missing", f"{http_server}/page"]
    results = fetcher.fetch_many(urls, max_workers=3)
    assert [r.url for r in results] == urls
    assert [r.status for r in results] == ["ok", "http_error", "ok"]


def test_fetch_never_exceeds_timeout_plus_slack(http_server):
    start = time.monotonic()
    fetch_url(f"{http_server}/slow", FetchPolicy(timeout=0.3))
    assert time.monotonic() - start < 0.3 + 1.5  # scheduling slack


def test_file_url_and_cache(tmp_path):
    page = tmp_path / "fixture.html"
    page.write_text("<html><p>Cached text.</p></html>", encoding="utf-8")
    cache = tmp_path / "cache"
    fetcher = Fetcher(cache_dir=cache)
    first = fetcher.fetch(page.as_uri())
    assert first.ok and b"Cached text." in first.body
    page.unlink()  # second read must come from the cache
    second = Fetcher(cache_dir=cache).fetch(page.as_uri())
    assert second.ok and second.body == first.body


def test_fetch_rejects_non_http_scheme():
    with pytest.raises(RetrieveError):
        fetch_url("ftp://example.org/x")


# ---------------------------------------------------------------------------
# Main text extraction


def test_plain_text_identity():
    body = "Line one.\n\nLine two with  spacing."
    assert extract_main_text(body.encode("utf-8"), "text/plain") == body


def test_html_three_paragraphs_no_boilerplate():
    html = (
        "<html><head><style>p{}</style></head><body>"
        "<nav><a href='/'>home</a> nav text</nav>"
        "<p>First.</p><p>Second.</p><p>Third.</p>"
        "<footer>foot</footer><script>var x;</script></body></html>"
    )
    assert extract_main_text(html.encode("utf-8"), "text/html") == "First.\n\nSecond.\n\nThird."


def test_script_only_page_empty():
    assert extract_main_text(b"<html><script>var x = 1;</script></html>", "text/html") == ""


def test_undecodable_bytes_error():
    with pytest.raises(RetrieveError) as err:
        extract_main_text(b"\xff\xfe\x00 invalid", "text/plain; charset=utf-8")
    assert err.value.code == "E_ENCODING"


def test_charset_honored():
    body = "café".encode("latin-1")
    assert extract_main_text(body, "text/plain; charset=latin-1") == "café"


# ---------------------------------------------------------------------------
# Sentence segmentation


def test_three_simple_sentences():
    assert [s.text for s in segment_sentences("A. B? C!")] == ["A.", "B?", "C!"]


def test_zh_terminators():
    text = "你好。我很好！真的吗？好；"
    sentences = segment_sentences(text, "zh")
    assert [s.text for s in sentences] == ["你好。", "我很好！", "真的吗？", "好；"]


def test_empty_string():
    assert segment_sentences("") == []


def test_spans_slice_exactly_and_cover_nonwhitespace():
    text = "  Dr. Smith arrived. He said \"hi.\" Then (finally!) left.  "
    sentences = segment_sentences(text)
    covered = []
    last_end = -1
    for s in sentences:
        start, end = s.char_span
        assert text[start:end] == s.text
        assert start > last_end  # no overlap
        last_end = end
        covered.append((start, end))
    outside = set(range(len(text))) - {i for a, b in covered for i in range(a, b)}
    assert all(text[i].isspace() for i in outside)


def test_indices_sequential():
    sentences = segment_sentences("One. Two. Three.")
    assert [s.index for s in sentences] == [0, 1, 2]


def test_abbreviations_not_split():
    text = "Prices rose by 3.5 percent, e.g. in March. Mr. Jones agreed."
    assert [s.text for s in segment_sentences(text)] == [
        "Prices rose by 3.5 percent, e.g. in March.",
        "Mr. Jones agreed.",
    ]


# ---------------------------------------------------------------------------
# Abstract construction


def _sentences(texts):
    out = []
    pos = 0
    for i, t in enumerate(texts):
        out.append(Sentence(t, i, (pos, pos + len(t))))
        pos += len(t) + 1
    return out


def test_identical_sentence_selected_with_relevance_one():
    embedder = FallbackEmbedding()
    sentences = _sentences(["The exact paragraph text.", "Something unrelated entirely."])
    abstract = build_abstract("The exact paragraph text.", sentences, embedder, k=1)
    assert abstract is not None
    assert abstract.source_sentence_indices == (0,)
    assert abstract.relevance == pytest.approx(1.0, abs=1e-9)
    assert abstract.text == "The exact paragraph text."


def test_topk_matches_bruteforce_oracle():
    embedder = FallbackEmbedding()
    paragraph = "AlphaGo beat Fan Hui in London during October."
    texts = [
        "AlphaGo played Fan Hui in London.",
        "The weather in Paris was mild.",
        "Fan Hui lost the October match.",
        "Economics of train networks.",
        "AlphaGo uses neural networks.",
    ]
    sentences = _sentences(texts)
    abstract = build_abstract(paragraph, sentences, embedder, k=2, min_relevance=0.0)

    vectors = embedder.embed([paragraph] + texts)
    scores = [max(0.0, naive_cosine(vectors[0].values, v.values)) for v in vectors[1:]]
    best_two = sorted(
        sorted(range(len(texts)), key=lambda i: (-scores[i], i))[:2]
    )
    assert list(abstract.source_sentence_indices) == best_two
    assert abstract.relevance == pytest.approx(sum(scores[i] for i in best_two) / 2, abs=1e-9)
    # selection optimality: no unselected sentence strictly beats a selected one
    worst_selected = min(scores[i] for i in best_two)
    assert all(scores[i] <= worst_selected + 1e-12 for i in range(len(texts)) if i not in best_two)


def test_all_below_min_relevance_returns_none():
    embedder = FallbackEmbedding()
    sentences = _sentences(["zzzz qqqq wwww", "mmmm nnnn pppp"])
    assert build_abstract("完全不同的文字内容", sentences, embedder, k=2, min_relevance=0.9) is None


def test_abstract_text_reconstruction():
    embedder = FallbackEmbedding()
    texts = ["First fact about AlphaGo.", "Second fact about Fan Hui.", "Noise."]
    sentences = _sentences(texts)
    abstract = build_abstract("AlphaGo and Fan Hui facts.", sentences, embedder, k=2, min_relevance=0.0)
    rebuilt = " ".join(sentences[i].text for i in abstract.source_sentence_indices)
    assert rebuilt == abstract.text


def test_build_abstract_rejects_bad_params():
    with pytest.raises(ValueError):
        build_abstract("p", _sentences(["s"]), FallbackEmbedding(), k=0)
    with pytest.raises(ValueError):
        build_abstract("p", _sentences(["s"]), FallbackEmbedding(), min_relevance=1.5)
