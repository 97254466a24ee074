"""Builds the desk-scale fixture corpus used by the end-to-end tests: three
wiki articles whose citations point at local HTML pages via file:// URLs,
plus a manifest and a fixture search index.

Everything is generated from string constants so the corpus can be written
into any directory and stays byte-stable within a test session.
"""

from __future__ import annotations

import json
from pathlib import Path

PAGES = {
    "alphago-match.html": {
        "title": "AlphaGo and the Fan Hui match",
        "body": [
            "AlphaGo played a five game match against Fan Hui in London in October 2015.",
            "AlphaGo won the match five to zero against Fan Hui.",
            "The program AlphaGo was developed by DeepMind in London.",
        ],
    },
    "alphago-design.html": {
        "title": "How AlphaGo works",
        "body": [
            "AlphaGo combines Monte Carlo tree search with deep neural networks.",
            "The neural networks of AlphaGo were trained on human Go games.",
            "DeepMind researchers built AlphaGo to play the board game Go.",
        ],
    },
    "alphago-impact.html": {
        "title": "Impact of AlphaGo on Go",
        "body": [
            "After the AlphaGo matches, professional Go players studied its new moves.",
            "AlphaGo influenced Go opening theory and play across Asia.",
            "Lee Sedol lost a famous series against AlphaGo in 2016.",
        ],
    },
    "prescription-history.html": {
        "title": "History of the prescription",
        "body": [
            "A prescription is a health care order written by a physician for a patient.",
            "Early prescriptions used Latin abbreviations written by the physician.",
            "The symbol Rx marks a prescription in many countries.",
        ],
    },
    "prescription-safety.html": {
        "title": "Prescription safety and legibility",
        "body": [
            "Illegible handwriting on a prescription can cause dispensing errors.",
            "In Florida a prescription must be legibly printed or typed.",
            "Electronic prescriptions reduce errors caused by handwriting.",
        ],
    },
    "seoul-history.html": {
        "title": "首尔大学的历史",
        "body": [
            "首尔大学成立于1946年，是韩国最早的国立综合大学。",
            "首尔大学的主校区位于冠岳山脚下。",
            "1946年，多所专门学校合并组成了这所大学。",
        ],
    },
    "seoul-rank.html": {
        "title": "首尔大学的排名",
        "body": [
            "首尔大学在QS世界大学排名中名列韩国前茅。",
            "这所大学的多个学科在国际排名中表现出色。",
            "首尔大学在2023年的排名继续上升。",
        ],
    },
}

# {W} is replaced with the file:// base URL of the pages directory.
ARTICLES = {
    "AlphaGo": {
        "lang": "en",
        "file": "alphago.wiki",
        "source_url": "https://en.wikipedia.org/wiki/AlphaGo",
        "text": """AlphaGo is a computer program that plays the board game Go.

== History ==
AlphaGo was developed by DeepMind in London. The program combines Monte Carlo tree search with deep neural networks trained on human Go games.<ref>{{cite web|url={W}/alphago-design.html|title=How AlphaGo works}}</ref> Its neural networks learned to evaluate board positions and to choose moves.

=== Match against Fan Hui ===
In October 2015 AlphaGo played a five game match against Fan Hui in London and won five to zero.<ref name="match">{{cite web|url={W}/alphago-match.html|title=AlphaGo and the Fan Hui match}}</ref> Fan Hui was the European Go champion at the time, and the match against Fan Hui was the first win by a program over a professional.<ref name="match"/>

== Impact ==
After the matches, professional Go players studied the new moves played by AlphaGo, and AlphaGo influenced Go opening theory across Asia.<ref>{{cite web|url={W}/alphago-impact.html|title=Impact of AlphaGo on Go}}</ref> Lee Sedol later lost a famous series against AlphaGo in 2016.<ref>{{cite web|url={W}/alphago-match.html|title=AlphaGo and the Fan Hui match}}</ref>
""",
    },
    "Medical prescription": {
        "lang": "en",
        "file": "prescription.wiki",
        "source_url": "https://en.wikipedia.org/wiki/Medical_prescription",
        "text": """A prescription is a health care order for a patient.

== History ==
A prescription is a health care order written by a physician for a patient, and early prescriptions used Latin abbreviations written by the physician.<ref>{{cite web|url={W}/prescription-history.html|title=History of the prescription}}</ref> The symbol Rx marks a prescription in many countries.<ref>{{cite web|url={W}/prescription-history.html|title=History of the prescription}}</ref>

== Legibility ==
Illegible handwriting on a prescription can cause dispensing errors, so in Florida a prescription must be legibly printed or typed.<ref>{{cite web|url={W}/prescription-safety.html|title=Prescription safety}}</ref> Electronic prescriptions reduce errors caused by handwriting.<ref>{{cite web|url={W}/prescription-safety.html|title=Prescription safety}}</ref>
""",
    },
    "首尔大学": {
        "lang": "zh",
        "file": "seoul.wiki",
        "source_url": "https://zh.wikipedia.org/wiki/首尔大学",
        "text": """首尔大学是韩国的国立综合大学。

== 历史 ==
首尔大学成立于1946年，由多所专门学校合并组成，是韩国最早的国立综合大学。<ref>{{cite web|url={W}/seoul-history.html|title=首尔大学的历史}}</ref> 主校区位于冠岳山脚下。<ref>{{cite web|url={W}/seoul-history.html|title=首尔大学的历史}}</ref>

== 大学排名 ==
首尔大学在QS世界大学排名中名列韩国前茅，多个学科在国际排名中表现出色。<ref>{{cite web|url={W}/seoul-rank.html|title=首尔大学的排名}}</ref>
""",
    },
}


def page_html(title: str, body_sentences: list[str]) -> str:
    paragraphs = "\n".join(f"<p>{sentence}</p>" for sentence in body_sentences)
    return (
        "<html><head><title>{title}</title><style>p {{margin: 0}}</style></head>\n"
        "<body><nav><a href='/home'>Home</a> site navigation links</nav>\n"
        "<script>var tracker = 'ignored';</script>\n"
        "{paragraphs}\n"
        "<footer>copyright footer</footer></body></html>\n"
    ).format(title=title, paragraphs=paragraphs)


def build_fixture_corpus(root: Path) -> dict:
    """Write pages, wiki sources, manifest, and search index under ``root``;
    returns the key paths."""
    web_dir = root / "web"
    src_dir = root / "src"
    web_dir.mkdir(parents=True, exist_ok=True)
    src_dir.mkdir(parents=True, exist_ok=True)
    base_url = web_dir.resolve().as_uri()

    search_index = []
    for name, page in PAGES.items():
        (web_dir / name).write_text(page_html(page["title"], page["body"]), encoding="utf-8")
        search_index.append(
            {"url": f"{base_url}/{name}", "title": page["title"], "text": " ".join(page["body"])}
        )
    search_index_path = root / "search_index.json"
    search_index_path.write_text(
        json.dumps(search_index, ensure_ascii=False, indent=1), encoding="utf-8"
    )

    manifest = []
    for topic, article in ARTICLES.items():
        body = article["text"].replace("{W}", base_url)
        (src_dir / article["file"]).write_text(body, encoding="utf-8")
        manifest.append(
            {
                "topic": topic,
                "lang": article["lang"],
                "path": article["file"],
                "format": "wikitext",
                "source_url": article["source_url"],
            }
        )
    manifest_path = src_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8")

    run_config = {
        "seed": 7,
        "fetch": {"respect_robots": False},
        "cleaner": {"min_article_words": 40, "min_references": 1},
    }
    config_path = root / "run_config.json"
    config_path.write_text(json.dumps(run_config, indent=1), encoding="utf-8")

    return {
        "root": root,
        "web_dir": web_dir,
        "base_url": base_url,
        "manifest": manifest_path,
        "search_index": search_index_path,
        "run_config": config_path,
    }
