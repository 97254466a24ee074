"""Command-line entry point wiring all pipeline stages.

Exit codes: 0 success, 1 validation/usage errors, 2 provider or I/O
failures. Logs go to stderr; data only ever goes to files (plus stdout for
read-only queries like `validate` without --out).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import annotate as annotate_mod
from . import cleaner as cleaner_mod
from . import hdacr as hdacr_mod
from . import metrics as metrics_mod
from . import pipelines as pipelines_mod
from . import records as records_mod
from . import retrieve as retrieve_mod
from . import wiki as wiki_mod
from .config import ConfigError, RunConfig, load_run_config
from .providers import ProviderError, ProviderSet
from .records import KIND_ABSTRACT_SET, KIND_FILENAMES, KIND_OUTLINE, KIND_QA

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

log = logging.getLogger("lfag")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract is 1
        raise UsageError(message)


def _add_global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Registered on the main parser and again on every subparser so the
    # options work in either position; SUPPRESS keeps subparser defaults
    # from clobbering values parsed before the subcommand.
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run config (values overridden by flags)")
    parser.add_argument("--seed", type=int, default=default, help="pin all run-to-run variation")
    parser.add_argument("--log-level", default=default, help="logging level (default INFO)")
    parser.add_argument(
        "--dry-run",
        action="store_true",
        default=argparse.SUPPRESS if suppress else False,
        help="validate and plan only; no writes",
    )
    parser.add_argument(
        "--providers", choices=["fallback", "sidecar"], default=default, help="provider backend kind"
    )
    parser.add_argument("--endpoint", default=default, help="sidecar endpoint URL")
    parser.add_argument("--search-index", default=default, help="fixture page JSON for fallback search")


def _build_parser() -> _Parser:
    parser = _Parser(prog="lfag", description="Long-form article corpus toolkit")
    _add_global_options(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("mine", help="parse wiki sources into articles + outlines")
    p.add_argument("--manifest", default=None, help="JSON manifest mapping topics to source paths")
    p.add_argument("--src", default=None, help="directory of .wiki/.html sources (topic = file stem)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("retrieve", help="build abstract sets from cited URLs")
    p.add_argument("--articles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cache", default=None)

    p = sub.add_parser("annotate", help="generate question-answer records")
    p.add_argument("--abstracts", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("clean", help="richness/relevance/coverage/answer-length filters")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("validate", help="validate dataset files and report statistics")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--min-answer-words", type=int, default=None)

    p = sub.add_parser("evaluate", help="score generated articles against references")
    p.add_argument("--gen", required=True, help="directory of generated article JSON files")
    p.add_argument("--ref", required=True, help="articles.jsonl or directory containing it")
    p.add_argument("--metrics", default="all")
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="run a generation baseline")
    p.add_argument("--topic", required=True)
    p.add_argument("--mode", required=True, choices=list(pipelines_mod.MODES))
    p.add_argument("--out", required=True)
    p.add_argument("--markdown", default=None)
    p.add_argument("--index", default=None, help="abstract_set.jsonl for local mode")
    p.add_argument("--grounded-abstracts", default=None, help="JSON abstracts for grounded mode")
    p.add_argument("--cache", default=None)

    p = sub.add_parser("hdacr", help="hallucination detection for citation reliability")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--out", required=True)

    for action in sub.choices.values():
        _add_global_options(action, suppress=True)
    return parser


def _providers_from(config: RunConfig) -> ProviderSet:
    return ProviderSet.from_config(config.providers, ner_models=config.cleaner.hdacr.model_set)


def _load_corpus(in_dir: Path, min_answer_words: int) -> cleaner_mod.Corpus:
    corpus = cleaner_mod.Corpus()
    articles_path = in_dir / "articles.jsonl"
    if articles_path.exists():
        with articles_path.open("r", encoding="utf-8") as handle:
            corpus.articles = [wiki_mod.article_from_dict(json.loads(line)) for line in handle if line.strip()]
    outline_path = in_dir / KIND_FILENAMES[KIND_OUTLINE]
    if outline_path.exists():
        corpus.outlines = records_mod.read_records(outline_path, KIND_OUTLINE)
    abstracts_path = in_dir / KIND_FILENAMES[KIND_ABSTRACT_SET]
    if abstracts_path.exists():
        corpus.abstract_sets = records_mod.read_records(abstracts_path, KIND_ABSTRACT_SET)
    qa_path = in_dir / KIND_FILENAMES[KIND_QA]
    if qa_path.exists():
        # The answer-length stage judges lengths itself; decode leniently.
        corpus.qa_records = records_mod.read_records(qa_path, KIND_QA, min_answer_words=0)
    return corpus


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_mine(args, config: RunConfig) -> int:
    if bool(args.manifest) == bool(args.src):
        raise UsageError("mine needs exactly one of --manifest or --src")
    if args.manifest:
        entries = wiki_mod.load_manifest(args.manifest)
    else:
        if not Path(args.src).is_dir():
            raise UsageError(f"source directory missing: {args.src}")
        entries = wiki_mod.scan_source_dir(args.src)
    out_dir = Path(args.out)
    if args.dry_run:
        for entry in entries:
            if not Path(entry.path).exists():
                raise UsageError(f"manifest source missing: {entry.path}")
        log.info("dry-run: would mine %d documents into %s", len(entries), out_dir)
        return EXIT_OK
    out_dir.mkdir(parents=True, exist_ok=True)
    articles = []
    outlines = []
    for entry in entries:
        doc = wiki_mod.load_document(entry)
        article = wiki_mod.parse_article(doc)
        articles.append(article)
        outlines.append(wiki_mod.extract_outline(article))
        log.info("mined %s: %d headings, %d citation markers",
                 entry.topic, len(article.root.children), len(article.citation_markers))
    with (out_dir / "articles.jsonl").open("w", encoding="utf-8") as handle:
        for article in articles:
            handle.write(records_mod.dumps_canonical(wiki_mod.article_to_dict(article)) + "\n")
    records_mod.write_records(out_dir / KIND_FILENAMES[KIND_OUTLINE], outlines)
    return EXIT_OK


def _cmd_retrieve(args, config: RunConfig) -> int:
    articles_path = Path(args.articles)
    if not articles_path.exists():
        raise UsageError(f"articles file missing: {articles_path}")
    if args.dry_run:
        log.info("dry-run: would retrieve citations for %s", articles_path)
        return EXIT_OK
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    providers = _providers_from(config)
    fetcher = retrieve_mod.Fetcher(config.fetch, cache_dir=args.cache or config.cache_dir)
    all_records = []
    with articles_path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            article = wiki_mod.article_from_dict(json.loads(line))
            recs, stats = retrieve_mod.abstract_sets_for_article(
                article, fetcher, providers.embedder, config.retrieve
            )
            all_records.extend(recs)
            log.info("retrieved %s: %s", article.topic, stats)
    records_mod.write_records(out_dir / KIND_FILENAMES[KIND_ABSTRACT_SET], all_records)
    return EXIT_OK


def _cmd_annotate(args, config: RunConfig) -> int:
    abstracts_path = Path(args.abstracts)
    if not abstracts_path.exists():
        raise UsageError(f"abstract set file missing: {abstracts_path}")
    if args.dry_run:
        log.info("dry-run: would annotate %s", abstracts_path)
        return EXIT_OK
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    providers = _providers_from(config)
    bank = annotate_mod.load_template_bank(config.template_bank_path)
    abstract_records = records_mod.read_records(abstracts_path, KIND_ABSTRACT_SET)
    qa_records, stats = annotate_mod.annotate_records(
        abstract_records,
        providers.generator,
        bank,
        min_answer_words=config.min_answer_words,
        model_name=providers.generation_model,
        clock=config.clock(),
    )
    log.info("annotate: %s", stats)
    records_mod.write_records(
        out_dir / KIND_FILENAMES[KIND_QA], qa_records, min_answer_words=config.min_answer_words
    )
    return EXIT_OK


def _cmd_clean(args, config: RunConfig) -> int:
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise UsageError(f"input directory missing: {in_dir}")
    if args.dry_run:
        log.info("dry-run: would clean %s", in_dir)
        return EXIT_OK
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    providers = _providers_from(config)
    corpus = _load_corpus(in_dir, config.cleaner.min_answer_words)
    try:
        cleaned, report = cleaner_mod.clean(corpus, config.cleaner, providers)
    except cleaner_mod.CleanerError as exc:
        # partial report, detection reports kept inline for the audit trail
        Path(args.report).write_text(exc.report.to_json() + "\n", encoding="utf-8")
        raise
    if cleaned.articles:
        with (out_dir / "articles.jsonl").open("w", encoding="utf-8") as handle:
            for article in cleaned.articles:
                handle.write(records_mod.dumps_canonical(wiki_mod.article_to_dict(article)) + "\n")
    records_mod.write_records(out_dir / KIND_FILENAMES[KIND_OUTLINE], cleaned.outlines)
    records_mod.write_records(out_dir / KIND_FILENAMES[KIND_ABSTRACT_SET], cleaned.abstract_sets)
    records_mod.write_records(
        out_dir / KIND_FILENAMES[KIND_QA], cleaned.qa_records, min_answer_words=config.cleaner.min_answer_words
    )
    reports_dir = out_dir / "hdacr_reports"
    refs = {}
    if report.hdacr_reports:
        reports_dir.mkdir(parents=True, exist_ok=True)
        for record_id, hreport in sorted(report.hdacr_reports.items()):
            report_path = reports_dir / f"{record_id}.json"
            report_path.write_text(hreport.to_json() + "\n", encoding="utf-8")
            refs[record_id] = f"hdacr_reports/{record_id}.json"
    Path(args.report).write_text(report.to_json(hdacr_refs=refs) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_validate(args, config: RunConfig) -> int:
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise UsageError(f"input directory missing: {in_dir}")
    paths = {
        kind: in_dir / name for kind, name in KIND_FILENAMES.items() if (in_dir / name).exists()
    }
    if args.dry_run:
        log.info("dry-run: would validate %s", sorted(paths))
        return EXIT_OK
    min_words = args.min_answer_words
    if min_words is None:
        min_words = config.min_answer_words
    report = records_mod.validate_dataset(paths, min_answer_words=min_words)
    payload = report.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    has_violations = any(report.counts[k]["invalid"] for k in report.counts)
    return EXIT_VALIDATION if has_violations else EXIT_OK


def _load_reference_articles(ref_path: Path) -> dict[str, wiki_mod.ParsedArticle]:
    if ref_path.is_dir():
        ref_path = ref_path / "articles.jsonl"
    if not ref_path.exists():
        raise UsageError(f"reference articles missing: {ref_path}")
    refs = {}
    with ref_path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                article = wiki_mod.article_from_dict(json.loads(line))
                refs[article.topic] = article
    return refs


def _cmd_evaluate(args, config: RunConfig) -> int:
    gen_dir = Path(args.gen)
    if not gen_dir.is_dir():
        raise UsageError(f"generated articles directory missing: {gen_dir}")
    refs = _load_reference_articles(Path(args.ref))
    wanted = {m.strip() for m in args.metrics.split(",")} if args.metrics != "all" else {"all"}
    if args.dry_run:
        log.info("dry-run: would evaluate %d articles", len(list(gen_dir.glob("*.json"))))
        return EXIT_OK
    providers = _providers_from(config)
    ner_model = config.cleaner.hdacr.model_set[0]

    def enabled(name: str) -> bool:
        return "all" in wanted or name in wanted

    reports = []
    for path in sorted(gen_dir.glob("*.json")):
        data = json.loads(path.read_text(encoding="utf-8"))
        topic = data["topic"]
        ref = refs.get(topic)
        if ref is None:
            log.warning("no reference article for topic %r; skipping", topic)
            continue
        gen_outline_headings = [
            records_mod.HeadingNode(h["level"], h["text"], tuple(h["path"]))
            for h in data["outline"]["headings"]
        ]
        gen_outline = records_mod.OutlineRecord(
            id=data["outline"]["id"], topic=topic, lang=data["outline"]["lang"],
            headings=gen_outline_headings, source_url=data["outline"].get("source_url", ""),
        )
        ref_outline = wiki_mod.extract_outline(ref)
        gen_text = "\n\n".join(s["text"] for s in data["sections"] if s["text"])
        ref_text = ref.full_text()
        report = metrics_mod.MetricReport(topic=topic)
        if enabled("heading_soft_recall"):
            report.heading_soft_recall = metrics_mod.heading_soft_recall(
                gen_outline, ref_outline, providers.embedder
            )
        if enabled("heading_entity_recall"):
            report.heading_entity_recall = metrics_mod.heading_entity_recall(
                gen_outline, ref_outline, providers.ner, ner_model
            )
        if enabled("rouge") and ref_text:
            report.rouge = metrics_mod.rouge(gen_text, ref_text, lang=ref.lang)
        if enabled("entity_recall") and ref_text:
            report.entity_recall = metrics_mod.article_entity_recall(
                gen_text, ref_text, providers.ner, ner_model
            )
        if enabled("rubric"):
            report.rubric = metrics_mod.rubric_grade(
                gen_text, topic, providers.generator, judge_id=providers.generation_model
            )
        reports.append(report)
    with Path(args.out).open("w", encoding="utf-8") as handle:
        for report in reports:
            handle.write(report.to_json() + "\n")
    return EXIT_OK


def _cmd_generate(args, config: RunConfig) -> int:
    if args.dry_run:
        log.info("dry-run: would generate %r in mode %s", args.topic, args.mode)
        return EXIT_OK
    providers = _providers_from(config)
    index = None
    if args.mode == "local":
        if not args.index:
            raise UsageError("local mode requires --index abstract_set.jsonl")
        index = pipelines_mod.build_local_index(
            records_mod.read_records(args.index, KIND_ABSTRACT_SET)
        )
    grounded = None
    if args.mode == "grounded":
        if not args.grounded_abstracts:
            raise UsageError("grounded mode requires --grounded-abstracts file")
        raw = json.loads(Path(args.grounded_abstracts).read_text(encoding="utf-8"))
        grounded = [
            records_mod.Abstract(
                text=a["text"],
                source_url=a.get("source_url", ""),
                source_sentence_indices=tuple(a.get("source_sentence_indices", (0,))),
                relevance=float(a.get("relevance", 1.0)),
            )
            for a in raw
        ]
    fetcher = retrieve_mod.Fetcher(config.fetch, cache_dir=args.cache or config.cache_dir)
    article = pipelines_mod.run_pipeline(
        args.topic,
        args.mode,
        config.pipeline,
        providers,
        grounded_abstracts=grounded,
        index=index,
        fetcher=fetcher,
    )
    Path(args.out).write_text(article.to_json() + "\n", encoding="utf-8")
    if args.markdown:
        Path(args.markdown).write_text(article.to_markdown(), encoding="utf-8")
    return EXIT_OK


def _cmd_hdacr(args, config: RunConfig) -> int:
    generated_path = Path(args.generated)
    reference_path = Path(args.reference)
    for path in (generated_path, reference_path):
        if not path.exists():
            raise UsageError(f"input file missing: {path}")
    if args.dry_run:
        log.info("dry-run: would run detection on %s vs %s", generated_path, reference_path)
        return EXIT_OK
    providers = _providers_from(config)
    hconfig = config.cleaner.hdacr
    if args.threshold is not None:
        hconfig = hdacr_mod.HdacrConfig(
            model_set=hconfig.model_set,
            threshold=args.threshold,
            embedder_id=hconfig.embedder_id,
            bm25_k1=hconfig.bm25_k1,
            bm25_b=hconfig.bm25_b,
            sbert_compare=hconfig.sbert_compare,
        )
    report = hdacr_mod.detect(
        generated_path.read_text(encoding="utf-8"),
        reference_path.read_text(encoding="utf-8"),
        hconfig,
        providers,
    )
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


_COMMANDS = {
    "mine": _cmd_mine,
    "retrieve": _cmd_retrieve,
    "annotate": _cmd_annotate,
    "clean": _cmd_clean,
    "validate": _cmd_validate,
    "evaluate": _cmd_evaluate,
    "generate": _cmd_generate,
    "hdacr": _cmd_hdacr,
}


def run(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        _emit_error("E_USAGE", str(exc))
        return EXIT_VALIDATION
    if not args.command:
        sys.stderr.write(parser.format_usage())
        _emit_error("E_USAGE", "a subcommand is required")
        return EXIT_VALIDATION

    try:
        config = load_run_config(
            args.config,
            overrides={
                "seed": args.seed,
                "log_level": args.log_level,
                "provider_kind": args.providers,
                "provider_endpoint": args.endpoint,
                "search_index_path": args.search_index,
            },
        )
    except (ConfigError, ValueError) as exc:
        _emit_error("E_CONFIG", str(exc))
        return EXIT_VALIDATION

    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, config.log_level.upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        _emit_error("E_USAGE", str(exc))
        return EXIT_VALIDATION
    except (records_mod.RecordError, wiki_mod.ParseError, annotate_mod.AnnotateError,
            metrics_mod.MetricsError, pipelines_mod.PipelineError, ConfigError, ValueError) as exc:
        _emit_error(getattr(exc, "code", "E_VALIDATION"), str(exc))
        return EXIT_VALIDATION
    except (ProviderError, cleaner_mod.CleanerError, OSError) as exc:
        _emit_error("E_RUNTIME", str(exc))
        return EXIT_RUNTIME
    except KeyboardInterrupt:
        _emit_error("E_INTERRUPTED", "interrupted; partial outputs flushed where supported")
        return 130


def _emit_error(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": code, "message": message}, ensure_ascii=False) + "\n")


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
