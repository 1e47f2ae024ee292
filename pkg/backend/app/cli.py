"""
Command-line surface for the facet-wise abstract generation pipeline.

Usage:
    python main.py ingest --in articles/ --out corpus.jsonl --stats
    python main.py split --corpus corpus.jsonl --ratios 0.8,0.1,0.1 --seed 13 --out-dir splits/
    python main.py generate --corpus corpus.jsonl --split fs --prompt di --guidance trumls:5 \\
        --llm-backend http --out records.jsonl --workers 4
    python main.py evaluate --records records.jsonl --corpus corpus.jsonl --lexicon umls.tsv --out report.csv
    python main.py evaluate --self-reference --corpus corpus.jsonl --out reference.csv
    python main.py compare --a report_a.csv --b report_b.csv --ref reference.csv --out table.md

Exit status: 0 success, 1 data failure, 2 usage error.
"""

import argparse
import json
import logging
import sys
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from app.config import Settings, get_settings
from app.exceptions import (
    ConfigError,
    EmptyCorpus,
    FacetForgeError,
    MissingCorpus,
    NoOverlap,
    SchemaError,
    TooFewPairs,
)
from app.schemas.corpus import Article, DatasetSplit
from app.schemas.generation import (
    ClassifierBackend,
    FallbackStage,
    GenerationConfig,
    GenerationRecord,
    Guidance,
    GuidanceKind,
    PromptFamily,
    SplitStrategy,
)
from app.schemas.llm import LlmBackendKind, LlmConfig
from app.schemas.metrics import METRIC_COLUMNS, PROXIMITY_METRICS, BootstrapMode, BootstrapResult
from app.schemas.progress import Progress, RunManifest
from app.services.corpus import corpus_stats, import_jats, list_xml_inputs, load_jsonl, split_dataset, write_jsonl
from app.services.entities import ConceptLexicon
from app.services.llm_client import LlmClient, load_script
from app.services.metrics import (
    aggregate_reports,
    evaluate_record,
    evaluate_reference,
    import_external_scores,
    load_report_frame,
    write_reports,
)
from app.services.splitting import CueLexicon, HeaderMap, SentenceClassifier
from app.services.stats import align, emit_comparison_table, paired_bootstrap
from app.services.summarizer import AbstractGenerator, failed_record
from app.services.usage_log import UsageRecorder

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def setup_logging(settings: Settings) -> None:
    settings.log_path.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if settings.debug else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(settings.log_path),
            logging.StreamHandler(),
        ],
        force=True,
    )


def write_progress(
    path: Path,
    is_running: bool,
    mode: str = "",
    current: int = 0,
    total: int = 0,
    current_doc: str = "",
    started_at: Optional[datetime] = None,
) -> None:
    """Write progress to a JSON file for external polling."""
    progress = Progress(
        is_running=is_running,
        mode=mode,
        current=current,
        total=total,
        current_doc=current_doc,
        started_at=started_at if is_running else None,
        updated_at=datetime.now(),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(progress.model_dump_json(indent=2), encoding="utf-8")


# ========== Shared helpers ==========

def _load_corpus(path: Path) -> list[Article]:
    if not path.is_file():
        raise MissingCorpus(f"corpus not found: {path}")
    return list(load_jsonl(path))


def _select(articles: list[Article], args: argparse.Namespace) -> list[Article]:
    """Restrict to one split subset and/or the first --limit articles."""
    if getattr(args, "split_ids", None):
        try:
            split = DatasetSplit.model_validate_json(Path(args.split_ids).read_text(encoding="utf-8"))
        except (OSError, ValidationError) as e:
            raise ConfigError(f"cannot read split file {args.split_ids}: {e}") from e
        wanted = set(split.ids_for(args.subset))
        articles = [a for a in articles if a.doc_id in wanted]
    if getattr(args, "limit", None):
        articles = articles[:args.limit]
    return articles


def _llm_config(settings: Settings, backend_spec: str, seed: Optional[int]) -> LlmConfig:
    """Parse `http`, `replay:PATH`, `scripted:PATH` or `record:PATH`."""
    kind, _, path = backend_spec.partition(":")
    try:
        backend = LlmBackendKind(kind)
    except ValueError as e:
        raise ConfigError(f"unknown llm backend {kind!r}") from e
    if backend is not LlmBackendKind.HTTP and not path:
        raise ConfigError(f"{kind} backend needs a file: {kind}:PATH")

    script = []
    if backend is LlmBackendKind.SCRIPTED:
        try:
            script = load_script(path)
        except (OSError, ValidationError, ValueError) as e:
            raise ConfigError(f"cannot load script {path}: {e}") from e
    if backend is LlmBackendKind.REPLAY and not Path(path).is_file():
        raise ConfigError(f"cassette not found: {path}")

    return LlmConfig(
        endpoint_url=settings.llm_url,
        model_name=settings.llm_model,
        temperature=settings.llm_temperature,
        max_retries=settings.llm_max_retries,
        timeout=settings.llm_timeout,
        backend=backend,
        cassette_path=Path(path) if backend in (LlmBackendKind.REPLAY, LlmBackendKind.RECORD) else None,
        script=script,
        backoff_base=settings.llm_backoff_base,
        backoff_factor=settings.llm_backoff_factor,
        max_in_flight=settings.llm_max_in_flight,
        seed=seed,
    )


def _load_table(loader, path: Path, what: str):
    if not Path(path).is_file():
        raise ConfigError(f"{what} not found: {path}")
    return loader(path)


# ========== Commands ==========

def cmd_ingest(args: argparse.Namespace, settings: Settings) -> int:
    """Convert JATS XML (file or directory) or a JSONL corpus into the canonical JSONL corpus."""
    if not args.out and not args.stats:
        raise ConfigError("nothing to do: give --out and/or --stats")
    source = Path(args.input)
    if not source.exists():
        raise ConfigError(f"input not found: {source}")

    if source.suffix.lower() == ".jsonl":
        loader = load_jsonl(source)
        articles = list(loader)
        errors = [(source, e) for e in loader.errors]
        total = len(articles) + len(errors)
    else:
        paths = list_xml_inputs(source)
        articles, errors = import_jats(paths, workers=settings.workers)
        total = len(paths)

    for path, error in errors:
        print(f"ERROR {path}: {error}", file=sys.stderr)
    logger.info(f"Ingested {len(articles)}/{total} inputs ({len(errors)} failed)")
    if not articles:
        logger.error("No input could be ingested")
        return EXIT_DATA

    if args.out:
        count = write_jsonl(articles, args.out)
        logger.info(f"Wrote {count} articles to {args.out}")
    if args.stats:
        stats = corpus_stats(articles, args.token_limit or settings.token_limit)
        print(stats.model_dump_json(indent=2))
    return EXIT_OK


def cmd_split(args: argparse.Namespace, settings: Settings) -> int:
    """Write train/val/test JSONL files plus split.json with the id lists."""
    try:
        ratios = tuple(float(r) for r in args.ratios.split(","))
    except ValueError as e:
        raise ConfigError(f"bad --ratios {args.ratios!r}") from e

    articles = _load_corpus(Path(args.corpus))
    split = split_dataset([a.doc_id for a in articles], ratios, args.seed)
    by_id = {a.doc_id: a for a in articles}

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for subset in ("train", "val", "test"):
        count = write_jsonl((by_id[i] for i in split.ids_for(subset)), out_dir / f"{subset}.jsonl")
        logger.info(f"{subset}: {count} articles")
    (out_dir / "split.json").write_text(split.model_dump_json(indent=2), encoding="utf-8")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace, settings: Settings) -> int:
    """Generate one abstract per article and write GenerationRecords as JSONL."""
    guidance = Guidance.parse(args.guidance)
    lexicon = None
    if guidance.kind is GuidanceKind.TRUMLS:
        lexicon = _load_table(ConceptLexicon.load, Path(args.lexicon or settings.lexicon_path), "concept lexicon")

    config = GenerationConfig(
        splitting=SplitStrategy(args.split),
        prompt=PromptFamily(args.prompt),
        guidance=guidance,
        llm=_llm_config(settings, args.llm_backend, args.seed),
        lexicon=lexicon,
        classifier=ClassifierBackend(args.classifier),
        allow_rule_fallback=not args.no_rule_fallback,
        facet_parse_retries=settings.facet_parse_retries,
    )
    fingerprint = config.fingerprint()
    logger.info(f"Configuration {fingerprint}: {config.describe()}")

    articles = _select(_load_corpus(Path(args.corpus)), args)
    if not articles:
        raise EmptyCorpus("no articles selected")

    usage_url = args.usage_db or settings.database_url
    usage = UsageRecorder.from_url(usage_url) if usage_url else None
    started_at = datetime.now()

    with LlmClient(config.llm, usage=usage) as client:
        client.batch_id = f"{fingerprint}-{started_at:%Y%m%d%H%M%S}"

        classifier = None
        if config.splitting is SplitStrategy.FS:
            cues = _load_table(CueLexicon.load, Path(args.cue_lexicon or settings.cue_lexicon_path), "cue lexicon")
            classifier = SentenceClassifier(
                config.classifier,
                cues,
                client=client if config.classifier is ClassifierBackend.LLM else None,
                allow_rule_fallback=config.allow_rule_fallback,
            )
        header_map = None
        if config.splitting is SplitStrategy.SH:
            header_map = _load_table(HeaderMap.load, Path(args.header_map or settings.header_map_path), "header map")

        generator = AbstractGenerator(
            config,
            client,
            classifier=classifier,
            header_map=header_map,
            textrank_params={
                "window": settings.textrank_window,
                "damping": settings.textrank_damping,
                "tol": settings.textrank_tol,
                "max_iter": settings.textrank_max_iter,
            },
        )

        def run_one(article: Article) -> GenerationRecord:
            try:
                return generator.generate_abstract(article)
            except FacetForgeError as e:
                logger.error(f"[{article.doc_id}] generation failed: {e}")
                return failed_record(article, generator, e)

        manifest = _run_generation(articles, run_one, Path(args.out), settings, started_at)
        manifest.config_fingerprint = fingerprint
        manifest.config = config.describe()
        manifest.input_path = str(args.corpus)
        manifest.llm_calls = client.calls

    manifest_path = Path(args.out).with_suffix(".manifest.json")
    manifest.output_paths = [str(args.out), str(manifest_path)]
    manifest_path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")

    logger.info(
        f"Done: {manifest.succeeded}/{manifest.processed} succeeded, "
        f"{manifest.fallback_regrouped} regrouped, {manifest.fallback_lead300} Lead-300, "
        f"{manifest.llm_calls} LLM calls in {manifest.wall_time_s:.1f}s"
    )
    if usage is not None:
        logger.info(f"Usage log: {usage.stats(client.batch_id)}")
    return EXIT_OK if manifest.succeeded else EXIT_DATA


def _run_generation(articles, run_one, out: Path, settings: Settings, started_at: datetime) -> RunManifest:
    """Process articles on a worker pool; records are written in input order, one write per line."""
    start = time.perf_counter()
    total = len(articles)
    statuses: Counter = Counter()
    counts: Counter = Counter()
    write_progress(settings.progress_path, True, "generate", 0, total, started_at=started_at)

    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        with open(out, "w", encoding="utf-8") as f, ThreadPoolExecutor(max_workers=max(1, settings.workers)) as executor:
            for i, record in enumerate(executor.map(run_one, articles), start=1):
                f.write(record.to_jsonl() + "\n")
                f.flush()
                counts["succeeded" if record.succeeded else "failed"] += 1
                if record.fallback_stage is FallbackStage.REGROUPED:
                    counts["regrouped"] += 1
                elif record.fallback_stage is FallbackStage.LEAD300:
                    counts["lead300"] += 1
                counts["refine_degraded"] += int(record.refine_degraded)
                statuses.update(s.status.value for s in record.facet_summaries)
                write_progress(settings.progress_path, True, "generate", i, total, record.doc_id, started_at)
    finally:
        write_progress(settings.progress_path, False)

    return RunManifest(
        config_fingerprint="",
        input_path="",
        processed=counts["succeeded"] + counts["failed"],
        succeeded=counts["succeeded"],
        failed=counts["failed"],
        fallback_regrouped=counts["regrouped"],
        fallback_lead300=counts["lead300"],
        refine_degraded=counts["refine_degraded"],
        facet_status_counts=dict(sorted(statuses.items())),
        started_at=started_at,
        wall_time_s=time.perf_counter() - start,
    )


def _read_records(path: Path) -> list[GenerationRecord]:
    if not path.is_file():
        raise ConfigError(f"records not found: {path}")
    records = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(GenerationRecord.model_validate_json(line))
            except ValidationError as e:
                raise SchemaError(line_no, f"not a generation record: {e.errors()[0]['msg']}") from e
    return records


def cmd_evaluate(args: argparse.Namespace, settings: Settings) -> int:
    """Per-document metric report plus an aggregate row."""
    if not args.self_reference and not args.records:
        raise ConfigError("give --records, or --self-reference to score the human abstracts")
    articles = _select(_load_corpus(Path(args.corpus)), args)
    by_id = {a.doc_id: a for a in articles}
    lexicon = _load_table(ConceptLexicon.load, Path(args.lexicon), "concept lexicon") if args.lexicon else None
    reference_frame = _load_table(load_report_frame, Path(args.ref), "reference report") if args.ref else None

    if args.self_reference:
        reports = [evaluate_reference(a) for a in articles]
    else:
        reports = []
        for record in _read_records(Path(args.records)):
            article = by_id.get(record.doc_id)
            if article is None:
                logger.warning(f"Record {record.doc_id} has no article in the corpus, skipped")
                continue
            reports.append(evaluate_record(record, article, lexicon))
    if not reports:
        logger.error("Nothing to evaluate")
        return EXIT_DATA

    if args.external:
        if not Path(args.external).is_file():
            raise ConfigError(f"external scores not found: {args.external}")
        reports, _ = import_external_scores(args.external, reports)

    out = Path(args.out)
    written = write_reports(reports, out)
    reference = aggregate_reports(reference_frame) if reference_frame is not None else None
    aggregate = aggregate_reports(reports, reference=reference, label=out.stem)
    aggregate_path = out.with_name(f"{out.stem}.aggregate.csv")
    aggregate.to_csv(aggregate_path, float_format="%.3f")
    print(aggregate.to_csv(float_format="%.3f"), end="")
    logger.info(f"Evaluated {len(reports)} documents -> {', '.join(str(p) for p in written + [aggregate_path])}")
    return EXIT_OK


def _shared_metrics(*frames) -> list[str]:
    shared = set(frames[0].columns)
    for frame in frames[1:]:
        shared &= set(frame.columns)
    shared.discard("doc_id")
    known = [m for m in METRIC_COLUMNS if m in shared]
    return known + sorted(shared - set(known))


def cmd_compare(args: argparse.Namespace, settings: Settings) -> int:
    """Paired bootstrap per metric between report A and report B."""
    frame_a = _load_table(load_report_frame, Path(args.a), "report")
    frame_b = _load_table(load_report_frame, Path(args.b), "report")
    frame_ref = _load_table(load_report_frame, Path(args.ref), "report") if args.ref else None
    iters = args.iters or settings.bootstrap_iters

    metrics = args.metrics.split(",") if args.metrics else _shared_metrics(frame_a, frame_b)
    results: dict[str, BootstrapResult] = {}
    for metric in metrics:
        proximity = frame_ref is not None and metric in PROXIMITY_METRICS
        try:
            scores = align(frame_a, frame_b, metric, frame_ref if proximity else None)
            results[metric] = paired_bootstrap(
                scores,
                mode=BootstrapMode.PROXIMITY if proximity else BootstrapMode.RAW,
                iters=iters,
                seed=args.seed,
                metric=metric,
            )
        except (NoOverlap, TooFewPairs) as e:
            logger.warning(f"Skipping {metric}: {e}")
    if not results:
        raise NoOverlap("no metric could be compared")

    out = Path(args.out)
    fmt = args.format or ("markdown" if out.suffix.lower() == ".md" else "csv")
    table = emit_comparison_table(results, fmt=fmt)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table, encoding="utf-8")
    blob = {metric: r.model_dump(mode="json") for metric, r in results.items()}
    out.with_suffix(".json").write_text(json.dumps(blob, indent=2), encoding="utf-8")
    print(table, end="")
    return EXIT_OK


# ========== Parser ==========

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="TOML settings file (default: $FF_CONFIG)")
    common.add_argument("--debug", action="store_true", help="Verbose logging")

    parser = argparse.ArgumentParser(
        prog="facetforge",
        description="Facet-wise abstract generation for long biomedical articles",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ingest = sub.add_parser("ingest", parents=[common], help="JATS XML -> JSONL corpus")
    ingest.add_argument("--in", dest="input", required=True, help="XML file, directory of XML files, or a .jsonl corpus")
    ingest.add_argument("--out", type=str, default=None, help="Output JSONL corpus")
    ingest.add_argument("--stats", action="store_true", help="Print full-text token statistics")
    ingest.add_argument("--limit", dest="token_limit", type=int, default=None, help="Context limit for --stats (default: 8192)")
    ingest.add_argument("--workers", type=int, default=None, help="Parallel parsers")
    ingest.set_defaults(func=cmd_ingest)

    split = sub.add_parser("split", parents=[common], help="Seeded train/val/test split")
    split.add_argument("--corpus", required=True)
    split.add_argument("--ratios", default="0.8,0.1,0.1", help="train,val,test fractions (default: 0.8,0.1,0.1)")
    split.add_argument("--seed", type=int, default=0)
    split.add_argument("--out-dir", required=True)
    split.set_defaults(func=cmd_split)

    subset = argparse.ArgumentParser(add_help=False)
    subset.add_argument("--split-ids", type=str, default=None, help="split.json written by the split command")
    subset.add_argument("--subset", choices=["train", "val", "test"], default="test")
    subset.add_argument("--limit", type=int, default=None, help="Process the first N articles only")

    generate = sub.add_parser("generate", parents=[common, subset], help="Generate abstracts")
    generate.add_argument("--corpus", required=True)
    generate.add_argument("--split", choices=[s.value for s in SplitStrategy], default="fs")
    generate.add_argument("--prompt", choices=[p.value for p in PromptFamily], default="bc")
    generate.add_argument("--guidance", default="none", help="none | cot | trumls:N")
    generate.add_argument(
        "--llm-backend", default="http", help="http | replay:PATH | scripted:PATH | record:PATH"
    )
    generate.add_argument("--out", required=True, help="Output records JSONL")
    generate.add_argument("--workers", type=int, default=None, help="Articles processed in parallel")
    generate.add_argument("--seed", type=int, default=None, help="Sampling seed sent to the model")
    generate.add_argument("--llm-url", type=str, default=None)
    generate.add_argument("--model", type=str, default=None)
    generate.add_argument("--lexicon", type=str, default=None, help="Concept lexicon TSV for trumls guidance")
    generate.add_argument("--header-map", type=str, default=None, help="Header normalization TSV for sh splitting")
    generate.add_argument("--cue-lexicon", type=str, default=None, help="Cue TSV for the rule classifier")
    generate.add_argument("--classifier", choices=[c.value for c in ClassifierBackend], default="llm")
    generate.add_argument("--no-rule-fallback", action="store_true", help="Fail the article when the classifier LLM is down")
    generate.add_argument("--usage-db", type=str, default=None, help="SQLAlchemy URL of the LLM usage log")
    generate.set_defaults(func=cmd_generate)

    evaluate = sub.add_parser("evaluate", parents=[common, subset], help="Score records against sources and references")
    evaluate.add_argument("--records", type=str, default=None)
    evaluate.add_argument("--corpus", required=True)
    evaluate.add_argument("--self-reference", action="store_true", help="Score the human abstracts instead of records")
    evaluate.add_argument("--lexicon", type=str, default=None)
    evaluate.add_argument("--external", type=str, default=None, help="CSV doc_id,metric,value")
    evaluate.add_argument("--ref", type=str, default=None, help="Reference report; aggregate cells show the difference")
    evaluate.add_argument("--out", required=True)
    evaluate.set_defaults(func=cmd_evaluate)

    compare = sub.add_parser("compare", parents=[common], help="Paired bootstrap between two reports")
    compare.add_argument("--a", required=True)
    compare.add_argument("--b", required=True)
    compare.add_argument("--ref", type=str, default=None, help="Reference report; enables proximity mode")
    compare.add_argument("--iters", type=int, default=None, help="Bootstrap iterations (default: 10000)")
    compare.add_argument("--seed", type=int, default=0)
    compare.add_argument("--metrics", type=str, default=None, help="Comma-separated subset of metrics")
    compare.add_argument("--format", choices=["csv", "markdown"], default=None)
    compare.add_argument("--out", required=True)
    compare.set_defaults(func=cmd_compare)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        settings = get_settings(
            args.config,
            debug=True if args.debug else None,
            workers=getattr(args, "workers", None),
            llm_url=getattr(args, "llm_url", None),
            llm_model=getattr(args, "model", None),
        )
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    setup_logging(settings)

    try:
        return args.func(args, settings)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except FacetForgeError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
