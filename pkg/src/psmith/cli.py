"""Command-line entry point stitching the modules into the offline workflow.

Subcommands mirror the stage separation of the pipeline so the
prompt-validation step falls naturally between ``adapt`` and ``run``:

    psmith sample  --train DIR --out report.jsonl
    psmith adapt   --report report.jsonl --train DIR --test DIR --db ID --out bundle.json
    psmith run     --mode ltmp-da-gp --bundle bundle.json --test DIR --runs runs/ --run-id R1
    psmith eval    --predictions runs/R1/predictions.jsonl --test DIR
    psmith replay-record --out store.jsonl CACHE_OR_STORE...

Every reported number is reconstructible: the resolved configuration is
snapshotted into the run manifest before any generation happens.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
from pathlib import Path

import click

from . import evaluator, sampler
from .corpus import (
    attach_value_profile,
    ensure_disjoint,
    load_kaggledbqa,
    load_spider,
    load_spider_ss,
)
from .errors import BudgetExceeded
from .llmclient import LlmClient, ReplayStore, forbidden_transport
from .pipelines import (
    AdaptationBundle,
    PipelineConfig,
    read_predictions,
    run_pipeline,
)
from .pipelines.adapt import adapt_exemplars
from .pipelines.run import MODES
from .promptforge import TokenBudget, save_artifact
from .sqlanalysis.ops import load_catalog

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_COVERAGE = 3
EXIT_BUDGET = 4
EXIT_DEFECTS = 5


# --- configuration -----------------------------------------------------------

CONFIG_KEYS = {
    "mode": str,
    "ted_threshold": int,
    "max_beam_samples": int,
    "seed": int,
    "budget_limit": int,
    "token_counter": str,
    "numeric_render": str,
    "cot_enabled": lambda v: v.lower() in ("1", "true", "yes", "on"),
    "max_output_tokens": int,
    "workers": int,
    "model": str,
    "llm_mode": str,
    "api_surface": str,
    "spend_cap": int,
}


def read_config_file(path: str | Path) -> dict:
    """Parse a flat ``key = value`` configuration file (# starts a comment)."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise click.ClickException(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise click.ClickException(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = CONFIG_KEYS[key](value)
    return values


def resolve_config(config_path: str | None, **overrides) -> dict:
    values: dict = {}
    if config_path:
        values.update(read_config_file(config_path))
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    return values


def build_pipeline_config(values: dict, mode: str | None = None) -> PipelineConfig:
    budget = TokenBudget(limit=values.get("budget_limit", 4096),
                         counter=values.get("token_counter", "heuristic"))
    return PipelineConfig(
        mode=mode or values.get("mode", "gp"),
        ted_threshold=values.get("ted_threshold", 2),
        max_beam_samples=values.get("max_beam_samples", 8),
        seed=values.get("seed", 0),
        budget=budget,
        numeric_render=values.get("numeric_render", "range"),
        cot_enabled=values.get("cot_enabled", True),
        max_output_tokens=values.get("max_output_tokens", 256),
        workers=values.get("workers", 1),
    )


def build_client(values: dict, replay: str | None, record: str | None,
                 cache_dir: str | None) -> LlmClient:
    if replay:
        # --replay globally forces replay mode and fails fast on any network use
        return LlmClient(mode="replay", replay_store=ReplayStore.load(replay),
                         model=values.get("model"),
                         transport=forbidden_transport,
                         record_path=record)
    mode = values.get("llm_mode", "live")
    return LlmClient(mode=mode,
                     cache_dir=cache_dir,
                     model=values.get("model"),
                     spend_cap=values.get("spend_cap", 200_000),
                     api_surface=values.get("api_surface", "completions"),
                     record_path=record)


def _client_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True),
                     default=None, help="key = value configuration file"),
        click.option("--replay", type=click.Path(exists=True), default=None,
                     help="replay store; forces offline replay mode"),
        click.option("--record", type=click.Path(), default=None,
                     help="append every generation to this replay store"),
        click.option("--cache-dir", type=click.Path(), default=None,
                     help="content-addressed completion cache directory"),
        click.option("--model", default=None, help="model id (or PSMITH_MODEL)"),
        click.option("--seed", type=int, default=None),
        click.option("--budget-limit", type=int, default=None),
        click.option("--ted-threshold", type=int, default=None),
        click.option("--max-beam-samples", type=int, default=None),
        click.option("--numeric-render", type=click.Choice(["range", "samples"]),
                     default=None),
        click.option("--cot/--no-cot", "cot_enabled", default=None),
        click.option("--workers", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _load_test_dataset(test_dir: str):
    """A test directory is KaggleDBQA-format when it has an examples/ dir,
    Spider-format otherwise."""
    root = Path(test_dir)
    if (root / "examples").is_dir():
        return load_kaggledbqa(root)
    return load_spider(root, role="test")


def _write_manifest(run_dir: Path, payload: dict) -> None:
    manifest = run_dir / "manifest.json"
    if manifest.exists():
        previous = json.loads(manifest.read_text(encoding="utf-8"))
        if previous.get("config") != payload["config"]:
            raise click.ClickException(
                f"run {payload['run_id']} already exists with a different "
                "configuration; pick a new --run-id")
        return
    payload["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    manifest.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def main(verbose: bool):
    """Offline few-shot prompt synthesis and evaluation for cross-domain
    Text-to-SQL."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--train", "train_dir", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", type=click.Path(exists=True), default=None,
              help="primitive-op catalog file (default: the packaged catalog)")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--budget-limit", type=int, default=None)
@click.option("--token-counter", default=None)
def sample(train_dir, catalog_path, out_path, config_path, budget_limit, token_counter):
    """Sample a minimal operator-complete exemplar set from a train corpus."""
    values = resolve_config(config_path, budget_limit=budget_limit,
                            token_counter=token_counter)
    catalog = load_catalog(catalog_path)
    dataset = load_spider(train_dir)
    budget = TokenBudget(limit=values.get("budget_limit", 4096),
                         counter=values.get("token_counter", "heuristic"))
    try:
        result = sampler.sample_exemplars(dataset, catalog, budget)
    except BudgetExceeded as exc:
        click.echo(f"budget exceeded: {exc}", err=True)
        raise SystemExit(EXIT_BUDGET) from None
    sampler.write_report(result, out_path)
    click.echo(sampler.summarize(result))
    click.echo(f"report written to {out_path}")
    if result.unattainable:
        click.echo(f"warning: {len(result.unattainable)} catalog ops are "
                   "unattainable from this corpus", err=True)
        raise SystemExit(EXIT_COVERAGE)


@main.command()
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
@click.option("--train", "train_dir", required=True, type=click.Path(exists=True))
@click.option("--test", "test_dir", required=True, type=click.Path(exists=True))
@click.option("--db", "db_id", required=True, help="target database id")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--spider-ss", "spider_ss_dir", type=click.Path(exists=True), default=None,
              help="needed with --draft-decompositions")
@click.option("--draft-decompositions", is_flag=True,
              help="also draft sub-questions and intermediate steps per "
                   "exemplar (finalize them by hand before ltmp-da-gp)")
@click.option("--dry-run", is_flag=True, help="write prompts, skip generation")
@click.option("--prompts-dir", type=click.Path(), default=None,
              help="where --dry-run writes prompt artifacts")
@_client_options
def adapt(report_path, train_dir, test_dir, db_id, out_path, spider_ss_dir,
          draft_decompositions, dry_run, prompts_dir, config_path, replay,
          record, cache_dir, model, **overrides):
    """Auto-adapt sampled exemplars to the target database domain."""
    values = resolve_config(config_path, model=model, **overrides)
    cfg = build_pipeline_config(values, mode="da-gp")
    exemplars = sampler.read_report(report_path)
    train = load_spider(train_dir)
    test = _load_test_dataset(test_dir)
    ensure_disjoint(train, test)
    if db_id not in test.databases:
        raise click.ClickException(f"{db_id!r} is not a database of {test_dir}")
    target = test.databases[db_id]

    if dry_run:
        from .promptforge import build_adapt_sql_prompt

        out_dir = Path(prompts_dir or (Path(out_path).parent / "adapt-prompts"))
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, item in enumerate(exemplars):
            artifact = build_adapt_sql_prompt(
                train.databases[item.db_id], item.sql, target, cfg.budget)
            save_artifact(artifact, out_dir / f"exemplar{i:02d}.prompt")
        click.echo(f"wrote {len(exemplars)} stage-1 prompts to {out_dir}")
        return

    draft_records = None
    if draft_decompositions:
        if spider_ss_dir is None:
            raise click.ClickException("--draft-decompositions needs --spider-ss")
        draft_records = load_spider_ss(spider_ss_dir)

    client = build_client(values, replay, record, cache_dir)
    bundle, failed = adapt_exemplars(
        exemplars, train.databases, target, client,
        ted_threshold=cfg.ted_threshold,
        max_beam_samples=cfg.max_beam_samples,
        budget=cfg.budget,
        max_output_tokens=cfg.max_output_tokens,
        draft_records=draft_records,
        draft_context=train.databases)

    bundle.save(out_path)
    click.echo(f"adapted {len(bundle.exemplars)} of {len(exemplars)} exemplars "
               f"-> {out_path}")
    for line in failed:
        click.echo(f"failed: {line}", err=True)
    if failed:
        raise SystemExit(1)


@main.command(name="run")
@click.option("--mode", required=True, type=click.Choice(MODES))
@click.option("--report", "report_path", type=click.Path(exists=True), default=None)
@click.option("--bundle", "bundle_path", type=click.Path(exists=True), default=None)
@click.option("--train", "train_dir", type=click.Path(exists=True), default=None)
@click.option("--test", "test_dir", required=True, type=click.Path(exists=True))
@click.option("--spider-ss", "spider_ss_dir", type=click.Path(exists=True), default=None)
@click.option("--runs", "runs_root", type=click.Path(), default="runs")
@click.option("--run-id", default=None, help="resumable run identifier")
@_client_options
def run_cmd(mode, report_path, bundle_path, train_dir, test_dir, spider_ss_dir,
            runs_root, run_id, config_path, replay, record, cache_dir, model,
            **overrides):
    """Run a prompting pipeline over the test set and persist predictions."""
    values = resolve_config(config_path, model=model, **overrides)
    cfg = build_pipeline_config(values, mode=mode)
    test = _load_test_dataset(test_dir)

    exemplars = train = ss_records = bundle = target_profile = None
    if mode in ("gp", "ltmp-gp"):
        if report_path is None or train_dir is None:
            raise click.ClickException(f"--mode {mode} needs --report and --train")
        exemplars = sampler.read_report(report_path)
        train = load_spider(train_dir)
        ensure_disjoint(train, test)
        if mode == "ltmp-gp":
            if spider_ss_dir is None:
                raise click.ClickException("--mode ltmp-gp needs --spider-ss")
            ss_records = load_spider_ss(spider_ss_dir)
    else:
        if bundle_path is None:
            raise click.ClickException(f"--mode {mode} needs --bundle")
        bundle = AdaptationBundle.load(bundle_path)
        if bundle.target_db_id not in test.databases:
            raise click.ClickException(
                f"bundle targets {bundle.target_db_id!r}, absent from {test_dir}")
        target_profile = attach_value_profile(
            test.databases[bundle.target_db_id], cfg.seed, cfg.numeric_render)

    if run_id is None:
        run_id = _dt.datetime.now().strftime("run-%Y%m%d-%H%M%S")
    run_dir = Path(runs_root) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_manifest(run_dir, {
        "run_id": run_id,
        "mode": mode,
        "config": {
            "ted_threshold": cfg.ted_threshold,
            "max_beam_samples": cfg.max_beam_samples,
            "seed": cfg.seed,
            "budget_limit": cfg.budget.limit,
            "token_counter": cfg.budget.counter,
            "numeric_render": cfg.numeric_render,
            "cot_enabled": cfg.cot_enabled,
            "max_output_tokens": cfg.max_output_tokens,
        },
        "inputs": {
            "test": str(test_dir),
            "train": str(train_dir) if train_dir else None,
            "report": str(report_path) if report_path else None,
            "bundle": str(bundle_path) if bundle_path else None,
            "spider_ss": str(spider_ss_dir) if spider_ss_dir else None,
            "replay": str(replay) if replay else None,
        },
    })

    client = build_client(values, replay, record, cache_dir)
    outcome = run_pipeline(cfg, client, test, train=train, exemplars=exemplars,
                           ss_records=ss_records, bundle=bundle,
                           target_profile=target_profile, out_dir=run_dir)
    click.echo(f"{len(outcome.predictions)} predictions "
               f"({len(outcome.errors)} per-query failures) -> "
               f"{run_dir / 'predictions.jsonl'}")
    for key, message in outcome.errors:
        click.echo(f"failed {key}: {message}", err=True)


@main.command(name="eval")
@click.option("--predictions", "predictions_path", required=True,
              type=click.Path(exists=True))
@click.option("--test", "test_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="write report.txt and report.jsonl here")
def eval_cmd(predictions_path, test_dir, out_dir):
    """Score predictions by execution accuracy against the test databases.

    Evaluation covers every gold query of the databases the predictions
    touch; unpredicted queries of those databases count as wrong.
    """
    predictions = read_predictions(predictions_path)
    gold = _load_test_dataset(test_dir)
    covered = {db_id for db_id, _ in predictions}
    if covered != set(gold.databases):
        from psmith.corpus.types import AnnotatedDataset

        gold = AnnotatedDataset(
            databases=gold.databases,
            examples=[ex for ex in gold.examples if ex.db_id in covered],
            role=gold.role)
    report = evaluator.evaluate(predictions, gold)
    text = evaluator.format_report(report)
    click.echo(text)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text + "\n", encoding="utf-8")
        with open(out / "report.jsonl", "w", encoding="utf-8") as f:
            for record in evaluator.report_records(report):
                f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
    if report.dataset_defects:
        raise SystemExit(EXIT_DEFECTS)


@main.command(name="replay-record")
@click.argument("inputs", nargs=-1, required=True,
                type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def replay_record(inputs, out_path):
    """Consolidate cache directories and/or store files into one replay store."""
    records: dict[str, dict] = {}
    for source in inputs:
        path = Path(source)
        files = sorted(path.glob("*.json")) if path.is_dir() else [path]
        for file in files:
            text = file.read_text(encoding="utf-8")
            rows = [json.loads(line) for line in text.splitlines() if line.strip()] \
                if file.suffix == ".jsonl" else [json.loads(text)]
            for row in rows:
                records.setdefault(row["key"], row)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as f:
        for key in sorted(records):
            f.write(json.dumps(records[key], ensure_ascii=False, sort_keys=True) + "\n")
    click.echo(f"{len(records)} records -> {out}")


if __name__ == "__main__":
    main()
