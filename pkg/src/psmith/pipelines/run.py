"""Pipeline orchestration over a test set.

Four modes: ``gp``, ``da-gp``, ``ltmp-gp``, ``ltmp-da-gp``. Per-query
failures are recorded as empty predictions (scored wrong downstream) and
never abort the batch. Every prompt artifact and reasoning trace can be
persisted for audit, and completed per-query artifacts are skipped on
resume.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..corpus.types import AnnotatedDataset, AnnotatedExample, DecompositionRecord
from ..errors import MissingAdaptation, PsmithError
from ..llmclient import LlmClient
from ..promptforge.budget import TokenBudget
from ..promptforge.prompts import (
    LtmpChain,
    PromptArtifact,
    build_da_prompt,
    build_generic_prompt,
    build_ltmp_prompt,
    exemplar_id,
    save_artifact,
)
from ..sampler import ExemplarSet
from .adapt import AdaptationBundle
from .ltmp import (
    LtmpTrace,
    run_stage1_decompose,
    run_stage2_map_natsql,
    run_stage3_compose_sql,
)
from .normalize import normalize_sql

logger = logging.getLogger(__name__)

MODES = ("gp", "da-gp", "ltmp-gp", "ltmp-da-gp")


@dataclass
class PipelineConfig:
    mode: str = "gp"
    ted_threshold: int = 2
    max_beam_samples: int = 8
    seed: int = 0
    budget: TokenBudget = field(default_factory=TokenBudget)
    numeric_render: str = "range"
    cot_enabled: bool = True
    max_output_tokens: int = 256
    workers: int = 1

    def __post_init__(self):
        if self.ted_threshold < 0:
            raise ValueError("ted_threshold must be non-negative")
        if self.max_beam_samples < 1:
            raise ValueError("max_beam_samples must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class PipelineOutcome:
    predictions: dict[tuple[str, str], str]
    traces: list[LtmpTrace] = field(default_factory=list)
    errors: list[tuple[tuple[str, str], str]] = field(default_factory=list)


def chains_from_records(exemplars: ExemplarSet,
                        records: dict[str, DecompositionRecord]) -> list[LtmpChain]:
    chains = []
    for item in exemplars:
        record = records.get(item.nl)
        if record is None:
            raise ValueError(f"no decomposition record for exemplar NL {item.nl!r}")
        chains.append(LtmpChain(item.db_id, item.nl, record.sub_questions,
                                record.natsql_steps, item.sql))
    return chains


def chains_from_bundle(bundle: AdaptationBundle) -> list[LtmpChain]:
    chains = []
    for entry in bundle.exemplars:
        if entry.sub_questions is None or entry.natsql_steps is None:
            raise MissingAdaptation(
                f"bundle entry {exemplar_id(entry.source)} lacks decompositions; "
                "draft them with adapt --draft-decompositions and finalize by hand")
        chains.append(LtmpChain(bundle.target_db_id, entry.adapted_nl,
                                entry.sub_questions, entry.natsql_steps,
                                entry.adapted_sql))
    return chains


class _QueryRunner:
    """Per-query work shared by all modes; one instance per pipeline run."""

    def __init__(self, cfg: PipelineConfig, client: LlmClient,
                 train: AnnotatedDataset | None, test: AnnotatedDataset,
                 exemplars: ExemplarSet | None,
                 ss_records: dict[str, DecompositionRecord] | None,
                 bundle: AdaptationBundle | None,
                 target_profile, out_dir: Path | None, resume: bool):
        self.cfg = cfg
        self.client = client
        self.train = train
        self.test = test
        self.exemplars = exemplars
        self.bundle = bundle
        self.target_profile = target_profile
        self.out_dir = out_dir
        self.resume = resume
        if cfg.mode == "ltmp-gp":
            self.chains = chains_from_records(exemplars, ss_records)
        elif cfg.mode == "ltmp-da-gp":
            self.chains = chains_from_bundle(bundle)
        else:
            self.chains = None
        if cfg.mode == "da-gp" and bundle is not None:
            self.pairs = [(e.adapted_nl, e.adapted_sql) for e in bundle.exemplars]
            self.pair_ids = [exemplar_id(e.source) for e in bundle.exemplars]
            if not self.pairs:
                logger.warning("adaptation bundle is empty; running a zero-shot "
                               "domain prompt")

    # -- persistence helpers --

    def _qdir(self, example: AnnotatedExample, index: int) -> Path | None:
        if self.out_dir is None:
            return None
        path = self.out_dir / example.db_id / str(index)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def _stored(self, qdir: Path | None) -> str | None:
        if qdir is None or not self.resume:
            return None
        final = qdir / "final.sql"
        if final.exists():
            return final.read_text(encoding="utf-8")
        return None

    def _persist(self, qdir: Path | None, name: str,
                 artifact: PromptArtifact | None = None,
                 text: str | None = None) -> None:
        if qdir is None:
            return
        if artifact is not None:
            save_artifact(artifact, qdir / f"{name}.prompt")
        if text is not None:
            (qdir / name).write_text(text, encoding="utf-8")

    # -- per-mode work --

    def run_one(self, example: AnnotatedExample, index: int) -> tuple[str, LtmpTrace | None, str | None]:
        """Returns (prediction sql, trace or None, error or None)."""
        qdir = self._qdir(example, index)
        stored = self._stored(qdir)
        if stored is not None:
            return stored, None, None
        try:
            if self.cfg.mode == "gp":
                sql = self._run_gp_query(example, qdir)
                trace = None
            elif self.cfg.mode == "da-gp":
                sql = self._run_da_query(example, qdir)
                trace = None
            else:
                sql, trace = self._run_ltmp_query(example, qdir)
        except PsmithError as exc:
            logger.warning("query failed (%s / %r): %s", example.db_id, example.nl, exc)
            self._persist(qdir, "error.txt", text=f"{type(exc).__name__}: {exc}\n")
            return "", None, f"{type(exc).__name__}: {exc}"
        self._persist(qdir, "final.sql", text=sql)
        return sql, trace, None

    def _run_gp_query(self, example: AnnotatedExample, qdir: Path | None) -> str:
        artifact = build_generic_prompt(
            self.exemplars, self.train.databases, example, self.cfg.budget,
            test_schema=self.test.databases[example.db_id])
        self._persist(qdir, "gp", artifact=artifact)
        request = self.client.request(
            artifact.text, max_output_tokens=self.cfg.max_output_tokens)
        result = self.client.generate(request)
        self._persist(qdir, "gp.out", text=result.text)
        return normalize_sql(result.text, cue="SELECT")

    def _run_da_query(self, example: AnnotatedExample, qdir: Path | None) -> str:
        artifact = build_da_prompt(self.target_profile, self.pairs, example.nl,
                                   self.cfg.budget, exemplar_ids=self.pair_ids)
        self._persist(qdir, "da_gp", artifact=artifact)
        request = self.client.request(
            artifact.text, max_output_tokens=self.cfg.max_output_tokens)
        result = self.client.generate(request)
        self._persist(qdir, "da_gp.out", text=result.text)
        return normalize_sql(result.text, cue="SELECT")

    def _run_ltmp_query(self, example: AnnotatedExample,
                        qdir: Path | None) -> tuple[str, LtmpTrace]:
        family = "gp" if self.cfg.mode == "ltmp-gp" else "da"
        trace = LtmpTrace(test_nl=example.nl)
        common = dict(
            chains=self.chains,
            budget=self.cfg.budget,
            cot_enabled=self.cfg.cot_enabled,
        )
        if family == "gp":
            common["databases"] = self.train.databases
            common["test_schema"] = self.test.databases[example.db_id]
        else:
            common["target"] = self.target_profile

        stage1 = build_ltmp_prompt(family, 1, test_nl=example.nl, **common)
        self._persist(qdir, "stage1", artifact=stage1)
        trace.stage_prompts.append(stage1.digest)
        subs, raw1 = run_stage1_decompose(stage1, self.client,
                                          self.cfg.max_output_tokens)
        self._persist(qdir, "stage1.out", text=raw1)
        trace.sub_questions = subs

        stage2 = build_ltmp_prompt(family, 2, test_nl=example.nl,
                                   test_sub_questions=subs, **common)
        self._persist(qdir, "stage2", artifact=stage2)
        trace.stage_prompts.append(stage2.digest)
        steps, raw2 = run_stage2_map_natsql(stage2, self.client, subs,
                                            self.cfg.max_output_tokens)
        self._persist(qdir, "stage2.out", text=raw2)
        trace.natsql_steps = steps

        stage3 = build_ltmp_prompt(family, 3, test_nl=example.nl,
                                   test_sub_questions=subs, test_steps=steps,
                                   **common)
        self._persist(qdir, "stage3", artifact=stage3)
        trace.stage_prompts.append(stage3.digest)
        sql, raw3 = run_stage3_compose_sql(stage3, self.client,
                                           self.cfg.max_output_tokens)
        self._persist(qdir, "stage3.out", text=raw3)
        trace.final_sql = sql
        return sql, trace


def run_pipeline(cfg: PipelineConfig, client: LlmClient,
                 test: AnnotatedDataset,
                 train: AnnotatedDataset | None = None,
                 exemplars: ExemplarSet | None = None,
                 ss_records: dict[str, DecompositionRecord] | None = None,
                 bundle: AdaptationBundle | None = None,
                 target_profile=None,
                 out_dir: str | Path | None = None,
                 resume: bool = True) -> PipelineOutcome:
    """Run one pipeline mode over the test set.

    The generic modes need sampled ``exemplars`` (plus ``ss_records`` for
    ltmp-gp) and the train dataset for exemplar schemas; the domain-adapted
    modes need the adaptation ``bundle`` and the profiled target schema, and
    only process test queries of the bundle's target database. Stage outputs
    are threaded into the next stage's prompt; artifacts are append-only.
    """
    if cfg.mode in ("gp", "ltmp-gp"):
        if exemplars is None or train is None:
            raise ValueError(f"{cfg.mode} needs sampled exemplars and the train dataset")
        queries = list(test.examples)
    else:
        if bundle is None or target_profile is None:
            raise ValueError(f"{cfg.mode} needs an adaptation bundle and target profile")
        queries = [ex for ex in test.examples if ex.db_id == bundle.target_db_id]

    out_path = Path(out_dir) if out_dir is not None else None
    runner = _QueryRunner(cfg, client, train, test, exemplars, ss_records,
                          bundle, target_profile, out_path, resume)

    indexed: list[tuple[AnnotatedExample, int]] = []
    seen_per_db: dict[str, int] = {}
    for example in queries:
        idx = seen_per_db.get(example.db_id, 0)
        seen_per_db[example.db_id] = idx + 1
        indexed.append((example, idx))

    outcome = PipelineOutcome(predictions={})
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(
                lambda pair: runner.run_one(*pair), indexed))
    else:
        results = [runner.run_one(example, idx) for example, idx in indexed]

    for (example, _), (sql, trace, error) in zip(indexed, results):
        outcome.predictions[(example.db_id, example.nl)] = sql
        if trace is not None:
            outcome.traces.append(trace)
        if error is not None:
            outcome.errors.append(((example.db_id, example.nl), error))

    if out_path is not None:
        write_predictions(outcome.predictions, out_path / "predictions.jsonl")
        with open(out_path / "traces.jsonl", "w", encoding="utf-8") as f:
            for trace in outcome.traces:
                f.write(json.dumps({
                    "test_nl": trace.test_nl,
                    "sub_questions": list(trace.sub_questions),
                    "natsql_steps": list(trace.natsql_steps),
                    "final_sql": trace.final_sql,
                    "stage_prompts": trace.stage_prompts,
                }, ensure_ascii=False, sort_keys=True) + "\n")
    return outcome


def write_predictions(predictions: dict[tuple[str, str], str],
                      path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for (db_id, nl), sql in predictions.items():
            f.write(json.dumps({"db_id": db_id, "question": nl, "sql": sql},
                               ensure_ascii=False, sort_keys=True) + "\n")


def read_predictions(path: str | Path) -> dict[tuple[str, str], str]:
    predictions: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            predictions[(record["db_id"], record["question"])] = record["sql"]
    return predictions


def run_gp(exemplars: ExemplarSet, test: AnnotatedDataset, client: LlmClient,
           train: AnnotatedDataset, cfg: PipelineConfig | None = None,
           out_dir: str | Path | None = None) -> PipelineOutcome:
    """One generic-prompt generation per test query; failures become empty
    predictions and never abort the batch."""
    cfg = cfg or PipelineConfig(mode="gp")
    if cfg.mode != "gp":
        raise ValueError("run_gp drives the gp mode")
    return run_pipeline(cfg, client, test, train=train, exemplars=exemplars,
                        out_dir=out_dir)


def run_da_gp(bundle: AdaptationBundle, test: AnnotatedDataset, client: LlmClient,
              target_profile, cfg: PipelineConfig | None = None,
              out_dir: str | Path | None = None) -> PipelineOutcome:
    """Domain-adapted prompt generation over the bundle's target database."""
    cfg = cfg or PipelineConfig(mode="da-gp")
    if cfg.mode != "da-gp":
        raise ValueError("run_da_gp drives the da-gp mode")
    return run_pipeline(cfg, client, test, bundle=bundle,
                        target_profile=target_profile, out_dir=out_dir)
