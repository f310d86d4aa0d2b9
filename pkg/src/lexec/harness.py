"""Batch lexecution of snippet corpora and coverage comparison across predictors."""
from __future__ import annotations

import csv
import json
import logging
import multiprocessing as mp
import os
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from lexec.execution import RunReport, countable_lines
from lexec.instrument import instrument_source
from lexec.predictors import (FrequencyPredictor, FrequencyTable, NaivePredictor, Predictor,
                              RandomPredictor, RemotePredictor, StubPredictor)
from lexec.runtime import EngineSession, run_guarded, run_plain

log = logging.getLogger(__name__)

PREDICTOR_NAMES = ("asis", "naive", "random", "frequency", "rest", "stub")
DEFAULT_TIMEOUT = 10.0


@dataclass
class RunConfig:
    predictor: str = "naive"
    granularity: str = "fine"
    mode: str = "deterministic"
    seed: int = 0
    timeout: float = DEFAULT_TIMEOUT
    table: FrequencyTable | str | None = None
    url: str | None = None
    script: dict | str | None = None
    instance: Predictor | None = field(default=None, repr=False)

    @property
    def label(self) -> str:
        if self.predictor == "asis":
            return "asis"
        mode = "rand" if self.mode.startswith("rand") else "det"
        return f"{self.predictor}-{self.granularity}-{mode}"

    def describe(self) -> dict:
        return {"predictor": self.predictor, "granularity": self.granularity,
                "mode": self.mode, "seed": self.seed, "timeout": self.timeout}


def build_predictor(config: RunConfig) -> Predictor | None:
    if config.instance is not None:
        return config.instance
    name = config.predictor
    if name == "asis":
        return None
    if name == "naive":
        return NaivePredictor()
    if name == "random":
        return RandomPredictor(config.seed)
    if name == "frequency":
        table = config.table
        if table is None:
            raise ValueError("the frequency predictor needs a table")
        if not isinstance(table, FrequencyTable):
            table = FrequencyTable.load(table)
        return FrequencyPredictor(table, config.seed)
    if name == "rest":
        if not config.url:
            raise ValueError("the rest predictor needs a url")
        return RemotePredictor(config.url)
    if name == "stub":
        script = config.script or {}
        if not isinstance(script, dict):
            with open(script, encoding="utf-8") as fh:
                script = json.load(fh)
        return StubPredictor(script)
    raise ValueError(f"unknown predictor {name!r}")


def _run_in_process(source: str, filename: str, config: RunConfig) -> RunReport:
    if config.predictor == "asis":
        try:
            compile(source, filename, "exec", dont_inherit=True)
        except SyntaxError:
            return RunReport(filename, sorted(countable_lines(source)), syntax_error=True)
        return run_plain(source, filename, timeout=config.timeout)
    try:
        unit = instrument_source(source, filename)
    except (SyntaxError, ValueError):
        return RunReport(filename, sorted(countable_lines(source)), syntax_error=True)
    session = EngineSession(build_predictor(config), config.granularity, config.mode, config.seed)
    return run_guarded(session, unit, timeout=config.timeout)


def _worker(conn, source, filename, config):
    try:
        report = _run_in_process(source, filename, config)
        conn.send(report.to_json())
    except BaseException as exc:  # report harness failures to the parent instead of dying silently
        conn.send({"error": f"{type(exc).__name__}: {exc}"})
    finally:
        conn.close()


def run_snippet(path: str | os.PathLike, config: RunConfig | None = None, isolate: bool = True,
                name: str | None = None) -> RunReport:
    """Lexecute one snippet file and account its line coverage.

    With ``isolate`` the snippet runs in a forked worker that is killed if it
    overruns the timeout by more than a grace period.
    """
    config = config or RunConfig()
    path = Path(path)
    source = path.read_text(encoding="utf-8")
    filename = name or str(path)
    if not isolate:
        report = _run_in_process(source, filename, config)
    else:
        report = _run_isolated(source, filename, config)
    report.config = config.describe()
    return report


def _run_isolated(source: str, filename: str, config: RunConfig) -> RunReport:
    ctx = mp.get_context("fork")
    parent, child = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_worker, args=(child, source, filename, config), daemon=True)
    start = time.perf_counter()
    proc.start()
    child.close()
    grace = config.timeout + 5.0 if config.timeout else None
    doc = None
    if parent.poll(grace):
        try:
            doc = parent.recv()
        except EOFError:
            doc = None
    proc.join(1.0)
    if proc.is_alive():
        proc.kill()
        proc.join()
    parent.close()
    if doc is None or "error" in doc:
        report = RunReport(filename, sorted(countable_lines(source)))
        report.duration_ms = (time.perf_counter() - start) * 1000.0
        if doc is None:
            report.timed_out = True
            report.terminal_exception = {"type": "WorkerLost", "message": "worker killed or crashed", "line": None}
        else:
            report.terminal_exception = {"type": "HarnessError", "message": doc["error"], "line": None}
        return report
    return RunReport.from_json(doc)


@dataclass
class BatchSummary:
    config: dict
    label: str
    reports: list[RunReport]

    @property
    def mean_coverage(self) -> float:
        return sum(r.coverage for r in self.reports) / len(self.reports) if self.reports else 0.0

    @property
    def fully_executed(self) -> float:
        if not self.reports:
            return 0.0
        return sum(1 for r in self.reports if r.coverage == 1.0) / len(self.reports)

    @property
    def ms_per_covered_line(self) -> float | None:
        lines = sum(len(set(r.covered) & set(r.countable)) for r in self.reports)
        if not lines:
            return None
        return sum(r.duration_ms for r in self.reports) / lines

    def coverage_by_snippet(self) -> dict[str, float]:
        return {r.snippet: r.coverage for r in self.reports}

    def to_json(self) -> dict:
        return {"config": self.config, "label": self.label, "mean_coverage": self.mean_coverage,
                "fully_executed": self.fully_executed, "ms_per_covered_line": self.ms_per_covered_line,
                "reports": [r.to_json() for r in self.reports]}


def corpus_files(corpus: str | os.PathLike) -> list[Path]:
    corpus = Path(corpus)
    if corpus.is_file():
        return [corpus]
    return sorted(p for p in corpus.rglob("*.py") if p.is_file())


def run_batch(corpus: str | os.PathLike, configs: Sequence[RunConfig], seed: int | None = None,
              isolate: bool = True) -> list[BatchSummary]:
    """Run every config over the same snippets. ``seed`` overrides the configs' seeds."""
    files = corpus_files(corpus)
    if not files:
        raise ValueError(f"no snippets found in {corpus}")
    root = Path(corpus) if Path(corpus).is_dir() else Path(corpus).parent
    summaries = []
    for config in configs:
        if seed is not None:
            config = replace(config, seed=seed)
        reports = [run_snippet(p, config, isolate, name=p.relative_to(root).as_posix()) for p in files]
        summaries.append(BatchSummary(config.describe(), config.label, reports))
        log.info("%s: mean coverage %.3f", config.label, summaries[-1].mean_coverage)
    return summaries


def write_csv(summaries: Iterable[BatchSummary], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "snippet", "countable", "covered", "coverage", "duration_ms",
                         "injections", "exception", "syntax_error", "timed_out"])
        for s in summaries:
            for r in s.reports:
                exc = r.terminal_exception["type"] if r.terminal_exception else ""
                writer.writerow([s.label, r.snippet, len(r.countable), len(r.covered),
                                 f"{r.coverage:.4f}", f"{r.duration_ms:.3f}", len(r.injections),
                                 exc, int(r.syntax_error), int(r.timed_out)])


def write_json(summaries: Iterable[BatchSummary], path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_json() for s in summaries], fh, indent=1)


@dataclass
class Comparison:
    deltas: dict[str, float]
    mean_delta: float
    p_value: float


def compare_summaries(a: BatchSummary, b: BatchSummary) -> Comparison:
    """Per-snippet coverage deltas (b - a) and a paired Wilcoxon signed-rank p-value."""
    from scipy.stats import wilcoxon

    cov_a, cov_b = a.coverage_by_snippet(), b.coverage_by_snippet()
    if set(cov_a) != set(cov_b):
        raise ValueError("summaries cover different snippet sets")
    names = sorted(cov_a)
    deltas = {n: cov_b[n] - cov_a[n] for n in names}
    mean_delta = sum(deltas.values()) / len(deltas) if deltas else 0.0
    if not any(deltas.values()):
        return Comparison(deltas, mean_delta, 1.0)
    result = wilcoxon([cov_b[n] for n in names], [cov_a[n] for n in names])
    return Comparison(deltas, mean_delta, float(result.pvalue))
