"""Acceptance criteria, one test each, each printing a PASS/FAIL line."""
import contextlib
import io
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest

from lexec import EngineSession, abstract_value, catalog, concretize, instrument_source, run_guarded
from lexec.commits import FunctionPair, Outcome, classify
from lexec.harness import RunConfig, compare_summaries, run_batch, run_snippet
from lexec.instrument import IidMetadata, context_around
from lexec.predictors import (FrequencyPredictor, NaivePredictor, Predictor, PredictorQuery,
                              PredictorResponse, RandomPredictor, RemotePredictor, SchemaViolation,
                              StubPredictor, fit_frequency, serve)
from lexec.synth import (generated_lines, incomplete_corpus, random_function, self_contained_corpus,
                         training_programs)
from lexec.traces import TraceDataset, ValueUseEvent, deduplicate, evaluate_topk, record_run, split
from lexec.values import COARSE_LABELS, FINE_LABELS, coarsen

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance

DATA = Path(__file__).parent / "data"


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def write_corpus(root, corpus):
    root.mkdir(parents=True, exist_ok=True)
    for name, src in corpus.items():
        (root / name).write_text(src)
    return root


# 1 ----------------------------------------------------------------------------

FIG1 = (
    'if (not has_min_size(all_data)): raise RuntimeError("not enough data")\n'
    "train_len = round(0.8 * len(all_data))\n"
    'logger.info(f"Extracting training data with config {config_str}")\n'
    "train_data = all_data[:train_len]\n"
)
FIG1_SCRIPT = {
    "all_data": "list_nonempty",
    "variable:has_min_size": "callable",
    "return_value:has_min_size": "true",
    "config_str": "str_nonempty",
    "logger": "object",
    "attribute:info": "callable",
    "return_value:info": "none",
}


def test_criterion_1_motivating_snippet(tmp_path):
    path = tmp_path / "fig1.py"
    path.write_text(FIG1)
    start = time.perf_counter()
    guided = run_snippet(path, RunConfig("stub", script=FIG1_SCRIPT))
    elapsed = time.perf_counter() - start
    plain = run_snippet(path, RunConfig("asis"))
    ok = (guided.coverage == 1.0 and guided.terminal_exception is None
          and plain.coverage == 0.0 and plain.terminal_exception["line"] == 1
          and plain.terminal_exception["type"] == "NameError" and elapsed < 5.0)
    verdict(1, ok, f"guided coverage {guided.coverage:.0%}, exception {guided.terminal_exception}; "
                   f"as-is coverage {plain.coverage:.0%} ({plain.terminal_exception['type']} on line "
                   f"{plain.terminal_exception['line']}); {elapsed:.2f}s")


# 2 ----------------------------------------------------------------------------

def _exception_type(stderr):
    last = stderr.strip().splitlines()[-1] if stderr.strip() else ""
    return last.split(":")[0] if last else None


def test_criterion_2_semantics_preservation(tmp_path):
    root = write_corpus(tmp_path / "corpus", self_contained_corpus(50, seed=0))
    problems = []
    for path in sorted(root.glob("*.py")):
        plain = subprocess.run([sys.executable, str(path)], capture_output=True, text=True, timeout=60)
        guarded = run_snippet(path, RunConfig("naive"))
        as_is = run_snippet(path, RunConfig("asis"))
        plain_exc = _exception_type(plain.stderr) if plain.returncode else None
        guarded_exc = guarded.terminal_exception["type"] if guarded.terminal_exception else None
        if guarded.stdout != plain.stdout:
            problems.append(f"{path.name}: stdout differs")
        if guarded_exc != plain_exc:
            problems.append(f"{path.name}: exception {guarded_exc} vs {plain_exc}")
        if guarded.injections:
            problems.append(f"{path.name}: {len(guarded.injections)} injections")
        if guarded.covered != as_is.covered:
            problems.append(f"{path.name}: coverage differs")
    verdict(2, not problems, f"50 self-contained snippets, {len(problems)} discrepancies {problems[:3]}")


# 3 ----------------------------------------------------------------------------

def test_criterion_3_abstraction_round_trip():
    violations = [label for label in FINE_LABELS if abstract_value(concretize(label, "fine")) != label]
    violations += [label for label in COARSE_LABELS
                   if abstract_value(concretize(label, "coarse"), "coarse") != label]
    rng = random.Random(2024)
    draws = 0
    for label in COARSE_LABELS:
        for _ in range(1000):
            draws += 1
            if abstract_value(concretize(label, "coarse", "randomized", rng), "coarse") != label:
                violations.append(label)
    verdict(3, not violations, f"22 fine + 12 coarse deterministic round trips, {draws} randomized draws, "
                               f"{len(violations)} violations")


# 4 ----------------------------------------------------------------------------

def test_criterion_4_consistency():
    src = "a = shared\nb = [shared]\nc = {'k': shared}\nd = shared\nprint(shared is a)\n"
    outcomes = []
    for granularity, mode in (("fine", "deterministic"), ("coarse", "deterministic"), ("coarse", "randomized")):
        stub = StubPredictor({"shared": "list_nonempty"})
        session = EngineSession(stub, granularity, mode, seed=7)
        ns = {}
        report = run_guarded(session, instrument_source(src, "consistency.py"), namespace=ns)
        values = [ns["a"], ns["b"][0], ns["c"]["k"], ns["d"]]
        same = all(v is values[0] for v in values) and report.stdout == "True\n"
        outcomes.append((f"{granularity}/{mode}", len(stub.queries), same))
    ok = all(queries == 1 and same for _, queries, same in outcomes)
    verdict(4, ok, "5 reads of one undefined name: " +
            ", ".join(f"{cfg} {q} query, identical={same}" for cfg, q, same in outcomes))


# 5 ----------------------------------------------------------------------------

def _training_table():
    events = []
    with contextlib.redirect_stdout(io.StringIO()):
        for i, src in enumerate(training_programs(40, seed=1)):
            events += record_run(instrument_source(src, f"train_{i}.py"))
    return fit_frequency(deduplicate(events).events)


def test_criterion_5_coverage_ordering(tmp_path):
    corpus = incomplete_corpus(30, seed=0)
    root = write_corpus(tmp_path / "incomplete", corpus)
    asis, naive, freq = run_batch(root, [RunConfig("asis"), RunConfig("naive"),
                                         RunConfig("frequency", table=_training_table())], seed=0)
    all_crash = all(r.terminal_exception is not None for r in asis.reports)
    p = compare_summaries(asis, freq).p_value
    ok = (all_crash and asis.mean_coverage < naive.mean_coverage < freq.mean_coverage
          and freq.mean_coverage >= 0.9 and p < 0.05)
    verdict(5, ok, f"as-is {asis.mean_coverage:.3f} < naive {naive.mean_coverage:.3f} < frequency "
                   f"{freq.mean_coverage:.3f}; Wilcoxon p = {p:.2e}; every snippet crashes as-is: {all_crash}")


# 6 ----------------------------------------------------------------------------

class _Oracle(Predictor):
    """Knows each held-out event's label by its location."""

    def __init__(self, truth):
        self.truth = truth

    def predict(self, query):
        first = self.truth[(query.name, query.kind, query.pre_context)]
        rest = [label for label in catalog(query.granularity) if label != first]
        ranked = [first] + rest[: query.top_k - 1]
        return PredictorResponse(tuple((label, 1.0 if i == 0 else 0.0) for i, label in enumerate(ranked)))


def _line_events(labels, file="held.py"):
    """One event per label, each on its own line of a generated source file."""
    lines, events, metadata, offset = [], [], {}, 0
    for i, label in enumerate(labels):
        name = f"n{i}"
        text = f"value_{i} = {name}"
        start = offset + text.index(name)
        events.append(ValueUseEvent(name, "variable", label, coarsen(label), i, file))
        metadata[i] = IidMetadata(i, file, start, start + len(name), name, "variable")
        lines.append(text)
        offset += len(text) + 1
    return events, metadata, {file: "\n".join(lines) + "\n"}


def test_criterion_6_topk_harness():
    # oracle on a held-out split of a real recorded trace
    sources, metadata, events = {}, {}, []
    first = 0
    with contextlib.redirect_stdout(io.StringIO()):
        for i, src in enumerate(training_programs(20, seed=3)):
            unit = instrument_source(src, f"p{i}.py", first_iid=first)
            first += len(unit.metadata)
            sources[unit.file] = src
            metadata.update(unit.by_iid())
            events += record_run(unit)
    _, held = split(deduplicate(events), 0.8, seed=0)
    truth = {}
    for ev in held.events:
        meta = metadata[ev.iid]
        truth[(ev.name, ev.kind, context_around(sources[ev.file], meta.start, meta.end)[0])] = ev.fine
    oracle = evaluate_topk(_Oracle(truth), held, (1, 3, 5), metadata, sources)

    rng = random.Random(0)
    labels = ["object"] * 40 + [rng.choice(FINE_LABELS[:-1]) for _ in range(60)]
    rng.shuffle(labels)
    forty, meta40, src40 = _line_events(labels)
    naive = evaluate_topk(NaivePredictor(), forty, (1,), meta40, src40)

    rand_events, rand_meta, rand_src = _line_events([rng.choice(FINE_LABELS) for _ in range(10_000)])
    rand = evaluate_topk(RandomPredictor(5), rand_events, (1, 3, 5), rand_meta, rand_src)
    monotone = rand.accuracy[1] <= rand.accuracy[3] <= rand.accuracy[5]

    ok = (oracle.accuracy == {1: 1.0, 3: 1.0, 5: 1.0} and oracle.evaluated == len(held)
          and naive.accuracy[1] == 0.40 and monotone and rand.evaluated == 10_000)
    verdict(6, ok, f"oracle top-1/3/5 = {oracle.accuracy[1]}/{oracle.accuracy[3]}/{oracle.accuracy[5]} on "
                   f"{oracle.evaluated} held-out events; naive top-1 on 40% object = {naive.accuracy[1]}; "
                   f"random over 10,000 events top-1/3/5 = "
                   f"{rand.accuracy[1]:.4f}/{rand.accuracy[3]:.4f}/{rand.accuracy[5]:.4f}")


# 7 ----------------------------------------------------------------------------

def test_criterion_7_dedup_and_split():
    rng = random.Random(11)
    distinct = {ValueUseEvent(f"v{rng.randrange(30)}", rng.choice(["variable", "attribute"]),
                              lab := rng.choice(FINE_LABELS), coarsen(lab), rng.randrange(40), "f.py")
                for _ in range(200)}
    distinct = sorted(distinct, key=lambda e: e.key())
    repeated = [e for e in distinct for _ in range(10)]
    rng.shuffle(repeated)
    once = deduplicate(repeated)
    twice = deduplicate(once)
    hundred = TraceDataset(distinct[:100])
    train, held = split(hundred, 0.95, seed=42)
    again = split(hundred, 0.95, seed=42)
    ok = (len(once) == len(distinct) and twice.events == once.events
          and (len(train), len(held)) == (95, 5) and again == (train, held)
          and set(train.events).isdisjoint(held.events))
    verdict(7, ok, f"{len(repeated)} events (10x {len(distinct)}) -> {len(once)} after dedup, idempotent "
                   f"{twice.events == once.events}; split of 100 -> {len(train)}/{len(held)}, "
                   f"reproducible {again == (train, held)}")


# 8 ----------------------------------------------------------------------------

class _OffCatalog(Predictor):
    def predict(self, query):
        return PredictorResponse((("not_a_class", 1.0),))


def test_criterion_8_wire_protocol():
    table = _training_table()
    local = FrequencyPredictor(table, seed=9)
    rng = random.Random(8)
    names = sorted(table.counts) + ["never_seen"]
    queries = [PredictorQuery(rng.choice(names), rng.choice(["variable", "attribute", "return_value"]),
                              f"pre {rng.random()}", f"post {rng.random()}",
                              rng.choice(["fine", "coarse"]), rng.randint(1, 5)) for _ in range(100)]
    with serve(FrequencyPredictor(table, seed=9)) as server:
        remote = RemotePredictor(server.url)
        mismatches = sum(remote.predict(q) != local.predict(q) for q in queries)
    with serve(_OffCatalog()) as bad:
        try:
            RemotePredictor(bad.url).predict(queries[0])
            schema_error = False
        except SchemaViolation:
            schema_error = True
        session = EngineSession(RemotePredictor(bad.url))
        ns = {}
        report = run_guarded(session, instrument_source("value = missing\n", "wire.py"), namespace=ns)
    fallback = (report.coverage == 1.0 and report.injections[0]["degraded"]
                and report.injections[0]["label"] == "object")
    ok = mismatches == 0 and schema_error and fallback
    verdict(8, ok, f"100 queries served vs in-process: {mismatches} mismatches; off-catalog server -> "
                   f"schema violation {schema_error}, engine fell back to object {fallback}")


# 9 ----------------------------------------------------------------------------

PAIRS = {
    "exceptional": (FunctionPair("def f():\n    return 1\n", "def f():\n    raise ValueError('no')\n"), None),
    "same": (FunctionPair("def f():\n    return helper(config.value)\n",
                          "def f():\n    unused = 42\n    return helper(config.value)\n"), None),
    "changed-ii": (FunctionPair("def f():\n    return 0\n", "def f():\n    return 1\n"), None),
    "changed-iii": (FunctionPair("def f(items):\n    return list(items)\n",
                                 "def f(items):\n    return list(items) + [None]\n"),
                    StubPredictor({"items": "list_nonempty"})),
    "changed-i": (FunctionPair((DATA / "retry_old.py").read_text(), (DATA / "retry_new.py").read_text()),
                  StubPredictor({"attribute:get": "callable", "return_value:get": "int_zero",
                                 "max_retry_times": "int_pos"})),
}


def test_criterion_9_commit_differ():
    results = {key: classify(pair, predictor) for key, (pair, predictor) in PAIRS.items()}
    outcomes = {r.outcome for r in results.values()}
    rules = {r.rule for r in results.values() if r.outcome is Outcome.CHANGED}
    rng = random.Random(99)
    reflexive = [classify(FunctionPair(src, src), seed=i)
                 for i, src in enumerate(random_function(rng) for _ in range(50))]
    flagged = sum(r.outcome is Outcome.CHANGED for r in reflexive)
    ok = (results["exceptional"].outcome is Outcome.EXCEPTIONAL and results["same"].outcome is Outcome.SAME
          and outcomes == set(Outcome) and rules == {"i", "ii", "iii"} and flagged == 0)
    verdict(9, ok, "outcomes " + ", ".join(f"{k}={r.outcome.value}" for k, r in results.items())
            + f"; rules witnessed {sorted(rules)}; (f, f) on 50 random functions flagged {flagged} "
              f"({sum(r.outcome is Outcome.SAME for r in reflexive)} same, "
              f"{sum(r.outcome is Outcome.EXCEPTIONAL for r in reflexive)} exceptional)")


# 10 ---------------------------------------------------------------------------

def test_criterion_10_throughput(tmp_path):
    src = generated_lines(1000, seed=0)
    start = time.perf_counter()
    unit = instrument_source(src, "bulk.py")
    instrument_s = time.perf_counter() - start
    root = write_corpus(tmp_path / "corpus", self_contained_corpus(50, seed=0))
    asis, naive = run_batch(root, [RunConfig("asis"), RunConfig("naive")], isolate=False)
    t_asis = sum(r.duration_ms for r in asis.reports)
    t_naive = sum(r.duration_ms for r in naive.reports)
    ok = len(src.splitlines()) == 1000 and len(unit.metadata) > 0 and instrument_s <= 60.0
    verdict(10, ok, f"instrumented 1,000 lines ({len(unit.metadata)} sites) in {instrument_s:.2f}s; "
                    f"guarded vs as-is on 50 self-contained snippets: {t_naive:.1f} ms vs {t_asis:.1f} ms "
                    f"({t_naive / t_asis:.2f}x)")
