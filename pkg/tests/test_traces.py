import random

import pytest
from hypothesis import given, strategies as st

from lexec.instrument import IidMetadata, instrument_source
from lexec.predictors import NaivePredictor, Predictor, PredictorResponse, RandomPredictor
from lexec.traces import (MissingValueError, TraceDataset, ValueUseEvent, deduplicate, evaluate_topk,
                          read_trace, record_run, split, write_trace)
from lexec.values import FINE_LABELS, catalog, coarsen


def event(name="x", fine="int_pos", kind="variable", iid=0, file="f.py"):
    return ValueUseEvent(name, kind, fine, coarsen(fine), iid, file)


def labels(events):
    return [(e.name, e.fine, e.kind) for e in events]


def test_write_is_not_an_event():
    events = record_run(instrument_source("x = 1\ny = x\n", "a.py"))
    assert labels(events) == [("x", "int_pos", "variable")]
    assert events[0].coarse == "integer" and events[0].file == "a.py"


def test_builtin_call_records_read_and_return():
    events = record_run(instrument_source("y = len('ab')\n"))
    assert labels(events) == [("len", "callable", "variable"), ("len", "int_pos", "return_value")]


def test_loop_events_collapse_after_dedup():
    events = record_run(instrument_source("x = 3\nfor _ in range(10):\n    x\n"))
    reads = [e for e in events if e.name == "x"]
    assert len(reads) == 10
    assert len([e for e in deduplicate(events).events if e.name == "x"]) == 1


def test_recording_preserves_output(capsys):
    src = "vals = [1, 2]\nprint(sum(vals), 'ok'.upper())\n"
    record_run(instrument_source(src))
    recorded = capsys.readouterr().out
    exec(compile(src, "<plain>", "exec"), {})
    assert capsys.readouterr().out == recorded == "3 OK\n"


def test_missing_value_aborts_recording():
    with pytest.raises(MissingValueError):
        record_run(instrument_source("y = undefined_thing\n"))
    with pytest.raises(MissingValueError):
        record_run(instrument_source("import os\ny = os.no_such_member\n"))


def test_program_errors_keep_partial_trace():
    events = record_run(instrument_source("a = 1\nb = a\nraise ValueError(b)\n"))
    assert ("a", "int_pos", "variable") in labels(events)


def test_trace_file_round_trip(tmp_path):
    events = record_run(instrument_source("d = {'k': [1]}\ne = d['k']\n"), out=tmp_path / "t.jsonl")
    assert read_trace(tmp_path / "t.jsonl") == events
    write_trace(events, tmp_path / "t.jsonl", append=True)
    assert len(read_trace(tmp_path / "t.jsonl")) == 2 * len(events)


def test_inconsistent_labels_are_rejected():
    with pytest.raises(ValueError):
        ValueUseEvent.from_json({"name": "x", "kind": "variable", "fine": "int_pos", "coarse": "string",
                                 "iid": 0, "file": "f.py"})


def test_dedup_keeps_differing_labels():
    ds = deduplicate([event(fine="int_pos"), event(fine="int_zero"), event(fine="int_pos")])
    assert [e.fine for e in ds.events] == ["int_pos", "int_zero"]


_events = st.builds(event, st.sampled_from("abc"), st.sampled_from(FINE_LABELS[:6]),
                    st.sampled_from(["variable", "attribute"]), st.integers(0, 3))


@given(st.lists(_events, max_size=40))
def test_dedup_idempotent_and_stable(events):
    once = deduplicate(events)
    assert deduplicate(once).events == once.events
    assert len({e.key() for e in once.events}) == len(once.events)
    firsts = []
    for e in events:
        if e.key() not in {f.key() for f in firsts}:
            firsts.append(e)
    assert once.events == firsts


def test_split_sizes():
    ds = TraceDataset([event(iid=i) for i in range(100)])
    train, held = split(ds, 0.95, seed=1)
    assert (len(train), len(held)) == (95, 5)
    assert sorted(e.iid for e in train.events + held.events) == list(range(100))
    assert split(ds, 0.95, seed=1) == (train, held)
    assert split(ds, 0.95, seed=2) != (train, held)
    one = split(TraceDataset([event()]), 0.95, 0)
    assert (len(one[0]), len(one[1])) == (0, 1)
    with pytest.raises(ValueError):
        split(ds, 1.0)


def _indexed(events):
    """Sources and metadata so each event has a reconstructable context."""
    src = "\n".join(f"v = {e.name}" for e in events) + "\n"
    metadata, pos = {}, 0
    for i, e in enumerate(events):
        start = src.index(e.name, pos + 4)
        metadata[e.iid] = IidMetadata(e.iid, e.file, start, start + len(e.name), e.name, e.kind)
        pos = src.index("\n", start)
    return metadata, {events[0].file: src} if events else {}


class _Oracle(Predictor):
    def __init__(self, truth):
        self.truth = truth

    def predict(self, query):
        first = self.truth[query.pre_context]
        rest = [label for label in catalog(query.granularity) if label != first]
        ranked = [first] + rest[: query.top_k - 1]
        return PredictorResponse(tuple((label, 1.0 if i == 0 else 0.0) for i, label in enumerate(ranked)))


def test_oracle_scores_perfectly():
    rng = random.Random(0)
    events = [event(f"n{i}", rng.choice(FINE_LABELS), iid=i) for i in range(60)]
    metadata, sources = _indexed(events)
    from lexec.instrument import context_around
    truth = {context_around(sources["f.py"], m.start, m.end)[0]: e.fine
             for e, m in ((e, metadata[e.iid]) for e in events)}
    result = evaluate_topk(_Oracle(truth), events, (1, 3, 5), metadata, sources)
    assert result.accuracy == {1: 1.0, 3: 1.0, 5: 1.0}
    assert result.evaluated == 60 and result.skipped == []


def test_naive_on_forty_percent_object():
    events = [event(f"n{i}", "object" if i < 40 else "str_empty", iid=i) for i in range(100)]
    metadata, sources = _indexed(events)
    result = evaluate_topk(NaivePredictor(), events, (1, 3), metadata, sources)
    assert result.accuracy[1] == 0.40 and result.accuracy[3] == 0.40


def test_events_without_source_are_skipped():
    events = [event(iid=0), event(iid=1, file="missing.py")]
    metadata, sources = _indexed(events[:1])
    metadata[1] = IidMetadata(1, "missing.py", 0, 1, "x", "variable")
    result = evaluate_topk(NaivePredictor(), events, (1,), metadata, sources)
    assert result.evaluated == 1 and result.skipped == [("missing.py", 1)]


def test_random_accuracy_is_monotone_in_k():
    rng = random.Random(7)
    events = [event(f"n{i % 50}", rng.choice(FINE_LABELS), iid=i) for i in range(2000)]
    metadata, sources = _indexed(events)
    result = evaluate_topk(RandomPredictor(3), events, (1, 3, 5), metadata, sources)
    acc = result.accuracy
    assert acc[1] <= acc[3] <= acc[5]
    assert abs(acc[1] - 1 / 22) < 0.02 and abs(acc[5] - 5 / 22) < 0.04


def test_per_kind_accuracy():
    events = [event("a", "object", "variable", 0), event("b", "int_pos", "attribute", 1)]
    metadata, sources = _indexed(events)
    result = evaluate_topk(NaivePredictor(), events, (1,), metadata, sources)
    assert result.per_kind == {"attribute": {1: 0.0}, "variable": {1: 1.0}}
