"""Value-use traces: recording, deduplication, splitting and top-k evaluation."""
from __future__ import annotations

import json
import logging
import random
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from lexec.instrument import IidMetadata, InstrumentedUnit, context_around
from lexec.predictors import Predictor, PredictorQuery
from lexec.runtime import activate
from lexec.values import abstract_value, coarsen

log = logging.getLogger(__name__)


class MissingValueError(RuntimeError):
    """A value was missing while recording; record mode never injects."""


@dataclass(frozen=True)
class ValueUseEvent:
    name: str
    kind: str
    fine: str
    coarse: str
    iid: int
    file: str

    def key(self) -> tuple:
        return (self.name, self.fine, self.kind, self.iid, self.file)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: Mapping) -> "ValueUseEvent":
        ev = cls(doc["name"], doc["kind"], doc["fine"], doc["coarse"], int(doc["iid"]), doc["file"])
        if ev.coarse != coarsen(ev.fine):
            raise ValueError(f"inconsistent labels in {doc}")
        return ev


@dataclass
class TraceDataset:
    events: list[ValueUseEvent] = field(default_factory=list)
    provenance: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.events)


class RecordingSession:
    """Loader backend for training runs: loads real values and logs them."""

    def __init__(self, metadata: Mapping[int, IidMetadata]):
        self.metadata = dict(metadata)
        self.events: list[ValueUseEvent] = []

    def _record(self, iid, name, kind, value):
        meta = self.metadata.get(iid)
        fine = abstract_value(value, "fine")
        self.events.append(ValueUseEvent(name, kind, fine, coarsen(fine), iid, meta.file if meta else "?"))

    def load_name(self, iid, name, accessor, scope_name=None, scope=None):
        if scope is not None and scope_name in scope:
            value = scope[scope_name]
        else:
            try:
                value = accessor()
            except NameError as exc:
                raise MissingValueError(f"variable {name!r} is undefined (iid {iid})") from exc
        self._record(iid, name, "variable", value)
        return value

    def load_attribute(self, iid, base, attr):
        try:
            value = getattr(base, attr)
        except AttributeError as exc:
            raise MissingValueError(
                f"{type(base).__name__} object has no attribute {attr!r} (iid {iid})") from exc
        self._record(iid, attr, "attribute", value)
        return value

    def call(self, iid, callee, args, kwargs):
        value = callee(*args, **kwargs)
        meta = self.metadata.get(iid)
        self._record(iid, meta.name if meta else getattr(callee, "__name__", "?"), "return_value", value)
        return value


def record_run(unit: InstrumentedUnit | None = None, *, code=None, metadata=None,
               filename: str | None = None, out: str | None = None,
               namespace: dict | None = None) -> list[ValueUseEvent]:
    """Run instrumented code with real values only and return its value-use events.

    Either pass an :class:`InstrumentedUnit`, or a code object plus sidecar
    metadata (as when running an instrumented file from disk). The program's
    own exceptions end the run but keep the events gathered so far; a missing
    value raises :class:`MissingValueError`.
    """
    if unit is not None:
        code, metadata, filename = unit.compile(), unit.by_iid(), unit.file
    session = RecordingSession(metadata or {})
    namespace = {} if namespace is None else namespace
    namespace.setdefault("__name__", "__main__")
    if filename:
        namespace.setdefault("__file__", filename)
    with activate(session):
        try:
            exec(code, namespace)
        except MissingValueError:
            raise
        except Exception as exc:
            log.warning("recorded program raised %s: %s", type(exc).__name__, exc)
    if out is not None:
        write_trace(session.events, out)
    return session.events


def write_trace(events: Iterable[ValueUseEvent], path, append: bool = False):
    with open(path, "a" if append else "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(json.dumps(ev.to_json()) + "\n")


def read_trace(path) -> list[ValueUseEvent]:
    with open(path, encoding="utf-8") as fh:
        return [ValueUseEvent.from_json(json.loads(line)) for line in fh if line.strip()]


def deduplicate(events: Iterable[ValueUseEvent] | TraceDataset) -> TraceDataset:
    """Keep the first event per (name, fine label, kind, location)."""
    provenance = []
    if isinstance(events, TraceDataset):
        provenance = list(events.provenance)
        events = events.events
    seen = set()
    kept = []
    for ev in events:
        k = ev.key()
        if k not in seen:
            seen.add(k)
            kept.append(ev)
    return TraceDataset(kept, provenance)


def split(ds: TraceDataset, train_fraction: float = 0.95, seed: int = 0) -> tuple[TraceDataset, TraceDataset]:
    """Shuffle with ``seed`` and cut after floor(N * train_fraction) events."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    events = list(ds.events)
    random.Random(seed).shuffle(events)
    cut = int(Fraction(str(train_fraction)) * len(events))
    return (TraceDataset(events[:cut], list(ds.provenance)),
            TraceDataset(events[cut:], list(ds.provenance)))


@dataclass
class TopKResult:
    accuracy: dict[int, float]
    per_kind: dict[str, dict[int, float]]
    evaluated: int
    skipped: list[tuple[str, int]]


def evaluate_topk(
    predictor: Predictor,
    heldout: TraceDataset | Sequence[ValueUseEvent],
    ks: Sequence[int] = (1, 3, 5),
    metadata: Mapping[int, IidMetadata] | None = None,
    sources: Mapping[str, str] | None = None,
    granularity: str = "fine",
    window: int = 512,
) -> TopKResult:
    """Fraction of held-out events whose true label is among the first k predictions.

    Contexts are rebuilt from ``metadata`` and the original ``sources``; events
    whose source is unavailable are skipped and listed in the result.
    """
    events = heldout.events if isinstance(heldout, TraceDataset) else list(heldout)
    ks = sorted(set(ks))
    kmax = ks[-1]
    metadata = metadata or {}
    sources = sources if sources is not None else {}
    hits = defaultdict(lambda: defaultdict(int))
    totals = defaultdict(int)
    skipped = []
    for ev in events:
        meta = metadata.get(ev.iid)
        if meta is None or ev.file not in sources:
            skipped.append((ev.file, ev.iid))
            continue
        pre, post = context_around(sources[ev.file], meta.start, meta.end, window)
        query = PredictorQuery(ev.name, ev.kind, pre, post, granularity, kmax)
        labels = predictor.predict(query).labels
        truth = ev.fine if granularity == "fine" else ev.coarse
        rank = labels.index(truth) if truth in labels else None
        totals[ev.kind] += 1
        for k in ks:
            if rank is not None and rank < k:
                hits[ev.kind][k] += 1
    n = sum(totals.values())
    accuracy = {k: (sum(hits[kind][k] for kind in totals) / n if n else 0.0) for k in ks}
    per_kind = {kind: {k: hits[kind][k] / totals[kind] for k in ks} for kind in sorted(totals)}
    return TopKResult(accuracy, per_kind, n, skipped)
