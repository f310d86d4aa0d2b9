"""The runtime engine behind the loader functions.

Instrumented code imports ``_lx_n_``, ``_lx_a_`` and ``_lx_c_`` from this
module. Each loader forwards to the active session; without one, loaders are
transparent and the code behaves like the original.
"""
from __future__ import annotations

import contextlib
import logging
import operator
import random
from dataclasses import asdict, dataclass
from typing import Any, Mapping

from lexec.execution import RunReport, execute
from lexec.instrument import IidMetadata, InstrumentedUnit, context_around
from lexec.predictors import NaivePredictor, Predictor, PredictorQuery
from lexec.values import Dummy, DummyResource, Granularity, Mode, abstract_value, concretize, is_injected

log = logging.getLogger(__name__)

_ACTIVE = None


@contextlib.contextmanager
def activate(session):
    """Route all loader calls to ``session`` for the duration of the block."""
    global _ACTIVE
    previous, _ACTIVE = _ACTIVE, session
    try:
        yield session
    finally:
        _ACTIVE = previous


def active_session():
    return _ACTIVE


def _lx_n_(iid, name, accessor, scope_name=None, scope=None):
    session = _ACTIVE
    if session is None:
        if scope is not None and scope_name in scope:
            return scope[scope_name]
        return accessor()
    return session.load_name(iid, name, accessor, scope_name, scope)


def _lx_a_(iid, base, attr):
    session = _ACTIVE
    if session is None:
        return getattr(base, attr)
    return session.load_attribute(iid, base, attr)


def _lx_c_(iid, callee, /, *args, **kwargs):
    session = _ACTIVE
    if session is None:
        return callee(*args, **kwargs)
    return session.call(iid, callee, args, kwargs)


_AUG = {
    "+=": operator.iadd, "-=": operator.isub, "*=": operator.imul, "@=": operator.imatmul,
    "/=": operator.itruediv, "//=": operator.ifloordiv, "%=": operator.imod, "**=": operator.ipow,
    "<<=": operator.ilshift, ">>=": operator.irshift, "&=": operator.iand, "|=": operator.ior,
    "^=": operator.ixor,
}


def _lx_aug_(op, current, value):
    return _AUG[op](current, value)


@dataclass
class InjectionEvent:
    iid: int
    name: str
    kind: str
    label: str
    value: str
    degraded: bool = False

    def to_json(self) -> dict:
        return asdict(self)


def _missing_member(exc: AttributeError, base, attr: str) -> bool:
    # errors raised by hand (no name recorded) count as missing members
    name = getattr(exc, "name", None)
    obj = getattr(exc, "obj", None)
    if name is not None and name != attr:
        return False
    return obj is None or obj is base


def _summary(value: Any) -> str:
    try:
        text = repr(value)
    except Exception:
        text = f"<{type(value).__name__}>"
    return text if len(text) <= 80 else text[:77] + "..."


class EngineSession:
    """State of one guided execution: predictor, value cache and injection log.

    Values are cached per missing variable name, per (base object, attribute)
    and per injected callee, so repeated uses see the same value in every mode.
    """

    def __init__(
        self,
        predictor: Predictor | None = None,
        granularity: Granularity | str = Granularity.FINE,
        mode: Mode | str = Mode.DETERMINISTIC,
        seed: int = 0,
        metadata: Mapping[int, IidMetadata] | None = None,
        sources: Mapping[str, str] | None = None,
        window: int = 512,
    ):
        self.predictor = predictor or NaivePredictor()
        self.granularity = Granularity(granularity)
        self.mode = Mode(mode)
        if self.mode is Mode.RANDOMIZED and self.granularity is Granularity.FINE:
            raise ValueError("randomized mode requires coarse granularity")
        self.rng = random.Random(seed)
        self.metadata: dict[int, IidMetadata] = dict(metadata or {})
        self.sources: dict[str, str] = dict(sources or {})
        self.window = window
        self.cache: dict[tuple, Any] = {}
        self.injections: list[InjectionEvent] = []
        self.handled: list[BaseException] = []
        self._pinned: list[Any] = []  # objects whose id() is part of a cache key
        self._snapshots: list[tuple[Any, Any]] = []

    def add_unit(self, unit: InstrumentedUnit):
        self.metadata.update(unit.by_iid())
        self.sources[unit.file] = unit.original

    # loaders

    def load_name(self, iid, name, accessor, scope_name=None, scope=None):
        if scope is not None and scope_name in scope:
            return scope[scope_name]
        try:
            return accessor()
        except NameError as exc:
            self.handled.append(exc)
        return self._lookup_or_inject(("variable", name), iid, name, "variable")

    def load_attribute(self, iid, base, attr):
        try:
            return getattr(base, attr)
        except AttributeError as exc:
            if not _missing_member(exc, base, attr):
                raise  # raised by code running inside the lookup, e.g. a property
            self.handled.append(exc)
        self._pinned.append(base)
        return self._lookup_or_inject(("attribute", id(base), attr), iid, attr, "attribute")

    def call(self, iid, callee, args, kwargs):
        if not is_injected(callee):
            return callee(*args, **kwargs)
        meta = self.metadata.get(iid)
        name = meta.name if meta else "?"
        self._pinned.append(callee)
        return self._lookup_or_inject(("return_value", id(callee)), iid, name, "return_value")

    # prediction

    def query_for(self, iid: int, name: str, kind: str) -> PredictorQuery:
        pre = post = ""
        meta = self.metadata.get(iid)
        source = self.sources.get(meta.file) if meta else None
        if meta is not None and source is not None:
            pre, post = context_around(source, meta.start, meta.end, self.window)
        return PredictorQuery(name, kind, pre, post, self.granularity.value, top_k=1)

    def _lookup_or_inject(self, key, iid, name, kind):
        if key in self.cache:
            return self.cache[key]
        query = self.query_for(iid, name, kind)
        degraded = False
        try:
            label = self.predictor.predict(query).check(query).top
        except Exception as exc:
            log.warning("predictor failed for %s %r (%s); injecting an object", kind, name, exc)
            label, degraded = "object", True
        value = concretize(label, self.granularity, self.mode, self.rng)
        self.cache[key] = value
        self._remember(value)
        self.injections.append(InjectionEvent(iid, name, kind, label, _summary(value), degraded))
        return value

    def _remember(self, value):
        if isinstance(value, (list, dict, set)):
            self._snapshots.append((value, value.copy()))
            for item in value.values() if isinstance(value, dict) else value:
                self._remember(item)
        elif isinstance(value, tuple):
            for item in value:
                self._remember(item)
        elif isinstance(value, (Dummy, DummyResource)):
            self._snapshots.append((value, dict(vars(value))))

    def reset_injected_state(self):
        """Undo mutations of injected values, keeping their identities."""
        for value, snap in self._snapshots:
            if isinstance(value, list):
                value[:] = snap
            elif isinstance(value, (dict, set)):
                value.clear()
                value.update(snap)
            else:
                vars(value).clear()
                vars(value).update(snap)


def run_guarded(session: EngineSession, unit: InstrumentedUnit, namespace: dict | None = None,
                timeout: float | None = None) -> RunReport:
    """Execute an instrumented unit with its loaders bound to ``session``."""
    session.add_unit(unit)
    code = unit.compile()
    with activate(session):
        report, _ = execute(code, unit.original, unit.file, namespace, timeout, handled=session.handled)
    report.injections = [ev.to_json() for ev in session.injections]
    return report


def run_plain(source: str, filename: str = "<snippet>", namespace: dict | None = None,
              timeout: float | None = None) -> RunReport:
    """As-is execution of uninstrumented source, with the same coverage accounting."""
    code = compile(source, filename, "exec", dont_inherit=True)
    report, _ = execute(code, source, filename, namespace, timeout)
    return report
