"""Value predictors and the HTTP protocol used to serve them.

A predictor maps a :class:`PredictorQuery` (name, kind, code around the use) to
a ranked list of abstract value labels. The engine only ever consumes the first
entry; the rest matters for top-k evaluation.
"""
from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Mapping

from lexec.values import FINE_LABELS, Granularity, catalog, coarsen

log = logging.getLogger(__name__)

KINDS = ("variable", "attribute", "return_value")


class PredictorError(Exception):
    pass


class TransportError(PredictorError):
    pass


class SchemaViolation(TransportError):
    pass


@dataclass(frozen=True)
class PredictorQuery:
    name: str
    kind: str
    pre_context: str = ""
    post_context: str = ""
    granularity: str = "fine"
    top_k: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        Granularity(self.granularity)
        if self.top_k < 1:
            raise ValueError("top_k must be positive")

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "pre_context": self.pre_context,
                "post_context": self.post_context, "granularity": self.granularity,
                "top_k": self.top_k}

    @classmethod
    def from_json(cls, doc: Mapping) -> "PredictorQuery":
        try:
            return cls(str(doc["name"]), doc["kind"], doc.get("pre_context", ""),
                       doc.get("post_context", ""), doc.get("granularity", "fine"),
                       int(doc.get("top_k", 1)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed query: {exc}") from exc


@dataclass(frozen=True)
class PredictorResponse:
    ranked: tuple[tuple[str, float], ...]

    def __post_init__(self):
        ranked = tuple((str(label), float(score)) for label, score in self.ranked)
        object.__setattr__(self, "ranked", ranked)
        if not ranked:
            raise ValueError("empty prediction list")
        labels = [label for label, _ in ranked]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        scores = [s for _, s in ranked]
        if any(not 0.0 <= s <= 1.0 for s in scores):
            raise ValueError(f"scores outside [0, 1]: {scores}")
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError(f"scores not in descending order: {scores}")

    @property
    def labels(self) -> list[str]:
        return [label for label, _ in self.ranked]

    @property
    def top(self) -> str:
        return self.ranked[0][0]

    def check(self, query: PredictorQuery) -> "PredictorResponse":
        allowed = set(catalog(query.granularity))
        bad = [label for label in self.labels if label not in allowed]
        if bad:
            raise SchemaViolation(f"labels outside the {query.granularity} catalog: {bad}")
        if len(self.ranked) > query.top_k:
            raise SchemaViolation(f"{len(self.ranked)} predictions for top_k={query.top_k}")
        return self

    def to_json(self) -> dict:
        return {"predictions": [{"label": label, "score": score} for label, score in self.ranked]}


class Predictor:
    """Base class; subclasses implement :meth:`predict`."""

    name = "predictor"

    def predict(self, query: PredictorQuery) -> PredictorResponse:
        raise NotImplementedError


def _query_rng(seed: int, query: PredictorQuery) -> random.Random:
    key = json.dumps([seed, query.name, query.kind, query.pre_context, query.post_context,
                      query.granularity, query.top_k])
    return random.Random(int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big"))


class NaivePredictor(Predictor):
    name = "naive"

    def predict(self, query):
        return PredictorResponse((("object", 1.0),))


class RandomPredictor(Predictor):
    """Uniform over the catalog; the ranking is a random draw without replacement."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.seed = seed

    def predict(self, query):
        labels = catalog(query.granularity)
        rng = _query_rng(self.seed, query)
        picked = rng.sample(labels, min(query.top_k, len(labels)))
        score = 1.0 / len(labels)
        return PredictorResponse(tuple((label, score) for label in picked))


class StubPredictor(Predictor):
    """Scripted predictor for tests and demos.

    ``script`` maps ``"name"`` or ``"kind:name"`` (more specific wins) to a
    label. Unscripted queries get ``default``. Fine labels are coarsened for
    coarse queries.
    """

    name = "stub"

    def __init__(self, script: Mapping[str, str] | None = None, default: str = "object"):
        self.script = dict(script or {})
        self.default = default
        self.queries: list[PredictorQuery] = []
        self._lock = threading.Lock()

    def predict(self, query):
        with self._lock:
            self.queries.append(query)
        label = self.script.get(f"{query.kind}:{query.name}", self.script.get(query.name, self.default))
        if query.granularity == "coarse" and label in FINE_LABELS and label not in catalog("coarse"):
            label = coarsen(label)
        return PredictorResponse(((label, 1.0),))


@dataclass
class FrequencyTable:
    """Label counts per name, kept apart per kind of use.

    ``counts[name][kind]`` counts the fine labels observed for ``name`` used as
    ``kind``. A variable ``handler`` and the value returned by ``handler(...)``
    thus get separate distributions.
    """

    counts: dict[str, dict[str, Counter]] = field(default_factory=dict)
    total: int = 0

    def distribution(self, name: str, granularity: str = "fine", kind: str | None = None) -> dict[str, float]:
        """Empirical label probabilities for ``name``; empty when never seen.

        With ``kind``, only uses of that kind count, unless the name was never
        seen as that kind, in which case all its uses are pooled.
        """
        per_kind = self.counts.get(name)
        if not per_kind:
            return {}
        if kind is not None and kind in per_kind:
            counts = Counter(per_kind[kind])
        else:
            counts = Counter()
            for c in per_kind.values():
                counts.update(c)
        if granularity == "coarse":
            merged: Counter = Counter()
            for label, c in counts.items():
                merged[coarsen(label)] += c
            counts = merged
        n = sum(counts.values())
        return {label: c / n for label, c in counts.items() if c}

    def to_json(self) -> dict:
        return {"total": self.total,
                "names": {name: {kind: dict(sorted(c.items())) for kind, c in sorted(per_kind.items())}
                          for name, per_kind in sorted(self.counts.items())}}

    @classmethod
    def from_json(cls, doc: Mapping) -> "FrequencyTable":
        counts = {name: {kind: Counter(c) for kind, c in per_kind.items()}
                  for name, per_kind in doc.get("names", {}).items()}
        total = sum(sum(c.values()) for per_kind in counts.values() for c in per_kind.values())
        return cls(counts, int(doc.get("total", total)))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "FrequencyTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def fit_frequency(events: Iterable) -> FrequencyTable:
    """Count fine labels per (name, kind).

    ``events`` are ValueUseEvents or dicts with ``name``, ``fine`` and
    optionally ``kind`` (default ``variable``).
    """
    counts: dict[str, dict[str, Counter]] = {}
    total = 0
    for ev in events:
        if isinstance(ev, Mapping):
            name, fine, kind = ev["name"], ev["fine"], ev.get("kind", "variable")
        else:
            name, fine, kind = ev.name, ev.fine, ev.kind
        counts.setdefault(name, {}).setdefault(kind, Counter())[fine] += 1
        total += 1
    return FrequencyTable(counts, total)


def _ranked_distribution(dist: Mapping[str, float], granularity: str) -> list[tuple[str, float]]:
    order = {label: i for i, label in enumerate(catalog(granularity))}
    return sorted(dist.items(), key=lambda kv: (-kv[1], order[kv[0]]))


class FrequencyPredictor(Predictor):
    """Context-free predictor backed by a :class:`FrequencyTable`.

    ``strategy="sample"`` draws the answer from the name's empirical
    distribution (seeded per query); ``"argmax"`` ranks the whole distribution.
    Unseen names fall back to ``object``.
    """

    name = "frequency"

    def __init__(self, table: FrequencyTable, seed: int = 0, strategy: str = "sample"):
        if strategy not in ("sample", "argmax"):
            raise ValueError(f"unknown strategy {strategy!r}")
        self.table = table
        self.seed = seed
        self.strategy = strategy

    def predict(self, query):
        dist = self.table.distribution(query.name, query.granularity, query.kind)
        if not dist:
            return PredictorResponse((("object", 1.0),))
        ranked = _ranked_distribution(dist, query.granularity)
        if self.strategy == "argmax":
            return PredictorResponse(tuple(ranked[: query.top_k]))
        rng = _query_rng(self.seed, query)
        labels, weights = zip(*ranked)
        label = rng.choices(labels, weights=weights)[0]
        return PredictorResponse(((label, dist[label]),))


class RemotePredictor(Predictor):
    """Client for a predictor served over HTTP (see :func:`serve`)."""

    name = "rest"

    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def predict(self, query):
        body = json.dumps(query.to_json()).encode()
        req = urllib.request.Request(self.base_url + "/predict", data=body,
                                     headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                payload = resp.read()
        except urllib.error.HTTPError as exc:
            raise TransportError(f"server answered {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise TransportError(f"cannot reach {self.base_url}: {exc}") from exc
        try:
            doc = json.loads(payload)
            ranked = tuple((p["label"], p["score"]) for p in doc["predictions"])
            response = PredictorResponse(ranked)
        except (ValueError, KeyError, TypeError) as exc:
            raise SchemaViolation(f"malformed response: {exc}") from exc
        return response.check(query)


class _Handler(BaseHTTPRequestHandler):
    predictor: Predictor  # set on the subclass built by serve()

    def log_message(self, fmt, *args):
        log.debug("%s - " + fmt, self.address_string(), *args)

    def _send(self, status: int, doc: dict):
        data = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/health":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/predict":
            self._send(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            query = PredictorQuery.from_json(json.loads(self.rfile.read(length)))
        except ValueError as exc:
            self._send(400, {"error": str(exc)})
            return
        try:
            response = self.predictor.predict(query)
        except Exception as exc:  # the client sees a 500 and falls back
            log.exception("predictor failed")
            self._send(500, {"error": str(exc)})
            return
        self._send(200, response.to_json())


class PredictionServer:
    def __init__(self, predictor: Predictor, host: str = "127.0.0.1", port: int = 0):
        handler = type("Handler", (_Handler,), {"predictor": predictor})
        try:
            self.httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            raise RuntimeError(f"cannot bind {host}:{port}: {exc}") from exc
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "PredictionServer":
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self.httpd.serve_forever()

    def shutdown(self):
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(predictor: Predictor, port: int = 0, host: str = "127.0.0.1") -> PredictionServer:
    """Start serving ``predictor`` in a background thread."""
    return PredictionServer(predictor, host, port).start()
