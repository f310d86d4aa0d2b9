"""Abstraction of runtime values into a finite label set, and the way back.

Labels are plain strings (``"int_pos"``, ``"list"``, ...) because they travel
through traces and the HTTP protocol unchanged.
"""
from __future__ import annotations

import enum
import math
import random
from typing import Any

FINE_LABELS = (
    "none", "true", "false",
    "int_neg", "int_zero", "int_pos",
    "float_neg", "float_zero", "float_pos",
    "str_empty", "str_nonempty",
    "list_empty", "list_nonempty",
    "tuple_empty", "tuple_nonempty",
    "set_empty", "set_nonempty",
    "dict_empty", "dict_nonempty",
    "callable", "resource", "object",
)

COARSE_LABELS = (
    "none", "boolean", "integer", "float", "string",
    "list", "tuple", "set", "dictionary",
    "callable", "resource", "object",
)


class Granularity(str, enum.Enum):
    FINE = "fine"
    COARSE = "coarse"


class Mode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    RANDOMIZED = "randomized"


_CATALOGS = {Granularity.FINE: FINE_LABELS, Granularity.COARSE: COARSE_LABELS}

_COARSE_OF = {
    "none": "none", "true": "boolean", "false": "boolean",
    "int_neg": "integer", "int_zero": "integer", "int_pos": "integer",
    "float_neg": "float", "float_zero": "float", "float_pos": "float",
    "str_empty": "string", "str_nonempty": "string",
    "list_empty": "list", "list_nonempty": "list",
    "tuple_empty": "tuple", "tuple_nonempty": "tuple",
    "set_empty": "set", "set_nonempty": "set",
    "dict_empty": "dictionary", "dict_nonempty": "dictionary",
    "callable": "callable", "resource": "resource", "object": "object",
}


class Dummy:
    """Placeholder object injected for values nobody could provide."""

    def __repr__(self):
        return "Dummy()"


class DummyCallable:
    """Stands in for a missing function.

    Every injection creates a new instance, so two missing functions never share
    identity. Called outside the engine it behaves like the ``Dummy``
    constructor.
    """

    def __call__(self, *args, **kwargs):
        return Dummy()

    def __repr__(self):
        return "DummyCallable()"


class DummyResource:
    """Injected value usable in a ``with`` statement; entering yields itself."""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        return False

    def __repr__(self):
        return "DummyResource()"


_DUMMY_TYPES = (Dummy, DummyCallable, DummyResource)


def is_injected(value: Any) -> bool:
    try:
        return isinstance(value, _DUMMY_TYPES)
    except Exception:
        return False


def catalog(granularity: Granularity | str) -> tuple[str, ...]:
    return _CATALOGS[Granularity(granularity)]


def coarsen(label: str) -> str:
    try:
        return _COARSE_OF[label]
    except KeyError:
        raise ValueError(f"not a fine-grained label: {label!r}") from None


def _sign(x, neg, zero, pos):
    if x < 0:
        return neg
    if x == 0:
        return zero
    return pos  # also NaN


def _fine(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return _sign(v, "int_neg", "int_zero", "int_pos")
    if isinstance(v, float):
        if math.isnan(v):
            return "float_pos"
        return _sign(v, "float_neg", "float_zero", "float_pos")
    if isinstance(v, str):
        return "str_nonempty" if v else "str_empty"
    for kind, label in ((list, "list"), (tuple, "tuple"), ((set, frozenset), "set"), (dict, "dict")):
        if isinstance(v, kind):
            return f"{label}_nonempty" if len(v) else f"{label}_empty"
    if callable(v):
        return "callable"
    cls = type(v)
    if hasattr(cls, "__enter__") and hasattr(cls, "__exit__"):
        return "resource"
    return "object"


def abstract_value(value: Any, granularity: Granularity | str = Granularity.FINE) -> str:
    """Classify ``value``; never raises."""
    try:
        label = _fine(value)
    except Exception:
        label = "object"
    if Granularity(granularity) is Granularity.COARSE:
        return _COARSE_OF[label]
    return label


_FINE_VALUES = {
    "none": lambda: None,
    "true": lambda: True,
    "false": lambda: False,
    "int_neg": lambda: -1,
    "int_zero": lambda: 0,
    "int_pos": lambda: 1,
    "float_neg": lambda: -1.0,
    "float_zero": lambda: 0.0,
    "float_pos": lambda: 1.0,
    "str_empty": lambda: "",
    "str_nonempty": lambda: "a",
    "list_empty": lambda: [],
    "list_nonempty": lambda: [Dummy()],
    "tuple_empty": lambda: (),
    "tuple_nonempty": lambda: (Dummy(),),
    "set_empty": lambda: set(),
    "set_nonempty": lambda: {Dummy()},
    "dict_empty": lambda: {},
    "dict_nonempty": lambda: {"a": Dummy()},
    "callable": DummyCallable,
    "resource": DummyResource,
    "object": Dummy,
}

# deterministic choice first, then the alternatives of randomized mode
_COARSE_CHOICES = {
    "none": ("none",),
    "boolean": ("true", "false"),
    "integer": ("int_pos", "int_neg", "int_zero"),
    "float": ("float_pos", "float_neg", "float_zero"),
    "string": ("str_nonempty", "str_empty"),
    "list": ("list_nonempty", "list_empty"),
    "tuple": ("tuple_nonempty", "tuple_empty"),
    "set": ("set_nonempty", "set_empty"),
    "dictionary": ("dict_nonempty", "dict_empty"),
    "callable": ("callable",),
    "resource": ("resource",),
    "object": ("object",),
}


def concretize(
    label: str,
    granularity: Granularity | str = Granularity.FINE,
    mode: Mode | str = Mode.DETERMINISTIC,
    rng: random.Random | None = None,
) -> Any:
    """Build a fresh runtime value of class ``label``.

    Randomized mode draws uniformly among the coarse class's representatives
    using ``rng``; it is rejected for fine labels.
    """
    granularity = Granularity(granularity)
    mode = Mode(mode)
    if granularity is Granularity.FINE:
        if mode is Mode.RANDOMIZED:
            raise ValueError("randomized concretization requires coarse granularity")
        if label not in _FINE_VALUES:
            raise ValueError(f"unknown fine label: {label!r}")
        return _FINE_VALUES[label]()
    if label not in _COARSE_CHOICES:
        raise ValueError(f"unknown coarse label: {label!r}")
    choices = _COARSE_CHOICES[label]
    if mode is Mode.RANDOMIZED:
        fine = (rng or random).choice(sorted(choices))
    else:
        fine = choices[0]
    return _FINE_VALUES[fine]()
