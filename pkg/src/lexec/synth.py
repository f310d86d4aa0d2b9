"""Seeded synthetic corpora for experiments and acceptance checks.

Three kinds of programs are generated here:

* self-contained snippets that run to completion (or to a deliberate error)
  without any missing value,
* incomplete snippets that read names nobody defines, each name always used in
  a way that needs one particular value class,
* complete training programs over the same name vocabulary, whose recorded
  traces teach a frequency predictor which class each name needs.
"""
from __future__ import annotations

import random
import textwrap

# ---------------------------------------------------------------- self-contained

_SELF_CONTAINED = [
    """
    values = [{a}, {b}, {c}]
    print(sum(values), max(values), sorted(values, reverse=True))
    """,
    """
    def fib(n):
        return n if n < 2 else fib(n - 1) + fib(n - 2)
    print([fib(i) for i in range({a})])
    """,
    """
    class Counter:
        def __init__(self):
            self.count = 0
        def bump(self, by=1):
            self.count += by
            return self
    c = Counter().bump().bump({a})
    print(c.count)
    """,
    """
    words = "the quick brown fox jumps over the lazy dog".split()
    lengths = {{w: len(w) for w in words}}
    print(sorted(lengths.items())[:{a}])
    """,
    """
    try:
        result = {a} / {zero}
    except ZeroDivisionError as exc:
        print("caught", type(exc).__name__)
    finally:
        print("done")
    """,
    """
    def gen(limit):
        for i in range(limit):
            if i % 2:
                yield i * i
    print(list(gen({b})))
    """,
    """
    import math
    angles = [math.pi / k for k in range(1, {a} + 1)]
    print(round(sum(math.sin(x) for x in angles), 6))
    """,
    """
    def make_adder(k):
        def add(x):
            return x + k
        return add
    adders = [make_adder(i) for i in range({a})]
    print([f({b}) for f in adders])
    """,
    """
    data = {{"x": {a}, "y": {b}}}
    data["z"] = data["x"] * data["y"]
    data.update(w=data.get("q", -1))
    print(sorted(data.items()))
    """,
    """
    text = "Hello, World"
    print(text.lower().replace("world", "there"), text[::-1], f"{{text!r:>20}}")
    """,
    """
    from collections import Counter
    counts = Counter("abracadabra" * {a})
    print(counts.most_common(3))
    """,
    """
    class Shape:
        def area(self):
            raise NotImplementedError
    class Square(Shape):
        def __init__(self, side):
            self.side = side
        def area(self):
            return self.side ** 2
        def __repr__(self):
            return f"Square({{self.side}}) <{{super().__repr__().split()[0]}}>"
    print([Square(s).area() for s in range({a})], repr(Square({b})).split()[0])
    """,
    """
    total = 0
    for i in range({b}):
        if i == {a}:
            continue
        total += i
    else:
        total -= 1
    print(total)
    """,
    """
    import functools
    @functools.lru_cache(maxsize=None)
    def steps(n):
        return 0 if n == 1 else 1 + steps(n // 2 if n % 2 == 0 else 3 * n + 1)
    print(max(range(1, {b} * 10), key=steps))
    """,
    """
    pairs = list(zip(range({a}), "abcdefghij"))
    first, *rest = pairs
    print(first, len(rest), dict(rest))
    """,
    """
    class Stack(list):
        def peek(self):
            return self[-1]
    s = Stack()
    for i in range({a}):
        s.append(i * 2)
    print(s.peek(), s.pop(), len(s))
    """,
    """
    import contextlib
    @contextlib.contextmanager
    def tag(name):
        print("<" + name + ">")
        yield name.upper()
        print("</" + name + ">")
    with tag("b") as inner:
        print(inner * {a})
    """,
    """
    def describe(x):
        match x:
            case 0:
                return "zero"
            case [a, b]:
                return f"pair {{a}},{{b}}"
            case {{"k": v}}:
                return f"mapping {{v}}"
            case _:
                return "other"
    print([describe(v) for v in (0, [1, {a}], {{"k": {b}}}, "s")])
    """,
    """
    numbers = [{a}, {b}, {c}, 7]
    if (n := len(numbers)) > 3:
        print("long list", n)
    squares = {{x * x for x in numbers}}
    print(sorted(squares))
    """,
    """
    def outer():
        count = 0
        def inc():
            nonlocal count
            count += {a}
            return count
        inc()
        return inc()
    print(outer())
    """,
    """
    matrix = [[i * j for j in range({a})] for i in range({b})]
    print(sum(map(sum, matrix)), [row[-1] for row in matrix if row])
    """,
    """
    class Temperature:
        def __init__(self, c):
            self._c = c
        @property
        def fahrenheit(self):
            return self._c * 9 / 5 + 32
    print(Temperature({a}).fahrenheit)
    """,
    """
    import json
    doc = json.loads('{{"a": [1, 2, {a}], "b": null}}')
    doc["a"].append({b})
    print(json.dumps(doc, sort_keys=True))
    """,
    """
    items = ["x{a}", "y", "z{b}"]
    print(", ".join(f"{{i}}:{{s}}" for i, s in enumerate(items)))
    raise ValueError("deliberate failure after output")
    """,
    """
    import itertools
    combos = list(itertools.combinations(range({a} + 2), 2))
    print(len(combos), combos[:3])
    lookup = {{}}
    print(lookup["missing"])
    """,
]


def _fill(template: str, rng: random.Random) -> str:
    return textwrap.dedent(template).lstrip("\n").format(
        a=rng.randint(2, 5), b=rng.randint(3, 8), c=rng.randint(-4, 9), zero=0)


def self_contained_corpus(n: int = 50, seed: int = 0) -> dict[str, str]:
    """``n`` runnable snippets: the templates above, cycled with seeded constants."""
    rng = random.Random(seed)
    return {f"snippet_{i:03d}.py": _fill(_SELF_CONTAINED[i % len(_SELF_CONTAINED)], rng)
            for i in range(n)}


# ---------------------------------------------------------------- incomplete

# name -> (fine label a trained model should learn, value used in complete programs)
VOCABULARY = {
    "count": ("int_pos", "3"),
    "limit": ("int_pos", "10"),
    "size": ("int_pos", "4"),
    "rate": ("float_pos", "0.5"),
    "items": ("list_nonempty", "['a', 'b']"),
    "records": ("list_nonempty", "[{'id': 1}]"),
    "name": ("str_nonempty", "'alice'"),
    "prefix": ("str_nonempty", "'tmp'"),
    "config": ("dict_nonempty", "{'debug': True}"),
    "options": ("dict_nonempty", "{'mode': 'fast'}"),
    "lock": ("resource", "threading.Lock()"),
    "logger": ("object", "logging.getLogger('demo')"),
    "handler": ("callable", "(lambda *a, **k: None)"),
    "verbose": ("true", "True"),
}

# blocks whose missing names work as plain objects
_OBJECT_OK = [
    ("logger", 'logger.info("starting step {k}")'),
    ("logger", 'logger.debug("value %s", {k})'),
    ("handler", "handler({k})"),
    ("verbose", 'if verbose:\n    print("verbose mode")'),
    ("name", 'print(f"hello {{name}}")'),
    ("config", 'print("config loaded", config is not None)'),
]

# blocks that need a specific class
_TYPED = [
    ("count", "total = count + {k}\nprint(total > 0)"),
    ("limit", "for i in range(limit):\n    pass\nprint('looped')"),
    ("size", "print('big' if size > {k} else 'small')"),
    ("rate", "scaled = rate * {k}.0\nprint(scaled >= 0)"),
    ("items", "for item in items:\n    print('item', type(item).__name__)\nprint(len(items))"),
    ("records", "first = records[0]\nprint(len(records), first is not None)"),
    ("name", "initial = name[0]\nprint(len(name), initial.isalpha() or True)"),
    ("prefix", "path = prefix + '_{k}.txt'\nprint(path.endswith('.txt'))"),
    ("config", "keys = sorted(config)\nprint(len(keys) >= 0)"),
    ("options", "mode = options.get('mode', 'slow')\nprint(len(options), mode is not None)"),
    ("lock", "with lock:\n    print('critical section')"),
]

_SETUP = ["import os", "import sys", "results = []", "step = 0", "DEBUG = False"]


def _block(rng: random.Random, pool) -> tuple[str, str]:
    name, text = rng.choice(pool)
    return name, text.format(k=rng.randint(1, 9))


def incomplete_corpus(n: int = 30, seed: int = 0) -> dict[str, str]:
    """``n`` snippets that each crash as-is on an undefined name.

    About a third use their missing names only in object-compatible ways; the
    rest also contain uses that need the name's proper class.
    """
    rng = random.Random(seed)
    corpus = {}
    for i in range(n):
        lines = []
        if rng.random() < 0.5:
            lines.append(rng.choice(_SETUP))
        blocks = [_block(rng, _OBJECT_OK) for _ in range(rng.randint(1, 3))]
        if i % 3:
            blocks += [_block(rng, _TYPED) for _ in range(rng.randint(1, 3))]
        rng.shuffle(blocks)
        lines += [text for _, text in blocks]
        corpus[f"incomplete_{i:03d}.py"] = "\n".join(lines) + "\n"
    return corpus


def training_programs(n: int = 40, seed: int = 1) -> list[str]:
    """Complete programs over the incomplete corpus's vocabulary.

    Every vocabulary name is bound by a prelude, so the programs run and their
    traces show which value class each name carries.
    """
    rng = random.Random(seed)
    prelude = ["import logging", "import threading"]
    prelude += [f"{name} = {value}" for name, (_, value) in VOCABULARY.items()]
    programs = []
    for _ in range(n):
        blocks = [_block(rng, _OBJECT_OK + _TYPED) for _ in range(rng.randint(2, 5))]
        programs.append("\n".join(prelude + [text for _, text in blocks]) + "\n")
    return programs


# ---------------------------------------------------------------- functions

_FUNCTION_STMTS = [
    "x = {v}",
    "x = x + {v}",
    "y = [x] * {v}",
    "if flag:\n        x = -x",
    "z = obj.attr",
    "w = helper(x)",
    "for i in range({v}):\n        x = x + i",
    "q = {{'k': x}}",
    "s = str(x) + label",
    "t = (x, z)",
]
_FUNCTION_RETURNS = ["x", "[x, x]", "obj", "helper(x)", "q", "len(str(x))", "None", "t"]


def random_function(rng: random.Random, name: str = "f") -> str:
    """A small function mixing defined locals and free names."""
    lines = [f"def {name}():", "    x = 0", "    z = None", "    q = {}", "    t = ()"]
    for _ in range(rng.randint(1, 6)):
        lines.append("    " + rng.choice(_FUNCTION_STMTS).format(v=rng.randint(-3, 3)))
    lines.append("    return " + rng.choice(_FUNCTION_RETURNS))
    return "\n".join(lines) + "\n"


def generated_lines(n_lines: int = 1000, seed: int = 0) -> str:
    """About ``n_lines`` lines of varied, syntactically valid code."""
    rng = random.Random(seed)
    out: list[str] = []
    i = 0
    while len(out) < n_lines:
        kind = rng.randrange(4)
        if kind == 1:
            block = [f"def fn{i}(a, b={i}):", f"    c = a.method(b) + helper{i % 9}(a)", "    return c"]
        elif kind == 2:
            block = [f"for item{i} in items{i % 6}:", f"    total{i} = total{i % 8} + item{i}.size"]
        elif kind == 3:
            block = [f"if cond{i % 4} and other.flag:", f"    print(f'{{name{i % 5}}}', len(seq{i % 3}))"]
        else:
            block = []
        if not block or len(out) + len(block) > n_lines:
            block = [f"v{i} = obj{i % 7}.attr{i % 5}(arg{i % 3}, key=val{i % 4})"]
        out += block
        i += 1
    return "\n".join(out) + "\n"
