"""Finding semantics-changing commits by lexecuting a function before and after.

Both versions live in one driver file and run in one engine session, so reads
that did not change get the same injected values in both executions.
"""
from __future__ import annotations

import ast
import enum
import math
import textwrap
from dataclasses import dataclass, field

from lexec.execution import RunReport
from lexec.instrument import instrument_source
from lexec.predictors import Predictor
from lexec.runtime import EngineSession, run_guarded
from lexec.values import is_injected

OLD_SUFFIX = "__lx_old"
NEW_SUFFIX = "__lx_new"
_OUTCOMES = "_lx_outcomes_"
_RESET = "_lx_reset_"


class BuildError(ValueError):
    pass


class Outcome(str, enum.Enum):
    EXCEPTIONAL = "Exceptional"
    SAME = "SameBehavior"
    CHANGED = "SemanticsChanging"


@dataclass(frozen=True)
class FunctionPair:
    old: str
    new: str
    name: str = ""
    commit: str | None = None
    file: str | None = None


def _single_function(source: str) -> ast.FunctionDef | ast.AsyncFunctionDef:
    try:
        tree = ast.parse(textwrap.dedent(source))
    except SyntaxError as exc:
        raise BuildError(f"cannot parse function: {exc}") from exc
    funcs = [n for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
    if len(funcs) != 1 or len(tree.body) != 1:
        raise BuildError(f"expected exactly one function definition, found {len(funcs)}")
    return funcs[0]


def _rename_apart(func, new_name: str) -> str:
    """Rename ``func`` and drop its decorators and the parameters without defaults."""
    args = func.args
    positional = args.posonlyargs + args.args
    kept = positional[len(positional) - len(args.defaults):] if args.defaults else []
    kw_kept = [(a, d) for a, d in zip(args.kwonlyargs, args.kw_defaults) if d is not None]
    func.args = ast.arguments(
        posonlyargs=[], args=kept, vararg=args.vararg,
        kwonlyargs=[a for a, _ in kw_kept], kw_defaults=[d for _, d in kw_kept],
        kwarg=args.kwarg, defaults=list(args.defaults),
    )
    func.name = new_name
    func.decorator_list = []
    return ast.unparse(func)


def build_driver(pair: FunctionPair) -> str:
    """One module holding both versions, invoking each and capturing the outcome."""
    old = _single_function(pair.old)
    new = _single_function(pair.new)
    name = pair.name or old.name
    old_name, new_name = name + OLD_SUFFIX, name + NEW_SUFFIX
    invoke = []
    for tag, fn in (("old", old_name), ("new", new_name)):
        if tag == "new":
            invoke.append(f"{_RESET}()")
        invoke.append(textwrap.dedent(f"""\
            try:
                {_OUTCOMES}[{tag!r}] = ('return', {fn}())
            except BaseException as _lx_exc_:
                {_OUTCOMES}[{tag!r}] = ('raise', _lx_exc_)"""))
    parts = [_rename_apart(old, old_name), _rename_apart(new, new_name), f"{_OUTCOMES} = {{}}", *invoke]
    return "\n\n".join(parts) + "\n"


@dataclass
class Verdict:
    different: bool
    rule: str | None = None
    description: str = ""


_PRIMITIVES = (int, float, complex, str, type(None))
_COLLECTIONS = (list, tuple, set, frozenset, dict)


def _same_primitive(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def compare_returns(v1, v2) -> Verdict:
    """Different types (i), unequal primitives (ii) or collections of unequal size (iii)."""
    t1, t2 = type(v1).__name__, type(v2).__name__
    if t1 != t2:
        return Verdict(True, "i", f"types differ: {t1} vs {t2}")
    if isinstance(v1, _PRIMITIVES) and isinstance(v2, _PRIMITIVES):
        if not _same_primitive(v1, v2):
            return Verdict(True, "ii", f"values differ: {v1!r} vs {v2!r}")
        return Verdict(False)
    if isinstance(v1, _COLLECTIONS) and isinstance(v2, _COLLECTIONS):
        if len(v1) != len(v2):
            return Verdict(True, "iii", f"sizes differ: {len(v1)} vs {len(v2)}")
    return Verdict(False)


@dataclass
class DiffOutcome:
    outcome: Outcome
    detail: str = ""
    rule: str | None = None
    build_error: bool = False
    returns: dict = field(default_factory=dict)
    report: RunReport | None = None
    # a SameBehavior verdict only says this execution found no difference
    guarantee: str = "none: dynamic analysis under-approximates behavioral changes"

    def to_json(self) -> dict:
        return {"outcome": self.outcome.value, "detail": self.detail, "rule": self.rule,
                "build_error": self.build_error, "returns": self.returns,
                "guarantee": self.guarantee,
                "report": self.report.to_json() if self.report else None}


def _describe(outcome) -> dict:
    kind, value = outcome
    if kind == "raise":
        return {"raised": type(value).__name__, "message": str(value)}
    return {"returned": repr(value), "type": type(value).__name__, "injected": is_injected(value)}


def classify(pair: FunctionPair, predictor: Predictor | None = None, seed: int = 0,
             granularity: str = "fine", mode: str = "deterministic",
             timeout: float | None = 10.0) -> DiffOutcome:
    try:
        driver = build_driver(pair)
        unit = instrument_source(driver, pair.file or "<driver>")
    except (BuildError, SyntaxError) as exc:
        return DiffOutcome(Outcome.EXCEPTIONAL, f"driver build failed: {exc}", build_error=True)
    session = EngineSession(predictor, granularity, mode, seed)
    namespace = {_RESET: session.reset_injected_state}
    report = run_guarded(session, unit, namespace=namespace, timeout=timeout)
    outcomes = namespace.get(_OUTCOMES, {})
    if report.terminal_exception is not None or set(outcomes) != {"old", "new"}:
        exc = report.terminal_exception or {}
        return DiffOutcome(Outcome.EXCEPTIONAL, f"driver failed: {exc.get('type')}: {exc.get('message')}",
                           report=report)
    returns = {tag: _describe(o) for tag, o in outcomes.items()}
    raised = [tag for tag, (kind, _) in outcomes.items() if kind == "raise"]
    if raised:
        detail = "; ".join(f"{tag} raised {returns[tag]['raised']}: {returns[tag]['message']}"
                           for tag in sorted(raised))
        return DiffOutcome(Outcome.EXCEPTIONAL, detail, returns=returns, report=report)
    verdict = compare_returns(outcomes["old"][1], outcomes["new"][1])
    if verdict.different:
        return DiffOutcome(Outcome.CHANGED, f"rule ({verdict.rule}): {verdict.description}",
                           rule=verdict.rule, returns=returns, report=report)
    return DiffOutcome(Outcome.SAME, "no difference observed", returns=returns, report=report)


def _functions(tree: ast.Module) -> dict[str, ast.AST]:
    out = {}

    def visit(body, prefix):
        for node in body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                out[prefix + node.name] = node
            elif isinstance(node, ast.ClassDef):
                visit(node.body, prefix + node.name + ".")

    visit(tree.body, "")
    return out


def single_function_change(old_file: str, new_file: str, file: str | None = None,
                           commit: str | None = None) -> tuple[FunctionPair | None, str]:
    """Pair the one function a commit changed, or explain why the commit is out of scope."""
    old_funcs = _functions(ast.parse(old_file))
    new_funcs = _functions(ast.parse(new_file))
    changed = sorted(name for name in set(old_funcs) | set(new_funcs)
                     if name not in old_funcs or name not in new_funcs
                     or ast.dump(old_funcs[name]) != ast.dump(new_funcs[name]))
    if not changed:
        return None, "no function changed"
    if len(changed) > 1:
        return None, f"multiple functions changed: {', '.join(changed)}"
    name = changed[0]
    if name not in old_funcs or name not in new_funcs:
        return None, f"function {name} was added or removed"
    old_src = ast.get_source_segment(old_file, old_funcs[name], padded=True)
    new_src = ast.get_source_segment(new_file, new_funcs[name], padded=True)
    short = name.rsplit(".", 1)[-1]
    return FunctionPair(old_src, new_src, short, commit, file), "ok"
