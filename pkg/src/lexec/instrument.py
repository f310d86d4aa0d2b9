"""Source-to-source instrumentation.

Every variable read, attribute read and call is routed through one of three
loader functions defined in :mod:`lexec.runtime`::

    x = foo()      ->  x = _lx_c_(1, _lx_n_(0, 'foo', lambda: foo))
    y.f = x.bar    ->  _lx_n_(0, 'y', lambda: y).f = _lx_a_(2, _lx_n_(1, 'x', lambda: x), 'bar')

Each wrapped site gets an iid; the sidecar maps iids back to character spans of
the original source so that predictors can look at the surrounding code.
"""
from __future__ import annotations

import ast
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

NAME_LOADER = "_lx_n_"
ATTR_LOADER = "_lx_a_"
CALL_LOADER = "_lx_c_"
AUG_HELPER = "_lx_aug_"
LOADERS = (NAME_LOADER, ATTR_LOADER, CALL_LOADER)
RUNTIME_MODULE = "lexec.runtime"

SIDECAR_NAME = "lexec_sidecar.json"
SKIP_REPORT_NAME = "lexec_skipped.json"

KINDS = ("variable", "attribute", "return_value")

# builtins that inspect the calling frame; routing the call through the call
# loader would make them see the loader's frame instead of the user's
_FRAME_SENSITIVE = frozenset({"super", "locals", "vars", "dir", "globals", "eval", "exec"})

_AUG_OPS = {
    ast.Add: "+=", ast.Sub: "-=", ast.Mult: "*=", ast.MatMult: "@=", ast.Div: "/=",
    ast.FloorDiv: "//=", ast.Mod: "%=", ast.Pow: "**=", ast.LShift: "<<=",
    ast.RShift: ">>=", ast.BitAnd: "&=", ast.BitOr: "|=", ast.BitXor: "^=",
}


class ConfigurationError(Exception):
    pass


class IntegrityError(Exception):
    """Sidecar metadata does not fit the source it claims to describe."""


@dataclass(frozen=True)
class IidMetadata:
    iid: int
    file: str
    start: int
    end: int
    name: str
    kind: str

    def to_json(self) -> dict:
        return {"iid": self.iid, "start": self.start, "end": self.end,
                "name": self.name, "kind": self.kind}


@dataclass(frozen=True)
class InstrumentedUnit:
    file: str
    original: str
    instrumented: str
    metadata: tuple[IidMetadata, ...]
    tree: ast.Module = field(repr=False, compare=False)

    def compile(self):
        """Code object of the instrumented tree, reporting original line numbers."""
        return compile(self.tree, self.file, "exec", dont_inherit=True)

    def by_iid(self) -> dict[int, IidMetadata]:
        return {m.iid: m for m in self.metadata}


class _LineIndex:
    def __init__(self, source: str):
        self.source = source
        self.starts = [0]
        for m in re.finditer(r"\r\n|\r|\n", source):
            self.starts.append(m.end())

    def offset(self, lineno: int, col_bytes: int) -> int:
        start = self.starts[lineno - 1]
        end = self.starts[lineno] if lineno < len(self.starts) else len(self.source)
        line = self.source[start:end]
        return start + len(line.encode("utf-8")[:col_bytes].decode("utf-8", errors="ignore"))


def _mangle(name: str, class_name: str | None) -> str:
    if class_name and name.startswith("__") and not name.endswith("__"):
        stripped = class_name.lstrip("_")
        if stripped:
            return f"_{stripped}{name}"
    return name


def _has_future_annotations(tree: ast.Module) -> bool:
    for stmt in tree.body:
        if isinstance(stmt, ast.ImportFrom) and stmt.module == "__future__":
            if any(a.name == "annotations" for a in stmt.names):
                return True
    return False


class _Rewriter(ast.NodeTransformer):
    def __init__(self, source: str, file: str, first_iid: int, skip_annotations: bool):
        self.index = _LineIndex(source)
        self.source = source
        self.file = file
        self.next_iid = first_iid
        self.metadata: list[IidMetadata] = []
        self.skip_annotations = skip_annotations
        # innermost scope kind ("module" / "class" / "function") and class name for mangling
        self.scopes: list[str] = ["module"]
        self.class_names: list[str | None] = [None]

    # helpers

    def _new_iid(self, node: ast.AST, name: str, kind: str, start: int | None = None) -> int:
        iid = self.next_iid
        self.next_iid += 1
        end = self.index.offset(node.end_lineno, node.end_col_offset)
        if start is None:
            start = self.index.offset(node.lineno, node.col_offset)
        self.metadata.append(IidMetadata(iid, self.file, start, end, name, kind))
        return iid

    def _loader_call(self, loader: str, args: list[ast.expr], keywords=(), like: ast.AST | None = None):
        call = ast.Call(func=ast.Name(id=loader, ctx=ast.Load()), args=args, keywords=list(keywords))
        if like is not None:
            ast.copy_location(call, like)
        return call

    def _wrap_name(self, node: ast.Name) -> ast.expr:
        iid = self._new_iid(node, node.id, "variable")
        accessor = ast.Lambda(
            args=ast.arguments(posonlyargs=[], args=[], vararg=None, kwonlyargs=[],
                               kw_defaults=[], kwarg=None, defaults=[]),
            body=ast.Name(id=node.id, ctx=ast.Load()),
        )
        args = [ast.Constant(iid), ast.Constant(node.id), accessor]
        if self.scopes[-1] == "class":
            # lambdas cannot see class-body names, so hand over the class namespace too
            args.append(ast.Constant(_mangle(node.id, self.class_names[-1])))
            args.append(ast.Call(func=ast.Name(id="locals", ctx=ast.Load()), args=[], keywords=[]))
        return ast.fix_missing_locations(ast.copy_location(self._loader_call(NAME_LOADER, args), node))

    def _visit_in(self, scope: str, nodes):
        self.scopes.append(scope)
        try:
            if isinstance(nodes, list):
                return [n for n in (self.visit(x) for x in nodes) if n is not None]
            return self.visit(nodes)
        finally:
            self.scopes.pop()

    def _visit_list(self, nodes):
        return [self.visit(n) for n in nodes]

    def _visit_opt(self, node):
        return self.visit(node) if node is not None else None

    def _visit_annotation(self, node):
        if node is None or self.skip_annotations:
            return node
        return self.visit(node)

    def _visit_arguments(self, args: ast.arguments) -> ast.arguments:
        args.defaults = self._visit_list(args.defaults)
        args.kw_defaults = [self._visit_opt(d) for d in args.kw_defaults]
        for a in args.posonlyargs + args.args + args.kwonlyargs + [args.vararg, args.kwarg]:
            if a is not None:
                a.annotation = self._visit_annotation(a.annotation)
        return args

    # scopes

    def visit_FunctionDef(self, node):
        node.decorator_list = self._visit_list(node.decorator_list)
        node.args = self._visit_arguments(node.args)
        node.returns = self._visit_annotation(node.returns)
        node.body = self._visit_in("function", node.body)
        return node

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_Lambda(self, node):
        node.args = self._visit_arguments(node.args)
        node.body = self._visit_in("function", node.body)
        return node

    def visit_ClassDef(self, node):
        node.decorator_list = self._visit_list(node.decorator_list)
        node.bases = self._visit_list(node.bases)
        node.keywords = self._visit_list(node.keywords)
        self.class_names.append(node.name)
        try:
            node.body = self._visit_in("class", node.body)
        finally:
            self.class_names.pop()
        return node

    def _visit_comprehension(self, node, fields):
        # the first iterable is evaluated in the enclosing scope
        first = node.generators[0]
        first.iter = self.visit(first.iter)
        self.scopes.append("function")
        try:
            first.target = self.visit(first.target)
            first.ifs = self._visit_list(first.ifs)
            for gen in node.generators[1:]:
                self.visit(gen)
            for f in fields:
                setattr(node, f, self.visit(getattr(node, f)))
        finally:
            self.scopes.pop()
        return node

    def visit_ListComp(self, node):
        return self._visit_comprehension(node, ["elt"])

    visit_SetComp = visit_ListComp
    visit_GeneratorExp = visit_ListComp

    def visit_DictComp(self, node):
        return self._visit_comprehension(node, ["key", "value"])

    # statements needing care

    def visit_AnnAssign(self, node):
        node.target = self.visit(node.target)
        node.annotation = self._visit_annotation(node.annotation)
        node.value = self._visit_opt(node.value)
        return node

    def visit_AugAssign(self, node):
        if not isinstance(node.target, ast.Name):
            self.generic_visit(node)
            return node
        current = self._wrap_name(ast.copy_location(ast.Name(id=node.target.id, ctx=ast.Load()), node.target))
        value = self.visit(node.value)
        call = ast.Call(
            func=ast.Name(id=AUG_HELPER, ctx=ast.Load()),
            args=[ast.Constant(_AUG_OPS[type(node.op)]), current, value],
            keywords=[],
        )
        target = ast.Name(id=node.target.id, ctx=ast.Store())
        new = ast.Assign(targets=[ast.copy_location(target, node.target)], value=call)
        return ast.fix_missing_locations(ast.copy_location(new, node))

    def visit_match_case(self, node):
        # patterns look like expressions but must stay untouched
        node.guard = self._visit_opt(node.guard)
        node.body = self._visit_list(node.body)
        return node

    # the three instrumented node kinds

    def visit_Name(self, node):
        if isinstance(node.ctx, ast.Load) and node.id not in LOADERS and node.id != AUG_HELPER:
            return self._wrap_name(node)
        return node

    def visit_Attribute(self, node):
        node.value = self.visit(node.value)
        if not isinstance(node.ctx, ast.Load):
            return node
        end = self.index.offset(node.end_lineno, node.end_col_offset)
        iid = self._new_iid(node, node.attr, "attribute", start=end - len(node.attr))
        attr = _mangle(node.attr, self.class_names[-1])
        call = self._loader_call(ATTR_LOADER, [ast.Constant(iid), node.value, ast.Constant(attr)], like=node)
        return ast.fix_missing_locations(call)

    def visit_Call(self, node):
        func = node.func
        frame_sensitive = isinstance(func, ast.Name) and func.id in _FRAME_SENSITIVE
        node.func = self.visit(func)
        node.args = self._visit_list(node.args)
        node.keywords = self._visit_list(node.keywords)
        if frame_sensitive:
            return node
        if isinstance(func, ast.Name):
            name = func.id
        elif isinstance(func, ast.Attribute):
            name = func.attr
        else:
            name = ast.get_source_segment(self.source, func) or ast.unparse(func)
        iid = self._new_iid(node, name, "return_value")
        call = self._loader_call(CALL_LOADER, [ast.Constant(iid), node.func, *node.args], node.keywords, like=node)
        return ast.fix_missing_locations(call)


def _preamble_index(tree: ast.Module) -> int:
    i = 0
    body = tree.body
    if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant) \
            and isinstance(body[0].value.value, str):
        i = 1
    while i < len(body) and isinstance(body[i], ast.ImportFrom) and body[i].module == "__future__":
        i += 1
    return i


def instrument_source(source: str, file_id: str = "<snippet>", first_iid: int = 0) -> InstrumentedUnit:
    """Instrument one module. Raises ``SyntaxError`` if ``source`` does not parse."""
    tree = ast.parse(source, filename=file_id)
    skip_annotations = _has_future_annotations(tree)
    rewriter = _Rewriter(source, file_id, first_iid, skip_annotations)
    tree = rewriter.visit(tree)
    preamble = ast.ImportFrom(
        module=RUNTIME_MODULE,
        names=[ast.alias(name=n) for n in (*LOADERS, AUG_HELPER)],
        level=0,
    )
    # line 0 keeps the preamble out of line coverage
    for n in ast.walk(preamble):
        n.lineno = n.end_lineno = 0
        n.col_offset = n.end_col_offset = 0
    tree.body.insert(_preamble_index(tree), preamble)
    ast.fix_missing_locations(tree)
    return InstrumentedUnit(
        file=file_id,
        original=source,
        instrumented=ast.unparse(tree) + "\n",
        metadata=tuple(rewriter.metadata),
        tree=tree,
    )


def sidecar_document(units: Iterable[InstrumentedUnit]) -> dict:
    return {"files": {u.file: {"iids": [m.to_json() for m in u.metadata]} for u in units}}


def load_sidecar(path: str | os.PathLike) -> dict[int, IidMetadata]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for file, entry in doc["files"].items():
        for item in entry["iids"]:
            meta = IidMetadata(item["iid"], file, item["start"], item["end"], item["name"], item["kind"])
            out[meta.iid] = meta
    return out


def instrument_tree(root, out: str | os.PathLike, window: int = 512) -> tuple[list[InstrumentedUnit], list[dict]]:
    """Instrument every ``*.py`` file below ``root`` (a path or a list of paths) into ``out``.

    Iids are unique across the whole tree, so the combined sidecar can serve any
    entry point. Returns the units and the skip report (files that do not parse).
    """
    roots = [Path(r) for r in root] if isinstance(root, (list, tuple)) else [Path(root)]
    out = Path(out)
    for r in roots:
        if not r.exists():
            raise FileNotFoundError(r)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".lexec_write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"cannot write to output directory {out}: {exc}") from exc

    units, skipped = [], []
    sources = {}
    next_iid = 0
    for r in roots:
        files = [r] if r.is_file() else sorted(p for p in r.rglob("*.py") if p.is_file())
        for path in files:
            rel = path.name if r.is_file() else path.relative_to(r).as_posix()
            source = path.read_text(encoding="utf-8")
            try:
                unit = instrument_source(source, rel, first_iid=next_iid)
            except (SyntaxError, ValueError) as exc:
                skipped.append({"file": rel, "error": f"{type(exc).__name__}: {exc}"})
                continue
            next_iid += len(unit.metadata)
            target = out / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(unit.instrumented, encoding="utf-8")
            units.append(unit)
            sources[rel] = str(path.resolve())

    doc = sidecar_document(units)
    doc["window"] = window
    doc["sources"] = sources
    (out / SIDECAR_NAME).write_text(json.dumps(doc, indent=1), encoding="utf-8")
    (out / SKIP_REPORT_NAME).write_text(json.dumps(skipped, indent=1), encoding="utf-8")
    return units, skipped


def load_sidecar_sources(path: str | os.PathLike) -> dict[str, str]:
    """Original source texts recorded in a sidecar written by :func:`instrument_tree`."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    out = {}
    for rel, original in doc.get("sources", {}).items():
        try:
            out[rel] = Path(original).read_text(encoding="utf-8")
        except OSError:
            continue
    return out


_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize_code(text: str) -> list[str]:
    return _TOKEN.findall(text)


def context_around(source: str, start: int, end: int, window: int = 512) -> tuple[str, str]:
    """Source text just before ``start`` and just after ``end``.

    Each side holds at most ``window // 2`` lexical tokens and keeps the original
    spacing between them.
    """
    if not (0 <= start < end <= len(source)):
        raise IntegrityError(f"span ({start}, {end}) outside source of length {len(source)}")
    half = window // 2
    pre = ""
    if half:
        # widen a lookback window until it holds more than `half` tokens, so a
        # token cut at the window's edge is never among those kept
        width = 16 * half
        while True:
            lo = max(0, start - width)
            pre_tokens = list(_TOKEN.finditer(source, lo, start))
            if lo == 0 or len(pre_tokens) > half:
                break
            width *= 2
        pre_tokens = pre_tokens[-half:]
        pre = source[pre_tokens[0].start():start] if pre_tokens else ""
    post = ""
    if half:
        last = None
        for i, m in enumerate(_TOKEN.finditer(source, end)):
            if i == half:
                break
            last = m
        if last is not None:
            post = source[end:last.end()]
    return pre, post


def build_model_input(meta: IidMetadata, source: str, window: int = 512,
                      granularity: str = "fine", top_k: int = 1):
    """Predictor query for the use at ``meta``: its name, kind and the code around it."""
    from lexec.predictors import PredictorQuery

    pre, post = context_around(source, meta.start, meta.end, window)
    return PredictorQuery(meta.name, meta.kind, pre, post, granularity, top_k)
