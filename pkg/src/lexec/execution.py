"""Running a compiled snippet while recording which lines completed.

A line counts as covered when it started executing and no exception
(caught or not) originated from it. Lines of multi-line statements share the
fate of their statement.
"""
from __future__ import annotations

import ast
import contextlib
import io
import sys
import time
import tokenize
from dataclasses import asdict, dataclass, field


class SnippetTimeout(BaseException):
    """Raised from the tracer when a snippet exceeds its time budget."""


@dataclass
class RunReport:
    snippet: str
    countable: list[int] = field(default_factory=list)
    executed: list[int] = field(default_factory=list)
    covered: list[int] = field(default_factory=list)
    terminal_exception: dict | None = None
    injections: list[dict] = field(default_factory=list)
    duration_ms: float = 0.0
    stdout: str = ""
    syntax_error: bool = False
    timed_out: bool = False
    config: dict = field(default_factory=dict)

    @property
    def coverage(self) -> float:
        if not self.countable:
            return 0.0 if self.syntax_error else 1.0
        return len(set(self.covered) & set(self.countable)) / len(self.countable)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["coverage"] = self.coverage
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RunReport":
        doc = dict(doc)
        doc.pop("coverage", None)
        return cls(**doc)


_SKIP_TOKENS = {tokenize.COMMENT, tokenize.NL, tokenize.NEWLINE, tokenize.INDENT,
                tokenize.DEDENT, tokenize.ENCODING, tokenize.ENDMARKER}


def countable_lines(source: str) -> set[int]:
    """Non-blank, non-comment physical lines, found with the tokenizer."""
    lines: set[int] = set()
    physical = source.splitlines()
    try:
        for tok in tokenize.generate_tokens(io.StringIO(source).readline):
            if tok.type in _SKIP_TOKENS:
                continue
            for ln in range(tok.start[0], tok.end[0] + 1):
                if ln <= len(physical) and physical[ln - 1].strip():
                    lines.add(ln)
    except (tokenize.TokenError, IndentationError, SyntaxError):
        return {i for i, text in enumerate(physical, 1) if text.strip() and not text.strip().startswith("#")}
    return lines


def statement_owners(tree: ast.AST) -> dict[int, int]:
    """Map each physical line to the first line of the innermost statement holding it.

    Header lines of compound statements (``else:``, ``except E:``, decorators)
    belong to the compound statement itself.
    """
    owners: dict[int, int] = {}

    def visit(stmts):
        for node in stmts:
            first = min([node.lineno] + [d.lineno for d in getattr(node, "decorator_list", [])])
            for ln in range(first, node.end_lineno + 1):
                owners[ln] = first
            for f in ("body", "orelse", "finalbody"):
                visit(getattr(node, f, []))
            for block in getattr(node, "handlers", []) + getattr(node, "cases", []):
                visit(block.body)

    visit(getattr(tree, "body", []))
    return owners


class LineTracer:
    def __init__(self, filename: str, deadline: float | None = None):
        self.filename = filename
        self.deadline = deadline
        self.lines: set[int] = set()
        self.exceptions: list[tuple[int, BaseException]] = []

    def global_trace(self, frame, event, arg):
        if frame.f_code.co_filename == self.filename:
            return self.local_trace
        return None

    def local_trace(self, frame, event, arg):
        if event == "line":
            self.lines.add(frame.f_lineno)
            if self.deadline is not None and time.monotonic() > self.deadline:
                raise SnippetTimeout()
        elif event == "exception":
            self.exceptions.append((frame.f_lineno, arg[1]))
        return self.local_trace


def _traceback_lines(exc: BaseException, filename: str) -> list[int]:
    lines = []
    tb = exc.__traceback__
    while tb is not None:
        if tb.tb_frame.f_code.co_filename == filename:
            lines.append(tb.tb_lineno)
        tb = tb.tb_next
    return lines


def _exception_line(exc: BaseException, filename: str) -> int | None:
    lines = _traceback_lines(exc, filename)
    return lines[-1] if lines else None


def _clean_exit(exc: BaseException) -> bool:
    return isinstance(exc, SystemExit) and exc.code in (None, 0)


def execute(code, source: str, filename: str, namespace: dict | None = None,
            timeout: float | None = None, handled=None) -> tuple[RunReport, dict]:
    """Execute ``code`` (compiled from ``source`` under ``filename``) and account coverage.

    ``handled`` is a collection of exception objects that were intercepted on
    purpose (e.g. by the engine) and therefore do not mark their line as failed.
    """
    namespace = {} if namespace is None else namespace
    namespace.setdefault("__name__", "__main__")
    namespace.setdefault("__file__", filename)
    namespace.setdefault("__builtins__", __builtins__)
    deadline = time.monotonic() + timeout if timeout else None
    tracer = LineTracer(filename, deadline)
    out = io.StringIO()
    terminal: BaseException | None = None
    timed_out = False
    old_trace = sys.gettrace()
    start = time.perf_counter()
    with contextlib.redirect_stdout(out):
        sys.settrace(tracer.global_trace)
        try:
            exec(code, namespace)
        except SnippetTimeout as exc:
            terminal, timed_out = exc, True
        except BaseException as exc:  # the snippet's own failure, reported not raised
            terminal = exc
        finally:
            sys.settrace(old_trace)
    duration = (time.perf_counter() - start) * 1000.0

    handled_ids = {id(e) for e in (handled or ())}
    if terminal is not None and _clean_exit(terminal):
        handled_ids.add(id(terminal))
        terminal = None
    failed_lines = {ln for ln, exc in tracer.exceptions if id(exc) not in handled_ids}
    if terminal is not None:
        # exceptions raised by the tracer itself (timeouts) produce no exception event
        failed_lines.update(_traceback_lines(terminal, filename))

    countable = countable_lines(source)
    try:
        owners = statement_owners(ast.parse(source))
    except SyntaxError:
        owners = {}
    executed_stmts = {owners.get(ln, ln) for ln in tracer.lines}
    failed_stmts = {owners.get(ln, ln) for ln in failed_lines}
    executed = sorted(ln for ln in countable | tracer.lines
                      if ln >= 1 and owners.get(ln, ln) in executed_stmts)
    covered = sorted(ln for ln in executed if owners.get(ln, ln) not in failed_stmts)

    exc_doc = None
    if terminal is not None:
        exc_doc = {"type": type(terminal).__name__, "message": str(terminal),
                   "line": _exception_line(terminal, filename)}
    report = RunReport(
        snippet=filename,
        countable=sorted(countable),
        executed=executed,
        covered=covered,
        terminal_exception=exc_doc,
        duration_ms=duration,
        stdout=out.getvalue(),
        timed_out=timed_out,
    )
    return report, namespace
