import textwrap

import pytest

from lexec import EngineSession, instrument_source, run_guarded


def lexecute(source, predictor=None, granularity="fine", mode="deterministic", seed=0,
             file_id="snippet.py", timeout=5.0):
    """Instrument ``source`` and run it guarded; returns (report, session, namespace)."""
    unit = instrument_source(textwrap.dedent(source), file_id)
    session = EngineSession(predictor, granularity, mode, seed)
    namespace = {}
    report = run_guarded(session, unit, namespace=namespace, timeout=timeout)
    return report, session, namespace


@pytest.fixture
def run():
    return lexecute


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
