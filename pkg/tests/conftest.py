import pytest

from qbvsched import decode_model, encode, problem_from_dict, solve
from qbvsched.smtlib import solver_available

HAVE_SOLVER = solver_available()


def pytest_collection_modifyitems(config, items):
    if HAVE_SOLVER:
        return
    skip = pytest.mark.skip(reason="no SMT solver available (set QBVSCHED_SOLVER)")
    for item in items:
        if "solver" in item.keywords:
            item.add_marker(skip)


def run_pipeline(doc, timeout=60.0, **overrides):
    """problem, ir, solver result and (if sat) decoded schedule for ``doc``."""
    problem = problem_from_dict(doc, **overrides)
    ir = encode(problem, problem.config)
    res = solve(ir, timeout_s=timeout)
    schedule = decode_model(res, ir) if res.status == "sat" else None
    return problem, ir, res, schedule


@pytest.fixture
def pipeline():
    return run_pipeline


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``record(n, ok, detail)``: one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
