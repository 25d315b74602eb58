"""SMT-LIB2 emission, solver process driver and model decoding."""

from __future__ import annotations

import logging
import os
import re
import shlex
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .encoder import ConstraintIR, Eq, Le, evaluate
from .netmodel import PortSchedule, Schedule, Window

log = logging.getLogger(__name__)

SOLVER_ENV = "QBVSCHED_SOLVER"
DEFAULT_SOLVER = "z3 -in"

_SIMPLE_SYMBOL = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/\-][A-Za-z0-9~!@$%^&*_+=<>.?/\-]*$")


class EncodingMismatch(ValueError):
    pass


class DecodeError(ValueError):
    pass


def default_solver() -> str:
    return os.environ.get(SOLVER_ENV, DEFAULT_SOLVER)


@dataclass
class SolverResult:
    status: str  # sat | unsat | unknown | timeout | solver-error
    model: dict | None = None
    objective_value: int | None = None
    wall_ms: float = 0.0
    assertion_count: int = 0
    raw: str = ""
    optimal: bool | None = None
    probes: list = field(default_factory=list)  # bisection (bound, status, value), in order

    def __post_init__(self):
        if (self.model is not None) != (self.status == "sat"):
            raise ValueError("model present iff status is sat")


# ---------------------------------------------------------------------------
# emission


def _symbol(name: str) -> str:
    if _SIMPLE_SYMBOL.match(name):
        return name
    if "|" in name or "\\" in name:
        raise EncodingMismatch(f"cannot quote symbol {name!r}")
    return f"|{name}|"


def to_sexpr(e) -> str:
    if isinstance(e, bool):
        return "true" if e else "false"
    if isinstance(e, int):
        return str(e) if e >= 0 else f"(- {-e})"
    if isinstance(e, str):
        return _symbol(e)
    op, *args = e
    return "(" + " ".join([op] + [to_sexpr(a) for a in args]) + ")"


Z3_NIA_CHECK = "(check-sat-using (par-or smt (using-params smt :arith.solver 2)))"


def check_command(ir: ConstraintIR, solver_command: str | None = None, optimize: bool = False) -> str:
    """``(check-sat)``, except for nonlinear problems sent to z3.

    z3's default QF_NIA strategy can stall on small infeasible instances
    that its plain ``smt`` tactic refutes at once, while large infeasible
    ones need the legacy arithmetic solver (which in turn stalls on some
    small ones), so z3 races the two configurations.
    """
    exe = Path(shlex.split(solver_command or default_solver())[0]).name
    if exe.startswith("z3") and not optimize and not ir.is_linear():
        return Z3_NIA_CHECK
    return "(check-sat)"


def emit_smtlib(ir: ConstraintIR, logic: str | None = None, optimize: bool = False,
                extra: tuple = (), check: str = "(check-sat)") -> str:
    """Render ``ir`` as an SMT-LIB2 script.

    ``optimize`` appends a ``minimize`` directive for the IR objective (an
    optimization-dialect extension understood by OMT solvers).  ``extra`` is a
    sequence of additional IR assertions, e.g. an objective bound.
    """
    linear = ir.is_linear() and all(_is_linear(e) for e in extra)
    if logic is None:
        logic = "QF_LIA" if linear else "QF_NIA"
    if logic not in ("QF_LIA", "QF_NIA"):
        raise EncodingMismatch(f"unsupported logic {logic}")
    if logic == "QF_LIA" and not linear:
        raise EncodingMismatch("nonlinear constraints cannot be emitted under QF_LIA")
    lines = ["(set-option :produce-models true)", f"(set-logic {logic})"]
    for name, sort in ir.variables.items():
        lines.append(f"(declare-fun {_symbol(name)} () {sort})")
    for _, expr in ir.assertions:
        lines.append(f"(assert {to_sexpr(expr)})")
    for expr in extra:
        lines.append(f"(assert {to_sexpr(expr)})")
    if optimize:
        if ir.objective is None:
            raise ValueError("optimize requested but IR has no objective")
        lines.append(f"(minimize {to_sexpr(ir.objective)})")
    lines.append(check)
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def _is_linear(e) -> bool:
    tmp = ConstraintIR(assertions=[("x", e)])
    return tmp.is_linear()


# ---------------------------------------------------------------------------
# solver output parsing


def _tokenize(text: str):
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            yield c
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c == "|":
            j = text.index("|", i + 1)
            yield text[i + 1:j]
            i = j + 1
        elif c == '"':
            j = i + 1
            while j < n:
                if text[j] == '"' and not (j + 1 < n and text[j + 1] == '"'):
                    break
                j += 2 if text[j] == '"' else 1
            yield text[i:j + 1]
            i = j + 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "();":
                j += 1
            yield text[i:j]
            i = j


def parse_sexprs(text: str) -> list:
    stack = [[]]
    for tok in _tokenize(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise ValueError("unbalanced ')'")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok)
    if len(stack) != 1:
        raise ValueError("unbalanced '('")
    return stack[0]


def _value(v):
    if isinstance(v, list):
        if len(v) == 2 and v[0] == "-":
            return -_value(v[1])
        raise ValueError(f"unsupported value {v!r}")
    if v == "true":
        return True
    if v == "false":
        return False
    return int(v)


def parse_solver_output(text: str) -> tuple[str, dict | None]:
    items = parse_sexprs(text)
    status = None
    model = None
    for item in items:
        if isinstance(item, str) and item in ("sat", "unsat", "unknown") and status is None:
            status = item
        elif isinstance(item, list) and item and item[0] == "error":
            if status in ("unsat", "unknown") and "model is not available" in " ".join(map(str, item)):
                continue
            raise ValueError(f"solver error: {item}")
        elif isinstance(item, list) and status == "sat" and model is None:
            defs = item[1:] if item and item[0] == "model" else item
            model = {}
            for d in defs:
                if not (isinstance(d, list) and d and d[0] == "define-fun"):
                    continue
                _, name, params, _sort, val = d
                if params:
                    continue
                model[name] = _value(val)
    if status is None:
        raise ValueError("no check-sat answer in solver output")
    if status == "sat" and model is None:
        raise ValueError("sat without model")
    return status, model


def run_solver(document: str, solver_command: str | None = None, timeout_s: float = 60.0,
               audit_path: str | Path | None = None) -> SolverResult:
    """Feed ``document`` to the solver on stdin and parse its answer."""
    if timeout_s <= 0:
        raise ValueError("timeout must be positive")
    cmd = shlex.split(solver_command or default_solver())
    if audit_path is not None:
        Path(audit_path).write_text(document)
    n_asserts = document.count("(assert ")
    t0 = time.perf_counter()
    try:
        proc = subprocess.run(cmd, input=document, capture_output=True, text=True, timeout=timeout_s)
    except subprocess.TimeoutExpired:
        return SolverResult("timeout", wall_ms=(time.perf_counter() - t0) * 1e3, assertion_count=n_asserts)
    except OSError as exc:
        return SolverResult("solver-error", raw=str(exc), assertion_count=n_asserts)
    wall = (time.perf_counter() - t0) * 1e3
    out = proc.stdout
    try:
        status, model = parse_solver_output(out)
    except ValueError as exc:
        log.debug("unparseable solver output: %s", exc)
        return SolverResult("solver-error", raw=out + proc.stderr, wall_ms=wall, assertion_count=n_asserts)
    if status == "unknown" and "timeout" in (out + proc.stderr):
        status = "timeout"
    return SolverResult(status, model, wall_ms=wall, assertion_count=n_asserts, raw=out)


# ---------------------------------------------------------------------------
# decoding


def decode_model(result: SolverResult, ir: ConstraintIR) -> Schedule:
    """Concrete windows and frame-to-window map from a sat model."""
    if result.status != "sat":
        raise DecodeError(f"cannot decode a {result.status} result")
    model = result.model
    missing = [n for n in ir.variables if n not in model]
    if missing:
        raise DecodeError(f"model lacks declared variables: {missing[:5]}")
    times = {}
    frames_of = {}
    for name, info in ir.metadata.items():
        val = model[name]
        if info.role in ("open", "close"):
            times[(info.link, info.window, info.role)] = int(val)
        elif val in (True, 1):
            frames_of.setdefault(info.frame, []).append((info.link, info.window))
    all_frames = {info.frame for info in ir.metadata.values() if info.role == "epsilon"}
    assignment = {}
    for key in sorted(all_frames):
        picked = frames_of.get(key, [])
        if len(picked) != 1:
            raise DecodeError(f"frame {key} assigned to {len(picked)} windows")
        assignment[key] = picked[0][1]
    ports = {}
    for lid, (link, hp) in sorted(ir.ports.items()):
        windows = []
        for k in range(1, link.wmax + 1):
            keys = sorted(f for f, kk in assignment.items() if f[1] == lid and kk == k)
            windows.append(Window(k, times[(lid, k, "open")], times[(lid, k, "close")], keys))
        ports[lid] = PortSchedule(link, windows, hp)
    return Schedule(ports, assignment)


def pin_assertions(ir: ConstraintIR, model: dict) -> list:
    """Equalities fixing every declared variable to its model value."""
    return [Eq(name, model[name]) for name in ir.variables]


def solve(ir: ConstraintIR, solver_command: str | None = None, timeout_s: float = 60.0,
          optimize: bool = False, audit_path=None, extra: tuple = ()) -> SolverResult:
    doc = emit_smtlib(ir, optimize=optimize, extra=extra,
                      check=check_command(ir, solver_command, optimize))
    res = run_solver(doc, solver_command, timeout_s, audit_path)
    if res.status == "sat" and ir.objective is not None:
        res.objective_value = evaluate(ir.objective, res.model)
        if optimize:
            res.optimal = True
    return res


def optimize_by_bisection(ir: ConstraintIR, solver_command: str | None = None,
                          timeout_s: float = 60.0, lower: int = 0) -> SolverResult:
    """Minimize ``ir.objective`` with plain satisfiability probes.

    The first probe is unbounded (recorded with bound None); every later
    probe asserts ``objective <= mid`` for the midpoint of the open bracket.
    A sat probe lowers the upper end to the objective value of its model, an
    unsat probe raises the lower end to ``mid + 1``.
    """
    if ir.objective is None:
        raise ValueError("IR has no objective")
    best = solve(ir, solver_command, timeout_s)
    probes = [(None, best.status, best.objective_value)]
    if best.status != "sat":
        best.probes = probes
        return best
    lo, hi = lower, best.objective_value
    optimal = True
    while lo < hi:
        mid = (lo + hi) // 2
        res = solve(ir, solver_command, timeout_s, extra=(Le(ir.objective, mid),))
        probes.append((mid, res.status, res.objective_value))
        if res.status == "sat":
            best = res
            hi = res.objective_value
        elif res.status == "unsat":
            lo = mid + 1
        else:
            optimal = False
            break
    best.optimal = optimal
    best.probes = probes
    return best


def solver_available(solver_command: str | None = None) -> bool:
    res = run_solver("(check-sat)\n(get-model)\n", solver_command, 10.0)
    return res.status == "sat"
