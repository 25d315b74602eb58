import random

import pytest

from qbvsched.encoder import ConstraintIR, Ge, Le, encode
from qbvsched.instances import random_problem, single_stream_problem
from qbvsched.netmodel import problem_from_dict
from qbvsched.smtlib import (
    DecodeError, EncodingMismatch, SolverResult, Z3_NIA_CHECK, check_command, decode_model, emit_smtlib,
    optimize_by_bisection, parse_sexprs, parse_solver_output, pin_assertions, run_solver, solve,
)
from qbvsched.validator import brute_force_minimum, check_schedule


def ir_with(*assertions, sort="Int"):
    ir = ConstraintIR()
    ir.declare("x", sort)
    for a in assertions:
        ir.add("bounds", a)
    return ir


def test_emit_basic_document():
    doc = emit_smtlib(ir_with(Ge("x", 0)))
    assert "(declare-fun x () Int)" in doc
    assert "(assert (>= x 0))" in doc
    assert "(set-logic QF_LIA)" in doc
    assert doc.rstrip().endswith("(check-sat)\n(get-model)".rstrip())


def test_emit_negative_literals_and_quoting():
    ir = ConstraintIR()
    ir.declare("w_a-b_1_open", "Int")
    ir.declare("odd name", "Int")
    ir.add("bounds", Ge("w_a-b_1_open", -5))
    ir.add("bounds", Le("odd name", 3))
    doc = emit_smtlib(ir)
    assert "(assert (>= w_a-b_1_open (- 5)))" in doc
    assert "(declare-fun |odd name| () Int)" in doc


def test_nonlinear_under_lia_rejected():
    ir = ConstraintIR()
    ir.declare("x", "Int")
    ir.declare("y", "Int")
    ir.add("precedence", Le(("*", "x", "y"), 3))
    with pytest.raises(EncodingMismatch):
        emit_smtlib(ir, logic="QF_LIA")
    assert "(set-logic QF_NIA)" in emit_smtlib(ir)


def test_linearized_instance_header():
    p = problem_from_dict(random_problem(random.Random(1), "fig1", 5))
    assert "(set-logic QF_LIA)\n" in emit_smtlib(encode(p))


def test_check_command_profiles():
    lin = ir_with(Ge("x", 0))
    nia = ConstraintIR()
    nia.declare("x", "Int")
    nia.add("bounds", Le(("*", "x", "x"), 4))
    assert check_command(lin, "z3 -in") == "(check-sat)"
    assert check_command(nia, "z3 -in") == Z3_NIA_CHECK
    assert check_command(nia, "cvc5 --lang smt2") == "(check-sat)"
    assert check_command(nia, "/opt/z3/bin/z3 -in", optimize=True) == "(check-sat)"


def test_parse_sexprs():
    assert parse_sexprs("(a (b 1) |c d|) sat ; comment\n x") == [["a", ["b", "1"], "c d"], "sat", "x"]
    with pytest.raises(ValueError):
        parse_sexprs("((a)")


def test_parse_solver_output():
    out = "sat\n(model\n  (define-fun x () Int (- 3))\n  (define-fun b () Bool true)\n)\n"
    assert parse_solver_output(out) == ("sat", {"x": -3, "b": True})
    out = 'unsat\n(error "line 9 column 10: model is not available")\n'
    assert parse_solver_output(out) == ("unsat", None)
    with pytest.raises(ValueError):
        parse_solver_output("what\n")


def test_solver_result_contract():
    with pytest.raises(ValueError):
        SolverResult("sat")
    with pytest.raises(ValueError):
        SolverResult("unsat", model={})


def test_missing_binary_is_solver_error():
    res = run_solver("(check-sat)\n", "/nonexistent/solver-binary", 5)
    assert res.status == "solver-error" and res.model is None


def test_unparseable_output_is_solver_error():
    res = run_solver("(check-sat)\n", "cat", 5)  # echoes the script back
    assert res.status == "solver-error"
    assert "(check-sat)" in res.raw


def test_bad_timeout():
    with pytest.raises(ValueError):
        run_solver("(check-sat)\n", "cat", 0)


@pytest.mark.solver
def test_forced_value():
    res = run_solver(emit_smtlib(ir_with(Ge("x", 0), Le("x", 0))))
    assert res.status == "sat" and res.model == {"x": 0}


@pytest.mark.solver
def test_contradiction():
    res = run_solver(emit_smtlib(ir_with(Ge("x", 1), Le("x", 0))))
    assert res.status == "unsat" and res.model is None


@pytest.mark.solver
def test_timeout_status():
    p = problem_from_dict(random_problem(random.Random(4), "fig1", 8))
    res = solve(encode(p), timeout_s=1e-9)
    assert res.status == "timeout" and res.model is None


@pytest.mark.solver
def test_audit_file(tmp_path):
    ir = ir_with(Ge("x", 2))
    res = solve(ir, audit_path=tmp_path / "doc.smt2")
    assert res.status == "sat"
    assert (tmp_path / "doc.smt2").read_text() == emit_smtlib(ir)


def hop1_ir(wmax=1, **cfg):
    p = problem_from_dict(single_stream_problem(size=120, hops=1, period=100_000, wmax=wmax,
                                                speed=1_000_000_000, overhead=0, **cfg))
    return p, encode(p)


@pytest.mark.solver
def test_decode_direct_mapping():
    p, ir = hop1_ir()
    model = {"w_A-B_1_open": 0, "w_A-B_1_close": 960, "e_A-B_1_s_0": True}
    s = decode_model(SolverResult("sat", model), ir)
    w = s.ports["A-B"].windows[0]
    assert (w.open, w.close, w.frames) == (0, 960, [("s", "A-B", 0)])
    assert s.assignment == {("s", "A-B", 0): 1}


def test_decode_errors():
    p, ir = hop1_ir(wmax=2)
    good = {"w_A-B_1_open": 0, "w_A-B_1_close": 960, "w_A-B_2_open": 960, "w_A-B_2_close": 960,
            "e_A-B_1_s_0": True, "e_A-B_2_s_0": False}
    decode_model(SolverResult("sat", good), ir)
    with pytest.raises(DecodeError):
        decode_model(SolverResult("sat", dict(good, **{"e_A-B_1_s_0": False})), ir)
    with pytest.raises(DecodeError):
        decode_model(SolverResult("sat", dict(good, **{"e_A-B_2_s_0": True})), ir)
    missing = dict(good)
    del missing["w_A-B_2_close"]
    with pytest.raises(DecodeError):
        decode_model(SolverResult("sat", missing), ir)
    with pytest.raises(DecodeError):
        decode_model(SolverResult("unsat"), ir)


@pytest.mark.solver
@pytest.mark.parametrize("arith", ["lin", "nia"])
def test_round_trip_pinned_model_stays_sat(arith):
    p = problem_from_dict(random_problem(random.Random(7), "star", 3), arithmetic=arith)
    ir = encode(p)
    res = solve(ir)
    assert res.status == "sat"
    assert check_schedule(p, decode_model(res, ir)) == []
    assert solve(ir, extra=tuple(pin_assertions(ir, res.model))).status == "sat"


@pytest.mark.solver
def test_objective_value_is_reevaluated():
    doc = single_stream_problem(size=2, hops=2, period=16, delta=1, wmax=2, objective="min-e2e-sum")
    p = problem_from_dict(doc)
    ir = encode(p)
    res = solve(ir, optimize=True)
    s = decode_model(res, ir)
    first = next(w for w in s.ports["A-B"].windows if w.frames)
    last = next(w for w in s.ports["B-C"].windows if w.frames)
    assert res.objective_value == last.close - first.open == 5
    assert res.optimal is True


@pytest.mark.solver
@pytest.mark.parametrize("delta,size", [(0, 2), (1, 2), (2, 3)])
def test_bisection_matches_brute_force(delta, size):
    doc = single_stream_problem(size=size, hops=2, period=16, delta=delta, wmax=2, objective="min-e2e-sum")
    p = problem_from_dict(doc)
    res = optimize_by_bisection(encode(p))
    oracle = brute_force_minimum(p, "min-e2e-sum")
    assert res.optimal and abs(res.objective_value - oracle.objective) <= 1
    # every probe lies strictly inside the current bracket, which then shrinks
    (first, status, hi), *rest = res.probes
    assert first is None and status == "sat"
    lo = 0
    for bound, status, value in rest:
        assert lo <= bound < hi
        if status == "sat":
            assert value <= bound
            hi = value
        else:
            assert status == "unsat"
            lo = bound + 1
    assert lo == hi == res.objective_value


@pytest.mark.solver
def test_bisection_floor_and_unsat():
    doc = single_stream_problem(size=2, hops=1, period=16, e2e=4, objective="min-e2e-sum")
    res = optimize_by_bisection(encode(problem_from_dict(doc)))
    assert res.objective_value == 2 and res.optimal
    doc = single_stream_problem(size=2, hops=2, period=16, e2e=3, objective="min-e2e-sum")
    res = optimize_by_bisection(encode(problem_from_dict(doc)))
    assert res.status == "unsat" and res.probes == [(None, "unsat", None)]


def test_bisection_needs_objective():
    with pytest.raises(ValueError):
        optimize_by_bisection(ir_with(Ge("x", 0)))
