import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbvsched import gridsearch
from qbvsched._gridsearch_py import search as py_search

compiled = pytest.mark.skipif(gridsearch.compiled_search is None, reason="compiled kernel not built")


def brute(lo, hi, step, clauses, objective=None):
    """Plain product enumeration, the reference for both kernels."""
    best = None
    axes = [range(-(-a // step) * step, b + 1, step) for a, b in zip(lo, hi)]
    for x in itertools.product(*axes):
        if all(any(x[a] - x[b] <= c for a, b, c in cl) for cl in clauses):
            if objective is None:
                return True, list(x), None
            val = sum(k * v for k, v in zip(objective, x))
            if best is None or val < best[0]:
                best = (val, list(x))
    if best is None:
        return False, None, None
    return True, best[1], best[0]


@st.composite
def problems(draw, with_objective=False):
    n = draw(st.integers(1, 4))
    lo = [draw(st.integers(0, 6)) for _ in range(n)]
    hi = [a + draw(st.integers(-1, 8)) for a in lo]
    step = draw(st.integers(1, 3))
    clauses = []
    if n > 1:
        atom = st.tuples(st.integers(0, n - 1), st.integers(0, n - 1), st.integers(-6, 6)).filter(
            lambda t: t[0] != t[1])
        clauses = draw(st.lists(st.lists(atom, min_size=1, max_size=3), max_size=6))
    objective = [draw(st.integers(-3, 3)) for _ in range(n)] if with_objective else None
    return lo, hi, step, clauses, objective


@settings(max_examples=300, deadline=None)
@given(problems())
def test_python_kernel_matches_enumeration(case):
    lo, hi, step, clauses, _ = case
    found, values, _ = py_search(lo, hi, step, clauses)
    ref = brute(lo, hi, step, clauses)
    assert found == ref[0]
    if found:
        # depth-first in index order returns the lexicographically first solution
        assert values == ref[1]


@settings(max_examples=300, deadline=None)
@given(problems(with_objective=True))
def test_python_kernel_minimum(case):
    lo, hi, step, clauses, obj = case
    found, values, best = py_search(lo, hi, step, clauses, obj)
    ref = brute(lo, hi, step, clauses, obj)
    assert found == ref[0]
    if found:
        assert best == ref[2]
        assert values == ref[1]  # first strict minimum in lexicographic order


@compiled
@settings(max_examples=400, deadline=None)
@given(problems(with_objective=True), st.booleans())
def test_compiled_matches_python(case, use_objective):
    lo, hi, step, clauses, obj = case
    obj = obj if use_objective else None
    assert gridsearch.compiled_search(list(lo), list(hi), step, clauses, obj) == py_search(lo, hi, step, clauses, obj)


def test_known_cases():
    # x1 - x0 >= 3 and x0 >= 2
    assert gridsearch.search([0, 0], [10, 10], 1, [[(0, 1, -3)], [(1, 0, 100)]]) == (True, [0, 3], None)
    assert gridsearch.search([0, 0], [10, 4], 2, [[(0, 1, -5)]]) == (False, None, None)
    assert gridsearch.search([], [], 1, []) == (True, [], None)
    # either order of two unit blocks in [0, 1]
    found, values, _ = gridsearch.search([0, 0], [1, 1], 1, [[(0, 1, -1), (1, 0, -1)]])
    assert found and abs(values[0] - values[1]) == 1


@pytest.mark.parametrize("args", [
    ([0], [1], 0, []),
    ([0], [1, 2], 1, []),
    ([-1], [1], 1, []),
    ([0, 0], [1, 1], 1, [[]]),
    ([0, 0], [1, 1], 1, [[(0, 0, 1)]]),
    ([0, 0], [1, 1], 1, [[(0, 2, 1)]]),
])
def test_rejects_bad_input(args):
    with pytest.raises(ValueError):
        gridsearch.search(*args)


def test_objective_length_checked():
    with pytest.raises(ValueError):
        gridsearch.search([0, 0], [1, 1], 1, [], [1])


def test_backend_name():
    assert gridsearch.BACKEND in ("cython", "python")
