"""Backend selection for the brute-force grid search kernel.

The compiled extension is used when it was built; setting
``QBVSCHED_PURE_PYTHON=1`` forces the pure-Python implementation.
"""

import os

from . import _gridsearch_py

python_search = _gridsearch_py.search

try:
    from ._gridsearch import search as compiled_search
except ImportError:  # extension not built
    compiled_search = None

if compiled_search is not None and not os.environ.get("QBVSCHED_PURE_PYTHON"):
    BACKEND = "cython"
    _impl = compiled_search
else:
    BACKEND = "python"
    _impl = python_search


def search(lo, hi, step, clauses, objective=None):
    if step <= 0:
        raise ValueError("grid step must be positive")
    if len(lo) != len(hi):
        raise ValueError("lo/hi length mismatch")
    if any(v < 0 for v in lo):
        raise ValueError("domains must start at a non-negative value")
    n = len(lo)
    for clause in clauses:
        if not clause:
            raise ValueError("empty clause")
        for a, b, _ in clause:
            if not (0 <= a < n and 0 <= b < n) or a == b:
                raise ValueError(f"bad atom variables ({a}, {b})")
    if objective is not None and len(objective) != n:
        raise ValueError("objective length mismatch")
    return _impl(list(lo), list(hi), int(step), clauses, objective)
