"""Pure-Python grid search over difference-constraint clauses.

Reference implementation of the kernel in ``_gridsearch.pyx``; both expose
:func:`search` with identical semantics.

Variables ``x[0..n-1]`` range over multiples of ``step`` inside
``[lo[i], hi[i]]``.  A clause is a list of atoms ``(a, b, c)`` meaning
``x[a] - x[b] <= c``; a clause holds when any of its atoms holds.  Variables
are assigned in index order and a clause is checked as soon as its highest
variable is assigned.  Single-atom clauses tighten the range of that variable
instead of being tested value by value.
"""


def _prepare(n, clauses):
    unit_lo = [[] for _ in range(n)]  # x[i] >= x[other] - c
    unit_hi = [[] for _ in range(n)]  # x[i] <= x[other] + c
    multi = [[] for _ in range(n)]
    for clause in clauses:
        level = max(max(a, b) for a, b, _ in clause)
        if len(clause) == 1:
            a, b, c = clause[0]
            if a == level:
                unit_hi[a].append((b, c))
            else:
                unit_lo[b].append((a, c))
        else:
            multi[level].append(clause)
    return unit_lo, unit_hi, multi


def search(lo, hi, step, clauses, objective=None):
    """Return ``(found, values, best)``.

    Without ``objective`` the first solution in lexicographic order is
    returned and ``best`` is None.  With ``objective`` (a coefficient per
    variable) every solution is visited and the minimizer is returned.
    """
    n = len(lo)
    if n == 0:
        return True, [], 0 if objective is not None else None
    unit_lo, unit_hi, multi = _prepare(n, clauses)
    x = [0] * n
    best = [None, None]

    def rec(i):
        low, high = lo[i], hi[i]
        for other, c in unit_lo[i]:
            low = max(low, x[other] - c)
        for other, c in unit_hi[i]:
            high = min(high, x[other] + c)
        v = -(-low // step) * step
        while v <= high:
            x[i] = v
            ok = True
            for clause in multi[i]:
                for a, b, c in clause:
                    if x[a] - x[b] <= c:
                        break
                else:
                    ok = False
                    break
            if ok:
                if i == n - 1:
                    if objective is None:
                        best[1] = list(x)
                        return True
                    val = sum(k * xv for k, xv in zip(objective, x))
                    if best[0] is None or val < best[0]:
                        best[0], best[1] = val, list(x)
                elif rec(i + 1):
                    return True
            v += step
        return False

    rec(0)
    return best[1] is not None, best[1], best[0]
