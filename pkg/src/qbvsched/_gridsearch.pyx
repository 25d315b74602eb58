# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid search over difference-constraint clauses.

Same contract as ``qbvsched._gridsearch_py.search``.
"""

from cpython.array cimport array
ctypedef long long int64_t


cdef inline int64_t _ceil_to(int64_t v, int64_t step) nogil:
    if v >= 0:
        return ((v + step - 1) // step) * step
    return -((-v) // step) * step


def search(lo, hi, int64_t step, clauses, objective=None):
    cdef Py_ssize_t n = len(lo)
    if n == 0:
        return True, [], (0 if objective is not None else None)

    # bucket clauses by their highest variable
    ulo = [[] for _ in range(n)]
    uhi = [[] for _ in range(n)]
    mul = [[] for _ in range(n)]
    for clause in clauses:
        level = max(max(a, b) for a, b, _ in clause)
        if len(clause) == 1:
            a, b, c = clause[0]
            if a == level:
                uhi[a].append((b, c))
            else:
                ulo[b].append((a, c))
        else:
            mul[level].append(clause)

    cdef array ulo_ptr = array("q", [0] * (n + 1)), uhi_ptr = array("q", [0] * (n + 1))
    cdef array mc_ptr = array("q", [0] * (n + 1))
    ulo_o, ulo_c, uhi_o, uhi_c = [], [], [], []
    cl_ptr = [0]
    at_a, at_b, at_c = [], [], []
    for v in range(n):
        for o, c in ulo[v]:
            ulo_o.append(o); ulo_c.append(c)
        ulo_ptr[v + 1] = len(ulo_o)
        for o, c in uhi[v]:
            uhi_o.append(o); uhi_c.append(c)
        uhi_ptr[v + 1] = len(uhi_o)
        for clause in mul[v]:
            for a, b, c in clause:
                at_a.append(a); at_b.append(b); at_c.append(c)
            cl_ptr.append(len(at_a))
        mc_ptr[v + 1] = len(cl_ptr) - 1

    cdef int64_t[:] vlo = array("q", lo)
    cdef int64_t[:] vhi = array("q", hi)
    cdef int64_t[:] lo_o = array("q", ulo_o or [0])
    cdef int64_t[:] lo_c = array("q", ulo_c or [0])
    cdef int64_t[:] hi_o = array("q", uhi_o or [0])
    cdef int64_t[:] hi_c = array("q", uhi_c or [0])
    cdef int64_t[:] cptr = array("q", cl_ptr)
    cdef int64_t[:] aa = array("q", at_a or [0])
    cdef int64_t[:] ab = array("q", at_b or [0])
    cdef int64_t[:] ac = array("q", at_c or [0])
    cdef int64_t[:] pl = ulo_ptr
    cdef int64_t[:] ph = uhi_ptr
    cdef int64_t[:] pm = mc_ptr
    cdef bint optimize = objective is not None
    cdef int64_t[:] coef = array("q", objective if optimize else [0] * n)
    cdef int64_t[:] x = array("q", [0] * n)
    cdef int64_t[:] top = array("q", [0] * n)
    cdef int64_t[:] bx = array("q", [0] * n)

    cdef Py_ssize_t i = 0, q, t, u
    cdef int64_t low, high, val, best = 0
    cdef bint found = False, ok, sat

    with nogil:
        # enter level 0
        low = vlo[0]
        high = vhi[0]
        x[0] = _ceil_to(low, step)
        top[0] = high
        while True:
            if x[i] > top[i]:
                if i == 0:
                    break
                i -= 1
                x[i] += step
                continue
            ok = True
            for q in range(pm[i], pm[i + 1]):
                sat = False
                for t in range(cptr[q], cptr[q + 1]):
                    if x[aa[t]] - x[ab[t]] <= ac[t]:
                        sat = True
                        break
                if not sat:
                    ok = False
                    break
            if not ok:
                x[i] += step
                continue
            if i == n - 1:
                if not optimize:
                    for u in range(n):
                        bx[u] = x[u]
                    found = True
                    break
                val = 0
                for u in range(n):
                    val += coef[u] * x[u]
                if not found or val < best:
                    best = val
                    for u in range(n):
                        bx[u] = x[u]
                    found = True
                x[i] += step
                continue
            i += 1
            low = vlo[i]
            high = vhi[i]
            for t in range(pl[i], pl[i + 1]):
                if x[lo_o[t]] - lo_c[t] > low:
                    low = x[lo_o[t]] - lo_c[t]
            for t in range(ph[i], ph[i + 1]):
                if x[hi_o[t]] + hi_c[t] < high:
                    high = x[hi_o[t]] + hi_c[t]
            x[i] = _ceil_to(low, step)
            top[i] = high

    if not found:
        return False, None, None
    return True, [bx[u] for u in range(n)], (best if optimize else None)
