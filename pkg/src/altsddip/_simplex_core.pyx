# cython: language_level=3
"""Compiled simplex iteration kernels.

Same contract and pivoting rules as ``_simplex_py``: ``AT`` is the n x m
matrix of structural columns, column ``n + i`` is the negated unit vector of
row i, ``Binv`` the explicit basis inverse.  Everything is updated in place
and ``(status, iterations)`` is returned.
"""

import numpy as np
from libc.math cimport fabs, INFINITY, isinf, isfinite

cdef enum:
    BASIC = 0
    AT_LO = 1
    AT_UP = 2
    FREE = 3
    FIXED = 4

cdef enum:
    OPTIMAL = 0
    INFEASIBLE = 1
    UNBOUNDED = 2
    ITER_LIMIT = 3
    REFACTOR = 4
    NUMERIC = 5


cdef inline void _btran(double[:, ::1] Binv, double[::1] cb, double[::1] y,
                        Py_ssize_t m) noexcept nogil:
    # y = Binv^T cb
    cdef Py_ssize_t p, i
    cdef double v
    for i in range(m):
        y[i] = 0.0
    for p in range(m):
        v = cb[p]
        if v != 0.0:
            for i in range(m):
                y[i] += Binv[p, i] * v


cdef inline void _ftran(double[:, ::1] Binv, double[:, ::1] AT, Py_ssize_t q,
                        double[::1] alpha, Py_ssize_t n,
                        Py_ssize_t m) noexcept nogil:
    # alpha = Binv @ column q
    cdef Py_ssize_t p, i
    cdef double s
    if q < n:
        for p in range(m):
            s = 0.0
            for i in range(m):
                s += Binv[p, i] * AT[q, i]
            alpha[p] = s
    else:
        for p in range(m):
            alpha[p] = -Binv[p, q - n]


cdef inline void _reduced(double[:, ::1] AT, double[::1] cost, double[::1] y,
                          double[::1] d, Py_ssize_t n,
                          Py_ssize_t m, bint zero_cost) noexcept nogil:
    cdef Py_ssize_t j, i
    cdef double s
    for j in range(n):
        s = 0.0 if zero_cost else cost[j]
        for i in range(m):
            s -= AT[j, i] * y[i]
        d[j] = s
    for i in range(m):
        d[n + i] = (0.0 if zero_cost else cost[n + i]) + y[i]


cdef inline void _pivot(double[:, ::1] Binv, double[::1] alpha,
                        double[::1] prow, Py_ssize_t r,
                        Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t p, i
    cdef double a = alpha[r]
    cdef double f
    for i in range(m):
        prow[i] = Binv[r, i] / a
    for p in range(m):
        if p == r:
            continue
        f = alpha[p]
        if f != 0.0:
            for i in range(m):
                Binv[p, i] -= f * prow[i]
    for i in range(m):
        Binv[r, i] = prow[i]


def primal(double[:, ::1] AT, double[::1] c, double[::1] lo, double[::1] up,
           double[::1] x, Py_ssize_t[::1] head, int[::1] state,
           double[:, ::1] Binv, long max_iter, long refactor_every,
           long bland_after, double tol_p, double tol_d, double tol_piv):
    """Composite phase-1/phase-2 bounded primal simplex."""
    cdef Py_ssize_t n = AT.shape[0]
    cdef Py_ssize_t m = Binv.shape[0]
    cdef long it = 0, updates = 0, stall = 0
    cdef double[::1] cb = np.zeros(m)
    cdef double[::1] y = np.zeros(m)
    cdef double[::1] d = np.zeros(n + m)
    cdef double[::1] alpha = np.zeros(m)
    cdef double[::1] exact = np.zeros(m)
    cdef double[::1] prow = np.zeros(m)
    cdef char[::1] below = np.zeros(m, dtype=np.int8)
    cdef char[::1] above = np.zeros(m, dtype=np.int8)
    cdef Py_ssize_t p, j, q, r, leave
    cdef bint phase1, el
    cdef double best, direction, xb, lob, upb, dl, theta_max, flip, step, rel
    while True:
        if it >= max_iter:
            return ITER_LIMIT, it
        if updates >= refactor_every:
            return REFACTOR, it
        phase1 = False
        for p in range(m):
            j = head[p]
            below[p] = x[j] < lo[j] - tol_p
            above[p] = x[j] > up[j] + tol_p
            if below[p]:
                cb[p] = -1.0
                phase1 = True
            elif above[p]:
                cb[p] = 1.0
                phase1 = True
            else:
                cb[p] = 0.0
        if not phase1:
            for p in range(m):
                cb[p] = c[head[p]]
        _btran(Binv, cb, y, m)
        _reduced(AT, c, y, d, n, m, phase1)

        q = -1
        best = -1.0
        for j in range(n + m):
            el = False
            if state[j] == AT_LO or state[j] == FREE:
                if d[j] < -tol_d:
                    el = True
            if state[j] == AT_UP or state[j] == FREE:
                if d[j] > tol_d:
                    el = True
            if not el:
                continue
            if stall > bland_after:
                q = j
                break
            if fabs(d[j]) > best:
                best = fabs(d[j])
                q = j
        if q < 0:
            return (INFEASIBLE if phase1 else OPTIMAL), it
        direction = 1.0 if d[q] < 0 else -1.0

        _ftran(Binv, AT, q, alpha, n, m)

        # Harris two-pass ratio test
        theta_max = INFINITY
        for p in range(m):
            j = head[p]
            xb = x[j]
            lob = lo[j]
            upb = up[j]
            dl = -direction * alpha[p]
            exact[p] = INFINITY
            rel = INFINITY
            if not below[p] and not above[p]:
                if dl < -tol_piv and isfinite(lob):
                    rel = (xb - lob + tol_p) / -dl
                    exact[p] = (xb - lob) / -dl
                elif dl > tol_piv and isfinite(upb):
                    rel = (upb - xb + tol_p) / dl
                    exact[p] = (upb - xb) / dl
            elif below[p] and dl > tol_piv:
                exact[p] = (lob - xb) / dl
                rel = exact[p]
            elif above[p] and dl < -tol_piv:
                exact[p] = (upb - xb) / dl
                rel = exact[p]
            if rel < theta_max:
                theta_max = rel

        flip = up[q] - lo[q]
        if isinf(theta_max) and isinf(flip):
            if phase1:
                return NUMERIC, it
            return UNBOUNDED, it
        if flip <= theta_max:
            step = flip
            r = -1
        else:
            r = -1
            best = -1.0
            for p in range(m):
                if exact[p] <= theta_max and fabs(alpha[p]) > best:
                    best = fabs(alpha[p])
                    r = p
            step = exact[r] if exact[r] > 0.0 else 0.0

        it += 1
        if step <= tol_p:
            stall += 1
        else:
            stall = 0

        x[q] += direction * step
        for p in range(m):
            x[head[p]] += -direction * alpha[p] * step
        if r < 0:
            if state[q] == AT_LO:
                state[q] = AT_UP
                x[q] = up[q]
            else:
                state[q] = AT_LO
                x[q] = lo[q]
            continue

        leave = head[r]
        if below[r] or (not above[r] and -direction * alpha[r] < 0):
            x[leave] = lo[leave]
            state[leave] = AT_LO
        else:
            x[leave] = up[leave]
            state[leave] = AT_UP
        if lo[leave] == up[leave]:
            state[leave] = FIXED
        head[r] = q
        state[q] = BASIC
        _pivot(Binv, alpha, prow, r, m)
        updates += 1


def dual(double[:, ::1] AT, double[::1] c, double[::1] lo, double[::1] up,
         double[::1] x, Py_ssize_t[::1] head, int[::1] state,
         double[:, ::1] Binv, long max_iter, long refactor_every,
         long bland_after, double tol_p, double tol_d, double tol_piv):
    """Bounded dual simplex from a dual feasible basis."""
    cdef Py_ssize_t n = AT.shape[0]
    cdef Py_ssize_t m = Binv.shape[0]
    cdef long it = 0, updates = 0, stall = 0
    cdef double[::1] cb = np.zeros(m)
    cdef double[::1] y = np.zeros(m)
    cdef double[::1] d = np.zeros(n + m)
    cdef double[::1] alpha = np.zeros(m)
    cdef double[::1] arow = np.zeros(n + m)
    cdef double[::1] slack = np.zeros(n + m)
    cdef double[::1] prow = np.zeros(m)
    cdef Py_ssize_t p, j, i, q, r
    cdef Py_ssize_t leave
    cdef bint increase, el
    cdef double inf_r, v, best, mag, theta_max, s, target, step, dual_step
    while True:
        if it >= max_iter:
            return ITER_LIMIT, it
        if updates >= refactor_every:
            return REFACTOR, it
        r = -1
        best = -1.0
        for p in range(m):
            j = head[p]
            v = lo[j] - x[j]
            if x[j] - up[j] > v:
                v = x[j] - up[j]
            if v <= tol_p:
                continue
            if stall > bland_after:
                if r < 0 or head[p] < head[r]:
                    r = p
            elif v > best:
                best = v
                r = p
        if r < 0:
            return OPTIMAL, it
        j = head[r]
        increase = x[j] < lo[j]

        for p in range(m):
            cb[p] = c[head[p]]
        _btran(Binv, cb, y, m)
        _reduced(AT, c, y, d, n, m, False)
        for j in range(n):
            s = 0.0
            for i in range(m):
                s += AT[j, i] * Binv[r, i]
            arow[j] = s
        for i in range(m):
            arow[n + i] = -Binv[r, i]

        # first pass: Harris bound on the dual step
        theta_max = INFINITY
        for j in range(n + m):
            el = False
            v = arow[j]
            if state[j] == AT_LO:
                if increase:
                    el = v < -tol_piv
                else:
                    el = v > tol_piv
                s = d[j] if d[j] > 0.0 else 0.0
            elif state[j] == AT_UP:
                if increase:
                    el = v > tol_piv
                else:
                    el = v < -tol_piv
                s = -d[j] if -d[j] > 0.0 else 0.0
            elif state[j] == FREE:
                el = fabs(v) > tol_piv
                s = fabs(d[j])
            if not el:
                slack[j] = -1.0
                continue
            slack[j] = s
            mag = (s + tol_d) / fabs(v)
            if mag < theta_max:
                theta_max = mag
        if isinf(theta_max):
            return INFEASIBLE, it

        # second pass: largest pivot among admissible ratios
        q = -1
        best = -1.0
        for j in range(n + m):
            if slack[j] < 0.0:
                continue
            if slack[j] / fabs(arow[j]) <= theta_max:
                if stall > bland_after:
                    q = j
                    break
                if fabs(arow[j]) > best:
                    best = fabs(arow[j])
                    q = j
        dual_step = slack[q] / fabs(arow[q])

        _ftran(Binv, AT, q, alpha, n, m)
        if fabs(alpha[r]) <= tol_piv:
            return NUMERIC, it
        leave = head[r]
        target = lo[leave] if increase else up[leave]
        step = (x[leave] - target) / alpha[r]

        it += 1
        if dual_step <= tol_d:
            stall += 1
        else:
            stall = 0

        x[q] += step
        for p in range(m):
            x[head[p]] -= alpha[p] * step
        x[leave] = target
        state[leave] = AT_LO if increase else AT_UP
        if lo[leave] == up[leave]:
            state[leave] = FIXED
        head[r] = q
        state[q] = BASIC
        _pivot(Binv, alpha, prow, r, m)
        updates += 1
