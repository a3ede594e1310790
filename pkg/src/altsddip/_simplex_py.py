"""Pure-Python (numpy) simplex iteration kernels.

Both kernels operate in place on the bounded standard form

    [A  -I] (x_struct, r) = 0,   lo <= (x_struct, r) <= up

where ``AT`` holds the structural columns as rows (``AT[j]`` is column j)
and column ``n + i`` is the negated unit vector of row i.  ``Binv`` is the
explicit basis inverse, ``head[p]`` the column basic in position p and
``state`` the per-column status.  The compiled core in ``_simplex_core.pyx``
implements exactly the same iterations; keep the two in step.
"""

import numpy as np

BASIC, AT_LO, AT_UP, FREE, FIXED = 0, 1, 2, 3, 4
OPTIMAL, INFEASIBLE, UNBOUNDED, ITER_LIMIT, REFACTOR, NUMERIC = 0, 1, 2, 3, 4, 5


def _column(AT, j, m):
    n = AT.shape[0]
    if j < n:
        return AT[j]
    col = np.zeros(m)
    col[j - n] = -1.0
    return col


def _pivot(Binv, alpha, r):
    piv_row = Binv[r] / alpha[r]
    Binv -= np.outer(alpha, piv_row)
    Binv[r] = piv_row


def _reduced_costs(AT, cost, y):
    n = AT.shape[0]
    d = np.empty(cost.shape[0])
    d[:n] = cost[:n] - AT @ y
    d[n:] = cost[n:] + y
    return d


def primal(AT, c, lo, up, x, head, state, Binv, max_iter, refactor_every,
           bland_after, tol_p, tol_d, tol_piv):
    """Composite phase-1/phase-2 bounded primal simplex.

    Phase 1 minimizes the sum of bound violations of basic variables; the
    phase switches automatically once the basis is primal feasible.
    Returns ``(status, iterations)``.
    """
    n = AT.shape[0]
    m = Binv.shape[0]
    it = 0
    updates = 0
    stall = 0
    zero_cost = np.zeros(n + m)
    while True:
        if it >= max_iter:
            return ITER_LIMIT, it
        if updates >= refactor_every:
            return REFACTOR, it
        xb = x[head]
        lob = lo[head]
        upb = up[head]
        below = xb < lob - tol_p
        above = xb > upb + tol_p
        phase1 = bool(below.any() or above.any())
        if phase1:
            cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
            y = Binv.T @ cb
            d = _reduced_costs(AT, zero_cost, y)
        else:
            y = Binv.T @ c[head]
            d = _reduced_costs(AT, c, y)

        inc = ((state == AT_LO) | (state == FREE)) & (d < -tol_d)
        dec = ((state == AT_UP) | (state == FREE)) & (d > tol_d)
        elig = inc | dec
        if not elig.any():
            return (INFEASIBLE if phase1 else OPTIMAL), it
        cand = np.flatnonzero(elig)
        if stall > bland_after:
            q = int(cand[0])
        else:
            q = int(cand[np.argmax(np.abs(d[cand]))])
        direction = 1.0 if d[q] < 0 else -1.0

        alpha = Binv @ _column(AT, q, m)
        delta = -direction * alpha

        # Harris two-pass ratio test
        relaxed = np.full(m, np.inf)
        exact = np.full(m, np.inf)
        feas = ~(below | above)
        dn = delta < -tol_piv
        dp = delta > tol_piv
        mask = feas & dn & np.isfinite(lob)
        relaxed[mask] = (xb[mask] - lob[mask] + tol_p) / -delta[mask]
        exact[mask] = (xb[mask] - lob[mask]) / -delta[mask]
        mask = feas & dp & np.isfinite(upb)
        relaxed[mask] = (upb[mask] - xb[mask] + tol_p) / delta[mask]
        exact[mask] = (upb[mask] - xb[mask]) / delta[mask]
        # infeasible basics leave at the bound they are moving back onto
        mask = below & dp
        exact[mask] = (lob[mask] - xb[mask]) / delta[mask]
        relaxed[mask] = exact[mask]
        mask = above & dn
        exact[mask] = (upb[mask] - xb[mask]) / delta[mask]
        relaxed[mask] = exact[mask]

        theta_max = relaxed.min() if m else np.inf
        flip = up[q] - lo[q]
        if np.isinf(theta_max) and np.isinf(flip):
            if phase1:
                return NUMERIC, it
            return UNBOUNDED, it
        if flip <= theta_max:
            step = flip
            r = -1
        else:
            ok = np.flatnonzero(exact <= theta_max)
            r = int(ok[np.argmax(np.abs(alpha[ok]))])
            step = max(exact[r], 0.0)

        it += 1
        if step <= tol_p:
            stall += 1
        else:
            stall = 0

        x[q] += direction * step
        x[head] += delta * step
        if r < 0:
            if state[q] == AT_LO:
                state[q] = AT_UP
                x[q] = up[q]
            else:
                state[q] = AT_LO
                x[q] = lo[q]
            continue

        leave = head[r]
        if below[r] or (not above[r] and delta[r] < 0):
            x[leave] = lo[leave]
            state[leave] = AT_LO
        else:
            x[leave] = up[leave]
            state[leave] = AT_UP
        if lo[leave] == up[leave]:
            state[leave] = FIXED
        head[r] = q
        state[q] = BASIC
        _pivot(Binv, alpha, r)
        updates += 1


def dual(AT, c, lo, up, x, head, state, Binv, max_iter, refactor_every,
         bland_after, tol_p, tol_d, tol_piv):
    """Bounded dual simplex from a dual feasible basis.

    Returns ``(status, iterations)``; ``INFEASIBLE`` means the primal has
    no feasible point (the dual ray is unbounded).
    """
    n = AT.shape[0]
    m = Binv.shape[0]
    it = 0
    updates = 0
    stall = 0
    while True:
        if it >= max_iter:
            return ITER_LIMIT, it
        if updates >= refactor_every:
            return REFACTOR, it
        xb = x[head]
        lob = lo[head]
        upb = up[head]
        infeas = np.maximum(lob - xb, xb - upb)
        bad = np.flatnonzero(infeas > tol_p)
        if bad.size == 0:
            return OPTIMAL, it
        if stall > bland_after:
            r = int(bad[np.argmin(head[bad])])
        else:
            r = int(bad[np.argmax(infeas[bad])])
        increase = xb[r] < lob[r]

        y = Binv.T @ c[head]
        d = _reduced_costs(AT, c, y)
        rho = Binv[r]
        arow = np.empty(n + m)
        arow[:n] = AT @ rho
        arow[n:] = -rho

        at_lo = (state == AT_LO)
        at_up = (state == AT_UP)
        free = (state == FREE)
        if increase:
            elig = (at_lo & (arow < -tol_piv)) | (at_up & (arow > tol_piv))
        else:
            elig = (at_lo & (arow > tol_piv)) | (at_up & (arow < -tol_piv))
        elig |= free & (np.abs(arow) > tol_piv)
        cand = np.flatnonzero(elig)
        if cand.size == 0:
            return INFEASIBLE, it
        slack = np.where(at_lo[cand], np.maximum(d[cand], 0.0),
                         np.where(at_up[cand], np.maximum(-d[cand], 0.0),
                                  np.abs(d[cand])))
        mag = np.abs(arow[cand])
        theta_max = ((slack + tol_d) / mag).min()
        ratios = slack / mag
        ok = cand[ratios <= theta_max]
        if stall > bland_after:
            q = int(ok[0])
        else:
            q = int(ok[np.argmax(np.abs(arow[ok]))])
        dual_step = slack[np.searchsorted(cand, q)] / abs(arow[q])

        alpha = Binv @ _column(AT, q, m)
        if abs(alpha[r]) <= tol_piv:
            return NUMERIC, it
        target = lob[r] if increase else upb[r]
        step = (xb[r] - target) / alpha[r]

        it += 1
        if dual_step <= tol_d:
            stall += 1
        else:
            stall = 0

        x[q] += step
        x[head] -= alpha * step
        leave = head[r]
        x[leave] = target
        state[leave] = AT_LO if increase else AT_UP
        if lo[leave] == up[leave]:
            state[leave] = FIXED
        head[r] = q
        state[q] = BASIC
        _pivot(Binv, alpha, r)
        updates += 1
