"""Revised simplex LP engine with row duals.

The iteration kernels live in a compiled extension (``_simplex_core``) with
a numpy fallback (``_simplex_py``); which one is used is decided at import
time and can be forced with ``ALTSDDIP_KERNEL=python``.  Everything around
the kernels (standard form, basis factorization, verification of the final
basis, warm starts) lives here and is shared by both.
"""

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _simplex_py
from .errors import ContractError, SolverError

log = logging.getLogger(__name__)

try:
    if os.environ.get("ALTSDDIP_KERNEL", "").lower() == "python":
        raise ImportError("pure-Python kernel forced")
    from . import _simplex_core as _default_kernel

    BACKEND = "compiled"
except ImportError:
    _default_kernel = _simplex_py
    BACKEND = "python"

BASIC, AT_LO, AT_UP, FREE, FIXED = (_simplex_py.BASIC, _simplex_py.AT_LO, _simplex_py.AT_UP,
                                    _simplex_py.FREE, _simplex_py.FIXED)
_OPTIMAL, _INFEASIBLE, _UNBOUNDED, _ITER_LIMIT, _REFACTOR, _NUMERIC = range(6)

# Feasibility 1e-7 absolute and optimality 1e-7 relative are the published
# guarantees; pivoting decisions use tighter internal values.
FEAS_TOL = 1e-7
OPT_TOL = 1e-7
_TOL_P = 1e-9
_TOL_D = 1e-9
_TOL_PIV = 1e-9
REFACTOR_EVERY = 64

SENSES = ("G", "L", "E")
ROW_TAGS = ("structural", "copy", "cut")


def available_backends():
    """Names of kernels importable in this environment."""
    names = ["python"]
    try:
        from . import _simplex_core  # noqa: F401
        names.insert(0, "compiled")
    except ImportError:
        pass
    return names


def get_kernel(name=None):
    if name is None:
        return _default_kernel
    if name == "python":
        return _simplex_py
    if name == "compiled":
        from . import _simplex_core
        return _simplex_core
    raise ValueError(f"unknown simplex backend {name!r}")


@dataclass
class LinearProgram:
    """``min c^T x + obj_offset`` subject to ``A x (sense) rhs`` and ``lb <= x <= ub``.

    ``sense`` holds one of ``"G"`` (>=), ``"L"`` (<=), ``"E"`` (==) per row and
    ``row_tags`` one of ``"structural"``, ``"copy"``, ``"cut"``.
    """

    A: sp.csc_array
    rhs: np.ndarray
    sense: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    c: np.ndarray
    obj_offset: float = 0.0
    row_tags: np.ndarray = None

    def __post_init__(self):
        self.A = sp.csc_array(self.A, dtype=float)
        m, n = self.A.shape
        try:
            self.rhs = np.asarray(self.rhs, dtype=float).reshape(m)
            self.sense = np.asarray(self.sense, dtype="<U1").reshape(m)
            self.lb = np.asarray(self.lb, dtype=float).reshape(n)
            self.ub = np.asarray(self.ub, dtype=float).reshape(n)
            self.c = np.asarray(self.c, dtype=float).reshape(n)
            if self.row_tags is None:
                self.row_tags = np.full(m, "structural", dtype="<U10")
            else:
                self.row_tags = np.asarray(self.row_tags, dtype="<U10").reshape(m)
        except ValueError as exc:
            raise ContractError(f"LP data does not match a {m}x{n} matrix: {exc}") from None

    @property
    def shape(self):
        return self.A.shape

    def check(self):
        """Raise ``ContractError`` if the data is not well formed."""
        m, n = self.A.shape
        if not np.all(np.isfinite(self.A.data)):
            raise ContractError("constraint matrix has non-finite entries")
        if not np.all(np.isfinite(self.rhs)) or not np.all(np.isfinite(self.c)):
            raise ContractError("rhs/objective must be finite")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ContractError("NaN variable bound")
        if np.any(self.lb > self.ub):
            raise ContractError("variable lower bound exceeds upper bound")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf):
            raise ContractError("infinite bound on the wrong side")
        bad = ~np.isin(self.sense, SENSES)
        if bad.any():
            raise ContractError(f"unknown row sense {self.sense[bad][0]!r}")
        bad = ~np.isin(self.row_tags, ROW_TAGS)
        if bad.any():
            raise ContractError(f"unknown row tag {self.row_tags[bad][0]!r}")

    def row_bounds(self):
        lo = np.where(self.sense == "L", -np.inf, self.rhs)
        hi = np.where(self.sense == "G", np.inf, self.rhs)
        return lo, hi


@dataclass
class Basis:
    """Basis header and per-column status over structurals followed by logicals."""

    head: np.ndarray
    state: np.ndarray

    def copy(self):
        return Basis(self.head.copy(), self.state.copy())


@dataclass
class LpSolution:
    status: str
    objective: float = np.nan
    primal: np.ndarray = None
    duals: np.ndarray = None
    reduced_costs: np.ndarray = None
    basis: Basis = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == "optimal"


class SimplexEngine:
    """Reusable solver for one constraint matrix under changing variable bounds.

    Branch-and-bound keeps one engine per tree and re-solves with tightened
    bounds, warm-starting from a parent basis.
    """

    def __init__(self, lp, backend=None):
        lp.check()
        self.lp = lp
        self.kernel = get_kernel(backend)
        m, n = lp.shape
        self.m, self.n = m, n
        self.AT = np.ascontiguousarray(lp.A.T.toarray(), dtype=float)
        self.A = np.ascontiguousarray(self.AT.T)
        self.c = np.concatenate([lp.c, np.zeros(m)])
        rlo, rhi = lp.row_bounds()
        self.lo = np.concatenate([lp.lb, rlo])
        self.up = np.concatenate([lp.ub, rhi])
        self.max_iter = 50 * (m + n) + 1000
        self.bland_after = 2 * (m + n)
        # working state of the last solve
        self.x = None
        self.head = None
        self.state = None
        self.Binv = None

    # ----------------------------------------------------------------- basis
    def _slack_basis(self):
        n, m = self.n, self.m
        head = np.arange(n, n + m, dtype=np.intp)
        state = np.empty(n + m, dtype=np.intc)
        state[n:] = BASIC
        lo, up, c = self.lo[:n], self.up[:n], self.c[:n]
        flo, fup = np.isfinite(lo), np.isfinite(up)
        st = np.where(flo & fup, np.where(c >= 0, AT_LO, AT_UP),
                      np.where(flo, AT_LO, np.where(fup, AT_UP, FREE)))
        st = np.where(flo & fup & (lo == up), FIXED, st)
        state[:n] = st
        return head, state

    def _place_nonbasic(self, lo, up):
        """Set nonbasic values from their status, repairing stale statuses."""
        x = np.zeros(self.n + self.m)
        st = self.state
        flo, fup = np.isfinite(lo), np.isfinite(up)
        nb = st != BASIC
        fixed = nb & flo & fup & (lo == up)
        st[fixed] = FIXED
        st[nb & ~fixed & (st == FIXED)] = AT_LO
        bad_lo = nb & (st == AT_LO) & ~flo
        st[bad_lo] = np.where(fup[bad_lo], AT_UP, FREE)
        bad_up = nb & (st == AT_UP) & ~fup
        st[bad_up] = np.where(flo[bad_up], AT_LO, FREE)
        bad_free = nb & (st == FREE) & (flo | fup)
        st[bad_free] = np.where(flo[bad_free], AT_LO, AT_UP)
        x = np.where((st == AT_LO) | (st == FIXED), lo, 0.0)
        x = np.where(st == AT_UP, up, x)
        x[~nb] = 0.0
        x = np.where(np.isfinite(x), x, 0.0)
        return x

    def factorize(self):
        """Explicit basis inverse, exploiting the unit logical columns.

        Only the square block of basic structurals on the rows whose logical
        is nonbasic needs an LU-based inverse.
        """
        n, m = self.n, self.m
        head = self.head
        is_struct = head < n
        spos = np.flatnonzero(is_struct)
        lpos = np.flatnonzero(~is_struct)
        S = head[spos]
        lrows = head[lpos] - n
        tight = np.ones(m, dtype=bool)
        tight[lrows] = False
        trows = np.flatnonzero(tight)
        if trows.size != S.size:
            raise np.linalg.LinAlgError("basis header inconsistent")
        Binv = np.zeros((m, m))
        if S.size:
            block = self.A[np.ix_(trows, S)]
            K = np.linalg.inv(block)
            if not np.all(np.isfinite(K)) or np.abs(K).max() > 1e12:
                raise np.linalg.LinAlgError("ill-conditioned basis")
            Binv[np.ix_(spos, trows)] = K
            if lpos.size:
                Binv[np.ix_(lpos, trows)] = self.A[np.ix_(lrows, S)] @ K
        Binv[lpos, lrows] = -1.0
        self.Binv = Binv

    def _basic_values(self):
        n = self.n
        x = self.x
        nb = self.state != BASIC
        xs = np.where(nb[:n], x[:n], 0.0)
        xl = np.where(nb[n:], x[n:], 0.0)
        w = -(self.A @ xs) + xl
        x[self.head] = self.Binv @ w

    # --------------------------------------------------------------- checks
    def _duals(self):
        return self.Binv.T @ self.c[self.head]

    def _reduced_costs(self, y):
        n = self.n
        d = np.empty(n + self.m)
        d[:n] = self.c[:n] - self.AT @ y
        d[n:] = y
        d[self.head] = 0.0
        return d

    def _dual_violation(self, d):
        st = self.state
        viol = np.zeros_like(d)
        viol = np.where(st == AT_LO, np.maximum(-d, 0.0), viol)
        viol = np.where(st == AT_UP, np.maximum(d, 0.0), viol)
        viol = np.where(st == FREE, np.abs(d), viol)
        return viol

    def _primal_violation(self, lo, up):
        xb = self.x[self.head]
        return np.maximum(np.maximum(lo[self.head] - xb, xb - up[self.head]), 0.0)

    def _make_dual_feasible(self, lo, up):
        """Flip boxed nonbasics to the bound matching their reduced cost sign."""
        d = self._reduced_costs(self._duals())
        st = self.state
        boxed = np.isfinite(lo) & np.isfinite(up)
        to_up = (st == AT_LO) & boxed & (d < -_TOL_D)
        to_lo = (st == AT_UP) & boxed & (d > _TOL_D)
        if to_up.any() or to_lo.any():
            st[to_up] = AT_UP
            st[to_lo] = AT_LO
            self.x[to_up] = up[to_up]
            self.x[to_lo] = lo[to_lo]
            self._basic_values()
        return self._dual_violation(d).max(initial=0.0) <= _TOL_D

    def _infeasibility_certified(self, lo, up):
        """Check a dual-simplex infeasibility claim with one basis row.

        For the most violated basic variable, bound its attainable range over
        the box of the nonbasic variables; if the bound range excludes the
        variable's own bounds, the LP is infeasible.
        """
        viol = self._primal_violation(lo, up)
        r = int(np.argmax(viol))
        if viol[r] <= FEAS_TOL:
            return False
        n = self.n
        rho = self.Binv[r]
        arow = np.empty(n + self.m)
        arow[:n] = self.AT @ rho
        arow[n:] = -rho
        nb = self.state != BASIC
        # x_r = const - sum_j arow_j x_j over nonbasic j
        const = self.x[self.head[r]] + np.sum(arow[nb] * self.x[nb])
        coef = -arow[nb]
        lo_n, up_n = lo[nb], up[nb]
        with np.errstate(invalid="ignore"):
            hi_terms = np.where(coef > 0, coef * up_n, np.where(coef < 0, coef * lo_n, 0.0))
            lo_terms = np.where(coef > 0, coef * lo_n, np.where(coef < 0, coef * up_n, 0.0))
        hi_val = const + hi_terms.sum()
        lo_val = const + lo_terms.sum()
        j = self.head[r]
        scale = 1.0 + np.abs(const)
        if np.isfinite(hi_val) and hi_val < lo[j] - FEAS_TOL * scale:
            return True
        if np.isfinite(lo_val) and lo_val > up[j] + FEAS_TOL * scale:
            return True
        return False

    # ---------------------------------------------------------------- solve
    def solve(self, lb=None, ub=None, basis=None):
        """Solve with optional replacement structural bounds and warm basis."""
        n, m = self.n, self.m
        lo = self.lo.copy()
        up = self.up.copy()
        if lb is not None:
            lo[:n] = lb
        if ub is not None:
            up[:n] = ub
        if np.any(lo > up):
            return LpSolution("infeasible")

        if basis is not None:
            self.head = np.array(basis.head, dtype=np.intp)
            self.state = np.array(basis.state, dtype=np.intc)
            try:
                self.factorize()
            except np.linalg.LinAlgError:
                basis = None
        if basis is None:
            self.head, self.state = self._slack_basis()
            self.Binv = -np.eye(m)
        self.x = self._place_nonbasic(lo, up)
        self._basic_values()

        mode = "dual" if self._make_dual_feasible(lo, up) else "primal"
        total = 0
        numeric = 0
        for _ in range(200):
            kern = self.kernel.dual if mode == "dual" else self.kernel.primal
            status, its = kern(self.AT, self.c, lo, up, self.x, self.head, self.state,
                               self.Binv, self.max_iter - total, REFACTOR_EVERY,
                               self.bland_after, _TOL_P, _TOL_D, _TOL_PIV)
            total += its
            if status == _ITER_LIMIT or total >= self.max_iter:
                raise SolverError(f"simplex iteration limit after {total} pivots")
            try:
                self.factorize()
            except np.linalg.LinAlgError:
                numeric += 1
                if numeric > 3:
                    raise SolverError("repeated singular basis")
                self.head, self.state = self._slack_basis()
                self.Binv = -np.eye(m)
                self.x = self._place_nonbasic(lo, up)
                mode = "primal"
                self._basic_values()
                continue
            self._basic_values()
            if status == _REFACTOR:
                continue
            if status == _NUMERIC:
                numeric += 1
                if numeric > 3:
                    raise SolverError("numerical breakdown in simplex pivoting")
                mode = "dual" if self._make_dual_feasible(lo, up) else "primal"
                continue
            pviol = self._primal_violation(lo, up).max(initial=0.0)
            if status == _INFEASIBLE:
                if mode == "primal" or self._infeasibility_certified(lo, up):
                    if mode == "primal" and pviol <= _TOL_P:
                        continue
                    return LpSolution("infeasible", iterations=total)
                mode = "primal"
                continue
            if status == _UNBOUNDED:
                if pviol > _TOL_P:
                    continue
                return LpSolution("unbounded", iterations=total)
            # optimal according to the kernel: verify on the fresh factorization
            y = self._duals()
            d = self._reduced_costs(y)
            dviol = self._dual_violation(d).max(initial=0.0)
            if pviol > _TOL_P * 10:
                mode = "dual" if dviol <= _TOL_D else "primal"
                continue
            if dviol > _TOL_D * 10:
                mode = "primal"
                continue
            xs = self.x[:n].copy()
            return LpSolution(
                "optimal",
                objective=float(self.lp.c @ xs + self.lp.obj_offset),
                primal=xs,
                duals=y,
                reduced_costs=d,
                basis=Basis(self.head.copy(), self.state.copy()),
                iterations=total,
            )
        raise SolverError("simplex failed to converge after repeated refactorizations")


def solve_lp(lp, basis=None, backend=None):
    """Solve ``lp`` by bounded revised simplex; returns an :class:`LpSolution`."""
    return SimplexEngine(lp, backend=backend).solve(basis=basis)


def extract_copy_duals(sol, lp):
    """Duals of the rows tagged ``copy``, in row order (= state component order)."""
    if sol is None or not sol.optimal:
        raise ContractError("copy duals requested from a non-optimal LP solution")
    return sol.duals[lp.row_tags == "copy"].copy()
