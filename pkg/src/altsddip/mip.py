"""Best-bound branch-and-bound for mixed-integer programs over the simplex engine."""

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, SolverError
from .simplex import AT_LO, AT_UP, LinearProgram, LpSolution, SimplexEngine, solve_lp

log = logging.getLogger(__name__)

INT_TOL = 1e-6
MIP_GAP = 1e-6


@dataclass
class MilpInstance:
    """A linear program plus per-variable integrality marks.

    ``layout`` optionally names variable blocks (slices) for callers.
    """

    lp: LinearProgram
    integer: np.ndarray = None
    layout: dict = None

    def __post_init__(self):
        n = self.lp.shape[1]
        if self.integer is None:
            self.integer = np.zeros(n, dtype=bool)
        self.integer = np.asarray(self.integer, dtype=bool).reshape(n)

    def check(self):
        self.lp.check()
        marked = self.integer
        if np.any(marked & ~(np.isfinite(self.lp.lb) & np.isfinite(self.lp.ub))):
            raise ContractError("integrality marks are only allowed on bounded variables")


@dataclass
class MipLimits:
    max_nodes: int = 200_000
    time_limit: float = None
    rel_gap: float = MIP_GAP
    int_tol: float = INT_TOL
    heuristic_every: int = 50


@dataclass
class MipSolution:
    status: str
    objective: float = math.inf
    primal: np.ndarray = None
    bound: float = -math.inf
    node_count: int = 0
    root: LpSolution = None
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == "optimal"

    @property
    def has_solution(self):
        return self.primal is not None


def solve_lp_relaxation(inst):
    """LP relaxation of ``inst`` (integrality marks dropped)."""
    return solve_lp(inst.lp)


def _most_fractional(x, integer, tol):
    idx = np.flatnonzero(integer)
    if idx.size == 0:
        return -1
    v = x[idx]
    frac = np.abs(v - np.round(v))
    k = int(np.argmax(frac))  # first maximum = lowest index among ties
    if frac[k] <= tol:
        return -1
    return int(idx[k])


class _Tree:
    """Search state shared by the helpers of :func:`solve_milp`."""

    def __init__(self, inst, limits):
        self.inst = inst
        self.limits = limits
        self.engine = SimplexEngine(inst.lp)
        self.integer = inst.integer
        self.best = math.inf
        self.best_x = None
        self.heap = []
        self.seq = 0
        self.nodes = 0
        self.lp_solves = 0

    def lp(self, lb, ub, basis):
        self.lp_solves += 1
        return self.engine.solve(lb, ub, basis)

    def cutoff(self):
        if self.best == math.inf:
            return math.inf
        return self.best - self.limits.rel_gap * max(1.0, abs(self.best))

    def offer(self, sol):
        """Record an LP solution that is integral on the marked variables."""
        if sol.objective < self.best:
            x = sol.primal.copy()
            x[self.integer] = np.round(x[self.integer]) + 0.0  # no negative zeros
            self.best = sol.objective
            self.best_x = x

    def round_and_fix(self, sol, lb, ub):
        """Rounding heuristic: fix integer variables at rounded values, solve the LP."""
        xi = np.round(sol.primal[self.integer])
        lb2 = lb.copy()
        ub2 = ub.copy()
        lo_i, up_i = lb[self.integer], ub[self.integer]
        xi = np.clip(xi, lo_i, up_i)
        lb2[self.integer] = xi
        ub2[self.integer] = xi
        trial = self.lp(lb2, ub2, sol.basis)
        if trial.optimal:
            self.offer(trial)

    def fix_by_reduced_cost(self, sol, lb, ub):
        """Tighten integer bounds that cannot improve on the incumbent."""
        if self.best == math.inf:
            return lb, ub
        n = lb.size
        d = sol.reduced_costs[:n]
        st = sol.basis.state[:n]
        room = self.cutoff() - sol.objective
        lb = lb.copy()
        ub = ub.copy()
        at_lo = self.integer & (st == AT_LO) & (d > 0)
        at_up = self.integer & (st == AT_UP) & (d < 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            span_lo = np.floor(room / d + 1e-9)
            span_up = np.floor(room / -d + 1e-9)
        ub[at_lo] = np.minimum(ub[at_lo], lb[at_lo] + span_lo[at_lo])
        lb[at_up] = np.maximum(lb[at_up], ub[at_up] - span_up[at_up])
        return lb, ub

    def push(self, sol, lb, ub):
        heapq.heappush(self.heap, (sol.objective, self.seq, lb, ub, sol))
        self.seq += 1


def solve_milp(inst, limits=None):
    """Solve ``inst`` by best-bound branch-and-bound.

    Branching is on the most fractional integer variable (lowest index on
    ties); both children are solved immediately by the dual simplex from the
    parent basis so the open list is ordered by exact child bounds.
    """
    limits = limits or MipLimits()
    inst.check()
    t0 = time.monotonic()
    tree = _Tree(inst, limits)
    lb0 = inst.lp.lb.copy()
    ub0 = inst.lp.ub.copy()
    # integral bounds on integer variables
    lb0[inst.integer] = np.ceil(lb0[inst.integer] - limits.int_tol)
    ub0[inst.integer] = np.floor(ub0[inst.integer] + limits.int_tol)
    if np.any(lb0 > ub0):
        return MipSolution("infeasible")

    root = tree.lp(lb0, ub0, None)
    if root.status == "infeasible":
        return MipSolution("infeasible", root=root)
    if root.status == "unbounded":
        raise SolverError("MILP relaxation is unbounded")

    if _most_fractional(root.primal, inst.integer, limits.int_tol) < 0:
        tree.offer(root)
    else:
        tree.round_and_fix(root, lb0, ub0)
        tree.push(root, lb0, ub0)

    hit_limit = False
    pops = 0
    while tree.heap:
        bound, _, lb, ub, sol = tree.heap[0]
        if bound >= tree.cutoff():
            break
        if tree.nodes >= limits.max_nodes or (
            limits.time_limit is not None and time.monotonic() - t0 > limits.time_limit
        ):
            hit_limit = True
            break
        heapq.heappop(tree.heap)
        pops += 1
        if limits.heuristic_every and pops % limits.heuristic_every == 0:
            tree.round_and_fix(sol, lb, ub)
        lb, ub = tree.fix_by_reduced_cost(sol, lb, ub)
        j = _most_fractional(sol.primal, inst.integer, limits.int_tol)
        v = sol.primal[j]
        children = []
        for side in (0, 1):
            clb, cub = lb.copy(), ub.copy()
            if side == 0:
                cub[j] = math.floor(v)
            else:
                clb[j] = math.ceil(v)
            if clb[j] > cub[j]:
                continue
            child = tree.lp(clb, cub, sol.basis)
            tree.nodes += 1
            if child.status == "unbounded":
                raise SolverError("MILP relaxation is unbounded")
            if not child.optimal or child.objective >= tree.cutoff():
                continue
            if _most_fractional(child.primal, inst.integer, limits.int_tol) < 0:
                tree.offer(child)
            else:
                children.append((child, clb, cub))
        for child, clb, cub in children:
            if child.objective < tree.cutoff():
                tree.push(child, clb, cub)

    open_bound = min((b for b, *_ in tree.heap), default=math.inf)
    bound = min(open_bound, tree.best)
    info = {"lp_solves": tree.lp_solves, "seconds": time.monotonic() - t0}
    if hit_limit:
        log.debug("branch-and-bound stopped at %d nodes, bound %.6g", tree.nodes, bound)
        return MipSolution("hit-limit", tree.best, tree.best_x, bound, tree.nodes, root, info)
    if tree.best_x is None:
        return MipSolution("infeasible", node_count=tree.nodes, root=root, info=info)
    return MipSolution("optimal", tree.best, tree.best_x, bound, tree.nodes, root, info)
