"""Cut families for the expected cost-to-go and the per-stage cut pool.

All generators take the stage ``t`` whose subproblems are evaluated and
return a :class:`Cut` on ``theta_{t-1}``, i.e. an affine minorant
``v + pi . x`` of ``sum_j q_j Q_t(x, omega_j)`` in the state ``x`` leaving
stage ``t - 1``.  ``pools[s]`` is the pool of stage ``s`` (``None`` at the
last stage).
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, RecourseError, SolverError
from .mip import MipLimits, solve_lp_relaxation, solve_milp
from .model import instantiate_subproblem, relaxed_subproblem
from .simplex import extract_copy_duals

log = logging.getLogger(__name__)

KINDS = ("benders", "strengthened", "integer-L", "lagrangian")
DUP_TOL = 1e-9


@dataclass
class Cut:
    """``theta_stage >= v + pi . x``."""

    stage: int
    v: float
    pi: np.ndarray
    kind: str
    iteration: int = 0
    tight: bool = False
    info: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.v = float(self.v)
        self.pi = np.asarray(self.pi, dtype=float).reshape(-1)
        if not (math.isfinite(self.v) and np.all(np.isfinite(self.pi))):
            raise ContractError("cut coefficients must be finite")

    def value(self, x):
        return self.v + float(self.pi @ np.asarray(x, dtype=float))


@dataclass
class CutPool:
    """Cuts on ``theta_stage`` plus its floor ``L``."""

    stage: int
    L: float
    cuts: list = field(default_factory=list)

    def __post_init__(self):
        self._V = None
        self._G = None

    def _arrays(self):
        if self._V is None or self._V.size != len(self.cuts):
            self._V = np.array([c.v for c in self.cuts])
            self._G = (np.stack([c.pi for c in self.cuts]) if self.cuts
                       else np.zeros((0, 0)))
        return self._V, self._G

    def contains(self, cut, tol=DUP_TOL):
        if not self.cuts:
            return False
        V, G = self._arrays()
        same = (np.abs(V - cut.v) <= tol) & np.all(np.abs(G - cut.pi) <= tol, axis=1)
        return bool(same.any())

    def add(self, cut):
        """Append ``cut`` unless it duplicates one already present; returns True if added."""
        if cut.stage != self.stage:
            raise ContractError(f"cut for stage {cut.stage} added to pool {self.stage}")
        if self.contains(cut):
            return False
        self.cuts.append(cut)
        return True

    def evaluate(self, x):
        if not self.cuts:
            return self.L
        V, G = self._arrays()
        return max(self.L, float(np.max(V + G @ np.asarray(x, dtype=float))))

    def counts(self):
        out = dict.fromkeys(KINDS, 0)
        for c in self.cuts:
            out[c.kind] += 1
        return out


def evaluate_pool(pool, x):
    return pool.evaluate(x)


def empty_pools(model):
    """One empty pool per non-leaf stage, floors from the stage templates."""
    return [CutPool(t, model.templates[t].L) if t < model.T - 1 else None
            for t in range(model.T)]


def aggregate_cuts(parts, stage=-1, kind="benders", iteration=0):
    """Probability-weighted sum of per-realization ``(q, v, pi)`` parts."""
    qs = [float(q) for q, _, _ in parts]
    if abs(math.fsum(qs) - 1.0) > 1e-9:
        raise ContractError(f"cut weights sum to {math.fsum(qs)}, not 1")
    v = math.fsum(q * v for q, v, _ in parts)
    pi = np.zeros_like(np.asarray(parts[0][2], dtype=float))
    for q, _, p in parts:
        pi = pi + q * np.asarray(p, dtype=float)
    return Cut(stage, v, pi, kind, iteration)


def _weights(model, t, probabilities):
    return model.probs(t) if probabilities is None else np.asarray(probabilities, dtype=float)


def _pool(pools, t):
    return pools[t] if pools is not None and t < len(pools) else None


# ------------------------------------------------------------ evaluations
def solve_relaxations(model, t, x_hat, pools):
    """LP values and copy duals of every realization at ``x_hat``."""
    out = []
    for j in range(model.n_real(t)):
        inst = instantiate_subproblem(model, t, j, x_hat, _pool(pools, t))
        sol = solve_lp_relaxation(inst)
        if not sol.optimal:
            raise RecourseError(f"stage {t} realization {j}: LP relaxation {sol.status}")
        out.append((sol.objective, extract_copy_duals(sol, inst.lp)))
    return out


def exact_value(model, t, j, x_hat, pools, limits=None):
    """``Q_hat`` of one realization; a valid lower bound if the node budget runs out."""
    inst = instantiate_subproblem(model, t, j, x_hat, _pool(pools, t))
    sol = solve_milp(inst, limits)
    if sol.status == "infeasible":
        raise RecourseError(f"stage {t} realization {j}: subproblem infeasible")
    if sol.status != "optimal":
        log.warning("stage %d realization %d: MILP stopped at a limit, using its bound", t, j)
        return sol.bound, False
    return sol.objective, True


def solve_exact(model, t, x_hat, pools, limits=None):
    return [exact_value(model, t, j, x_hat, pools, limits) for j in range(model.n_real(t))]


def evaluate_lagrangian(model, t, j, pi, pools, limits=None):
    """``min f_t + theta - pi . z`` over the stage feasible set with ``z`` in the state domain.

    Returns ``(value, z_star)``; the value is a lower bound when the MILP hits
    its limits.
    """
    inst = relaxed_subproblem(model, t, j, pi, _pool(pools, t))
    sol = solve_milp(inst, limits)
    if sol.status == "infeasible":
        raise RecourseError(f"stage {t} realization {j}: Lagrangian subproblem infeasible")
    if sol.status != "optimal":
        if sol.primal is None:
            raise SolverError("Lagrangian subproblem produced no solution within limits")
        return sol.bound, sol.primal[inst.layout["z"]].copy()
    return sol.objective, sol.primal[inst.layout["z"]].copy()


# ------------------------------------------------------------ cut families
def benders_cut(model, t, x_hat, pools, probabilities=None, relaxations=None, iteration=0):
    """Cut from LP-relaxation copy duals."""
    x_hat = np.asarray(x_hat, dtype=float)
    q = _weights(model, t, probabilities)
    rel = relaxations if relaxations is not None else solve_relaxations(model, t, x_hat, pools)
    parts = [(q[j], val - float(pi @ x_hat), pi) for j, (val, pi) in enumerate(rel)]
    cut = aggregate_cuts(parts, t - 1, "benders", iteration)
    cut.info["expected_lp"] = math.fsum(q[j] * rel[j][0] for j in range(len(rel)))
    return cut


def strengthened_benders_cut(model, t, x_hat, pools, probabilities=None, relaxations=None,
                             iteration=0, limits=None):
    """LP duals as multipliers with the exact Lagrangian intercept."""
    x_hat = np.asarray(x_hat, dtype=float)
    q = _weights(model, t, probabilities)
    rel = relaxations if relaxations is not None else solve_relaxations(model, t, x_hat, pools)
    parts = []
    for j, (_, pi) in enumerate(rel):
        val, _ = evaluate_lagrangian(model, t, j, pi, pools, limits)
        parts.append((q[j], val, pi))
    return aggregate_cuts(parts, t - 1, "strengthened", iteration)


def _check_binary(x_hat):
    x_hat = np.asarray(x_hat, dtype=float)
    if not np.all((x_hat == 0.0) | (x_hat == 1.0)):
        raise ContractError("incumbent state must be binary for this cut")
    return x_hat


def intL_multipliers(Q_hat, L, x_hat):
    """Multipliers ``Q_hat - L`` on active bits and ``L - Q_hat`` elsewhere."""
    x_hat = _check_binary(x_hat)
    gap = float(Q_hat) - float(L)
    return np.where(x_hat == 1.0, gap, -gap)


def intL_part(Q_hat, L, x_hat):
    """``(v, pi)`` of the single-realization integer L-shaped cut."""
    x_hat = _check_binary(x_hat)
    gap = float(Q_hat) - float(L)
    S = int(np.count_nonzero(x_hat))
    return float(Q_hat) - gap * S, np.where(x_hat == 1.0, gap, -gap)


def lagrangian_part(Q_hat, pi, x_hat):
    """``(v, pi)`` from multipliers ``pi`` when ``L(pi) = Q_hat - pi . x_hat``.

    Uses a correctly rounded sum over the active bits so the result is a
    deterministic function of its inputs.
    """
    x_hat = _check_binary(x_hat)
    pi = np.asarray(pi, dtype=float)
    return float(Q_hat) - math.fsum(pi[x_hat == 1.0]), pi


def integer_lshaped_cut(model, t, x_hat, pools, probabilities=None, exact=None, iteration=0,
                        limits=None):
    """Exact-evaluation cut for binary state, tight at ``x_hat``.

    The floor is the pool floor of ``theta_{t-1}``, a lower bound on every
    realization's stage-``t`` value.
    """
    x_hat = _check_binary(x_hat)
    q = _weights(model, t, probabilities)
    L = pools[t - 1].L
    ex = exact if exact is not None else solve_exact(model, t, x_hat, pools, limits)
    parts = []
    for j, (qhat, _) in enumerate(ex):
        if qhat < L:
            raise ContractError(f"stage {t}: value {qhat} below the floor {L}")
        v, pi = intL_part(qhat, L, x_hat)
        parts.append((q[j], v, pi))
    cut = aggregate_cuts(parts, t - 1, "integer-L", iteration)
    cut.tight = all(ok for _, ok in ex)
    cut.info["expected_exact"] = math.fsum(q[j] * ex[j][0] for j in range(len(ex)))
    return cut


@dataclass
class LagrangianConfig:
    max_iters: int = 100
    tol: float = 1e-4
    eta: float = 1.0
    patience: int = 5


def lagrangian_ascent(model, t, j, x_hat, pi0, Q_hat, pools, cfg=None, limits=None):
    """Polyak subgradient ascent on ``g(pi) = L(pi) + pi . x_hat`` with target ``Q_hat``.

    Returns ``(best_value, best_pi, converged, iterations)`` where the value
    is ``L(best_pi)``.
    """
    cfg = cfg or LagrangianConfig()
    x_hat = np.asarray(x_hat, dtype=float)
    pi = np.asarray(pi0, dtype=float).copy()
    target_gap = cfg.tol * (1.0 + abs(Q_hat))
    val, z = evaluate_lagrangian(model, t, j, pi, pools, limits)
    best_g, best_val, best_pi = val + float(pi @ x_hat), val, pi.copy()
    eta, stale, it = cfg.eta, 0, 0
    while Q_hat - best_g > target_gap and it < cfg.max_iters:
        s = x_hat - z
        ss = float(s @ s)
        if ss == 0.0:
            break  # z* = x_hat: g is already the value at the incumbent
        g = val + float(pi @ x_hat)
        pi = pi + eta * (Q_hat - g) / ss * s
        val, z = evaluate_lagrangian(model, t, j, pi, pools, limits)
        it += 1
        g_new = val + float(pi @ x_hat)
        if g_new > best_g + 1e-12 * (1.0 + abs(best_g)):
            best_g, best_val, best_pi = g_new, val, pi.copy()
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                eta *= 0.5
                stale = 0
    return best_val, best_pi, Q_hat - best_g <= target_gap, it


def lagrangian_cut(model, t, x_hat, pools, probabilities=None, lag_cfg=None, relaxations=None,
                   exact=None, iteration=0, limits=None):
    """Lagrangian cut from subgradient ascent started at the LP duals."""
    x_hat = np.asarray(x_hat, dtype=float)
    q = _weights(model, t, probabilities)
    rel = relaxations if relaxations is not None else solve_relaxations(model, t, x_hat, pools)
    ex = exact if exact is not None else solve_exact(model, t, x_hat, pools, limits)
    parts, tight, iters = [], True, 0
    for j in range(model.n_real(t)):
        qhat, ok = ex[j]
        val, pi, conv, k = lagrangian_ascent(model, t, j, x_hat, rel[j][1], qhat, pools,
                                             lag_cfg, limits)
        parts.append((q[j], val, pi))
        tight = tight and conv and ok
        iters += k
    cut = aggregate_cuts(parts, t - 1, "lagrangian", iteration)
    cut.tight = tight
    cut.info["ascent_iterations"] = iters
    cut.info["expected_exact"] = math.fsum(q[j] * ex[j][0] for j in range(len(ex)))
    if not tight:
        log.debug("stage %d: Lagrangian ascent stopped before closing the gap", t)
    return cut


def make_tight_cut(family, model, t, x_hat, pools, probabilities=None, exact=None,
                   relaxations=None, iteration=0, lag_cfg=None, limits=None):
    """Dispatch to the integer L-shaped or Lagrangian generator."""
    if family in ("I", "integer-L"):
        return integer_lshaped_cut(model, t, x_hat, pools, probabilities, exact, iteration,
                                   limits)
    if family in ("L", "lagrangian"):
        return lagrangian_cut(model, t, x_hat, pools, probabilities, lag_cfg, relaxations,
                              exact, iteration, limits)
    raise ContractError(f"unknown cut family {family!r}")
