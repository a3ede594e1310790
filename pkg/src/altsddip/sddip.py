"""SDDiP driver: sampling, forward pass, statistical bounds and backward cut generation."""

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .cuts import (
    LagrangianConfig,
    benders_cut,
    empty_pools,
    make_tight_cut,
    solve_exact,
    solve_relaxations,
)
from .errors import ConfigError, RecourseError, SolverError
from .mip import MipLimits, solve_milp
from .model import (
    all_scenario_paths,
    instantiate_subproblem,
    require_valid,
    sample_scenario_paths,
)

log = logging.getLogger(__name__)

_STD = NormalDist()


@dataclass
class SddipConfig:
    M: int = 2
    alpha: float = 0.10
    gamma: float = 0.10
    delta: float = 0.01
    cut_family: str = "I"  # "I" integer L-shaped, "L" Lagrangian
    backward_mode: str = "alternating"
    seed: int = 0
    iteration_limit: int = 1000
    time_limit: float = None
    lag_cfg: LagrangianConfig = field(default_factory=LagrangianConfig)
    eval_fraction: float = 0.05
    eps: float = 1e-6
    mip_limits: MipLimits = field(default_factory=lambda: MipLimits(max_nodes=20_000))

    def check(self):
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        for name in ("alpha", "gamma"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")
        if self.cut_family not in ("I", "L"):
            raise ConfigError(f"cut family must be 'I' or 'L', got {self.cut_family!r}")
        if self.backward_mode not in ("default", "alternating"):
            raise ConfigError(f"unknown backward mode {self.backward_mode!r}")
        if not 0.0 < self.eval_fraction <= 1.0:
            raise ConfigError("eval_fraction must lie in (0, 1]")
        if self.iteration_limit < 1:
            raise ConfigError("iteration_limit must be positive")


@dataclass
class IterationRecord:
    i: int
    LB: float
    LB_raw: float
    UB: float
    mu: float
    sigma: float
    cuts_benders: int
    cuts_tight: int
    exact_evals: int
    elapsed: float
    costs: np.ndarray = field(repr=False, default=None)
    stage_counts: list = field(repr=False, default=None)


@dataclass
class ForwardResult:
    states: list  # states[k][t] = x_t on path k
    thetas: list  # thetas[k][t] = pool value at x_t (nan at the last stage)
    costs: np.ndarray


@dataclass
class BackwardStats:
    benders: int = 0
    tight: int = 0
    duplicates: int = 0
    exact_evals: int = 0
    lp_evals: int = 0
    benders_branch: int = 0
    tight_branch: int = 0

    def merge(self, other):
        for k in self.__dataclass_fields__:
            setattr(self, k, getattr(self, k) + getattr(other, k))


@dataclass
class SddipResult:
    status: str  # converged | iteration-limit | time-limit
    pools: list
    records: list
    LB: float
    UB: float
    iterations: int
    seconds: float
    stats: BackwardStats
    gap: "GapEstimate" = None

    @property
    def tight_prop(self):
        total = self.stats.benders + self.stats.tight
        return self.stats.tight / total if total else float("nan")


# ------------------------------------------------------------------ forward
def _solve_stage(model, t, j, x_prev, pools, limits):
    inst = instantiate_subproblem(model, t, j, x_prev, pools[t])
    sol = solve_milp(inst, limits)
    if sol.status == "infeasible":
        raise RecourseError(f"stage {t} realization {j}: forward subproblem infeasible")
    if sol.primal is None:
        raise SolverError(f"stage {t} realization {j}: no feasible point within the node budget")
    lay = inst.layout
    x = sol.primal[lay["x"]]
    y = sol.primal[lay["y"]]
    return x, model.stage_cost(t, j, x, y)


def forward_pass(model, pools, paths, limits=None):
    """Simulate the current policy along ``paths``.

    ``u^k`` sums the true stage costs (without ``theta``).  Solves are
    memoized on (stage, realization, incoming state), so paths sharing a
    prefix share work.
    """
    memo = {}
    states, thetas, costs = [], [], []
    for path in paths:
        x_prev = model.x0
        xs, ths, total = [], [], 0.0
        for t, j in enumerate(path.indices):
            key = (t, j, x_prev.tobytes())
            if key not in memo:
                memo[key] = _solve_stage(model, t, j, x_prev, pools, limits)
            x, cost = memo[key]
            xs.append(x)
            ths.append(pools[t].evaluate(x) if pools[t] is not None else math.nan)
            total += cost
            x_prev = x
        states.append(xs)
        thetas.append(ths)
        costs.append(total)
    return ForwardResult(states, thetas, np.array(costs))


# ------------------------------------------------------------- statistics
def sample_stats(costs):
    u = np.asarray(costs, dtype=float)
    if u.size < 2:
        raise ConfigError("at least two forward costs are needed")
    return float(u.mean()), float(u.std(ddof=1))


def statistical_upper_bound(costs, alpha):
    """``mean + z_{alpha/2} * std / sqrt(M)`` with ``z_{alpha/2}`` the upper quantile."""
    mu, sigma = sample_stats(costs)
    z = _STD.inv_cdf(1.0 - alpha / 2.0)
    return mu + z * sigma / math.sqrt(len(costs))


@dataclass
class StopDecision:
    stop: bool
    reason: str
    upper_limit: float
    threshold: float
    power_ok: bool


def stopping_test(LB, costs, config):
    """Stop when the one-sided upper confidence limit falls within ``delta`` of LB.

    The power requirement on M is only reported.
    """
    mu, sigma = sample_stats(costs)
    M = len(costs)
    z_a = _STD.inv_cdf(1.0 - config.alpha)
    z_g = _STD.inv_cdf(1.0 - config.gamma)
    scale = max(abs(LB), 1e-9)
    upper = mu + z_a * sigma / math.sqrt(M)
    threshold = LB + config.delta * scale
    need = ((z_a + z_g) * sigma / (config.delta * scale)) ** 2 if config.delta > 0 else math.inf
    power_ok = M >= need
    if upper <= threshold:
        return StopDecision(True, "converged", upper, threshold, power_ok)
    return StopDecision(False, "continue", upper, threshold, power_ok)


# ----------------------------------------------------------------- backward
def _unique_states(states, t):
    """Incoming states of stage ``t`` with duplicates removed, in path order."""
    seen, out = set(), []
    for xs in states:
        key = xs[t - 1].tobytes()
        if key not in seen:
            seen.add(key)
            out.append(xs[t - 1])
    return out


def _add(pools, cut, stats, kind):
    if pools[cut.stage].add(cut):
        setattr(stats, kind, getattr(stats, kind) + 1)
        return True
    stats.duplicates += 1
    return False


def backward_pass_default(model, pools, fwd, cut_family, iteration=0, config=None,
                          deadline=None):
    """One tight cut of ``cut_family`` per stage and sampled state."""
    config = config or SddipConfig(cut_family=cut_family)
    stats = BackwardStats()
    for t in range(model.T - 1, 0, -1):
        for x_hat in _unique_states(fwd.states, t):
            if deadline is not None and time.monotonic() > deadline:
                return stats
            rel = None
            if cut_family == "L":
                rel = solve_relaxations(model, t, x_hat, pools)
                stats.lp_evals += model.n_real(t)
            ex = solve_exact(model, t, x_hat, pools, config.mip_limits)
            stats.exact_evals += model.n_real(t)
            cut = make_tight_cut(cut_family, model, t, x_hat, pools, exact=ex, relaxations=rel,
                                 iteration=iteration, lag_cfg=config.lag_cfg,
                                 limits=config.mip_limits)
            stats.tight_branch += 1
            _add(pools, cut, stats, "tight")
    return stats


def backward_pass_alternating(model, pools, fwd, cut_family, eps=1e-6, iteration=0,
                              config=None, deadline=None):
    """Benders cut when the LP bound already cuts off ``theta``, otherwise a tight cut.

    ``theta`` is the current pool value at the incumbent, so cuts added
    earlier in the same sweep are taken into account.
    """
    config = config or SddipConfig(cut_family=cut_family)
    stats = BackwardStats()
    for t in range(model.T - 1, 0, -1):
        q = model.probs(t)
        for x_hat in _unique_states(fwd.states, t):
            if deadline is not None and time.monotonic() > deadline:
                return stats
            rel = solve_relaxations(model, t, x_hat, pools)
            stats.lp_evals += model.n_real(t)
            expected_lp = math.fsum(q[j] * rel[j][0] for j in range(len(rel)))
            theta = pools[t - 1].evaluate(x_hat)
            if theta < expected_lp - eps * (1.0 + abs(expected_lp)):
                cut = benders_cut(model, t, x_hat, pools, relaxations=rel, iteration=iteration)
                stats.benders_branch += 1
                _add(pools, cut, stats, "benders")
            else:
                ex = solve_exact(model, t, x_hat, pools, config.mip_limits)
                stats.exact_evals += model.n_real(t)
                cut = make_tight_cut(cut_family, model, t, x_hat, pools, exact=ex,
                                     relaxations=rel, iteration=iteration,
                                     lag_cfg=config.lag_cfg, limits=config.mip_limits)
                stats.tight_branch += 1
                _add(pools, cut, stats, "tight")
    return stats


def lower_bound(model, pools, limits=None):
    """Objective of the first-stage problem with the current pool."""
    inst = instantiate_subproblem(model, 0, 0, model.x0, pools[0])
    sol = solve_milp(inst, limits)
    if sol.status == "infeasible":
        raise RecourseError("first-stage problem infeasible")
    # a truncated search still certifies its bound
    return sol.objective if sol.optimal else sol.bound


# --------------------------------------------------------------------- run
def run(model, config, pools=None, on_iteration=None):
    """SDDiP main loop.  Deterministic given ``config.seed`` (up to time limits)."""
    config.check()
    require_valid(model)
    t0 = time.monotonic()
    deadline = t0 + config.time_limit if config.time_limit is not None else None
    rng = np.random.default_rng(config.seed)
    pools = pools if pools is not None else empty_pools(model)
    records = []
    total = BackwardStats()
    LB = -math.inf
    UB = math.inf
    status = "iteration-limit"
    warned = False
    for i in range(1, config.iteration_limit + 1):
        paths = sample_scenario_paths(model, config.M, rng)
        fwd = forward_pass(model, pools, paths, config.mip_limits)
        UB = statistical_upper_bound(fwd.costs, config.alpha)
        if model.T > 1:
            if config.backward_mode == "alternating":
                stats = backward_pass_alternating(model, pools, fwd, config.cut_family,
                                                  config.eps, i, config, deadline)
            else:
                stats = backward_pass_default(model, pools, fwd, config.cut_family, i,
                                              config, deadline)
        else:
            stats = BackwardStats()
        total.merge(stats)
        raw = lower_bound(model, pools, config.mip_limits)
        LB = max(LB, raw)
        mu, sigma = sample_stats(fwd.costs)
        rec = IterationRecord(
            i, LB, raw, UB, mu, sigma, stats.benders, stats.tight, stats.exact_evals,
            time.monotonic() - t0, fwd.costs,
            [p.counts() if p is not None else None for p in pools],
        )
        records.append(rec)
        if on_iteration is not None:
            on_iteration(rec)
        log.info("iter %d LB %.6g UB %.6g benders %d tight %d", i, LB, UB,
                 stats.benders, stats.tight)
        decision = stopping_test(LB, fwd.costs, config)
        if not decision.power_ok and not warned:
            log.warning("M=%d is below the sample size needed for power 1-gamma", config.M)
            warned = True
        if decision.stop:
            status = "converged"
            break
        if deadline is not None and time.monotonic() > deadline:
            status = "time-limit"
            break
    result = SddipResult(status, pools, records, LB, UB, len(records),
                         time.monotonic() - t0, total)
    return result


# ------------------------------------------------------------ gap estimate
@dataclass
class GapEstimate:
    gap_pct: float
    mean: float
    right_end: float
    n_paths: int
    exhaustive: bool


def estimate_gap(model, pools, LB, config, rng=None, exhaustive_max=200, cap=10_000):
    """Gap between LB and an upper confidence limit of the policy's expected cost.

    Trees with at most ``exhaustive_max`` paths are evaluated exactly;
    otherwise ``ceil(eval_fraction * N)`` fresh paths are simulated.
    """
    N = min(model.n_scenarios(), cap)
    if model.n_scenarios() <= exhaustive_max:
        weighted = all_scenario_paths(model)
        fwd = forward_pass(model, pools, [p for p, _ in weighted], config.mip_limits)
        probs = np.array([w for _, w in weighted])
        mean = float(probs @ fwd.costs)
        right = mean
        n = len(weighted)
        exhaustive = True
    else:
        n = max(2, math.ceil(config.eval_fraction * N))
        if rng is None:
            rng = np.random.default_rng([config.seed, 1])
        paths = sample_scenario_paths(model, n, rng)
        fwd = forward_pass(model, pools, paths, config.mip_limits)
        mean, sigma = sample_stats(fwd.costs)
        right = mean + _STD.inv_cdf(1.0 - config.alpha / 2.0) * sigma / math.sqrt(n)
        exhaustive = False
    denom = right if abs(right) > 1e-9 else 1e-9
    return GapEstimate(100.0 * (right - LB) / denom, mean, right, n, exhaustive)


# --------------------------------------------------------------------- CSV
ITER_COLUMNS = ["i", "LB", "UB", "cuts_benders", "cuts_tight", "elapsed_s"]
SUMMARY_COLUMNS = ["status", "LB", "UB", "gap_pct", "tight_prop", "iterations", "total_s"]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_iterations_csv(records, path, timing=True):
    cols = ITER_COLUMNS if timing else ITER_COLUMNS[:-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in records:
            row = [r.i, r.LB, r.UB, r.cuts_benders, r.cuts_tight]
            if timing:
                row.append(round(r.elapsed, 3))
            w.writerow([_fmt(v) for v in row])


def write_summary_csv(summary, path, timing=True):
    cols = SUMMARY_COLUMNS if timing else SUMMARY_COLUMNS[:-1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerow([_fmt(summary.get(c, "")) for c in cols])


def summarize(result, gap=None):
    """Summary row for a finished SDDiP run."""
    g = gap or result.gap
    return {
        "status": result.status,
        "LB": result.LB,
        "UB": g.right_end if g is not None else result.UB,
        "gap_pct": g.gap_pct if g is not None else math.nan,
        "tight_prop": result.tight_prop,
        "iterations": result.iterations,
        "total_s": round(result.seconds, 3),
    }
