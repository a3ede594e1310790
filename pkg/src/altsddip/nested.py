"""Nested Benders over the full scenario tree with deterministic bounds."""

import logging
import math
import time
from dataclasses import dataclass, field

from .cuts import LagrangianConfig, empty_pools
from .errors import ConfigError
from .mip import MipLimits
from .model import all_scenario_paths, require_valid
from .sddip import (
    BackwardStats,
    IterationRecord,
    SddipConfig,
    backward_pass_alternating,
    backward_pass_default,
    forward_pass,
    lower_bound,
)

log = logging.getLogger(__name__)


@dataclass
class NestedConfig:
    cut_family: str = "I"
    backward_mode: str = "alternating"
    gap_threshold: float = 0.01
    time_limit: float = None
    iteration_limit: int = 500
    max_paths: int = 5000
    eps: float = 1e-6
    lag_cfg: LagrangianConfig = field(default_factory=LagrangianConfig)
    mip_limits: MipLimits = field(default_factory=lambda: MipLimits(max_nodes=20_000))

    def check(self):
        if not 0.0 < self.gap_threshold < 1.0:
            raise ConfigError("gap_threshold must lie in (0, 1)")
        if self.cut_family not in ("I", "L"):
            raise ConfigError(f"cut family must be 'I' or 'L', got {self.cut_family!r}")
        if self.backward_mode not in ("default", "alternating"):
            raise ConfigError(f"unknown backward mode {self.backward_mode!r}")

    def as_sddip(self):
        return SddipConfig(cut_family=self.cut_family, backward_mode=self.backward_mode,
                           eps=self.eps, lag_cfg=self.lag_cfg, mip_limits=self.mip_limits)


@dataclass
class NestedResult:
    status: str  # converged | iteration-limit | time-limit
    LB: float
    UB: float
    pools: list
    records: list
    iterations: int
    seconds: float
    stats: BackwardStats

    @property
    def gap(self):
        return relative_gap(self.LB, self.UB)

    @property
    def tight_prop(self):
        total = self.stats.benders + self.stats.tight
        return self.stats.tight / total if total else float("nan")


def relative_gap(LB, UB):
    if UB == math.inf:
        return math.inf
    return (UB - LB) / max(abs(UB), 1e-9)


def run_nested_benders(model, config=None):
    """Forward over every tree path (exact expected policy cost), backward over every node."""
    config = config or NestedConfig()
    config.check()
    require_valid(model)
    if model.n_scenarios() > config.max_paths:
        raise ConfigError(f"tree has {model.n_scenarios()} paths, above the cap "
                          f"{config.max_paths}")
    weighted = all_scenario_paths(model)
    paths = [p for p, _ in weighted]
    probs = [w for _, w in weighted]
    scfg = config.as_sddip()
    t0 = time.monotonic()
    deadline = t0 + config.time_limit if config.time_limit is not None else None
    pools = empty_pools(model)
    total = BackwardStats()
    LB, UB = -math.inf, math.inf
    records = []
    status = "iteration-limit"
    for i in range(1, config.iteration_limit + 1):
        fwd = forward_pass(model, pools, paths, config.mip_limits)
        policy_cost = math.fsum(p * u for p, u in zip(probs, fwd.costs))
        UB = min(UB, policy_cost)
        if relative_gap(LB, UB) <= config.gap_threshold:
            status = "converged"
            break
        if config.backward_mode == "alternating":
            stats = backward_pass_alternating(model, pools, fwd, config.cut_family, config.eps,
                                              i, scfg, deadline)
        else:
            stats = backward_pass_default(model, pools, fwd, config.cut_family, i, scfg,
                                          deadline)
        total.merge(stats)
        raw = lower_bound(model, pools, config.mip_limits)
        LB = max(LB, raw)
        records.append(IterationRecord(i, LB, raw, UB, policy_cost, 0.0, stats.benders,
                                       stats.tight, stats.exact_evals,
                                       time.monotonic() - t0, fwd.costs))
        log.info("nested iter %d LB %.6g UB %.6g", i, LB, UB)
        if relative_gap(LB, UB) <= config.gap_threshold:
            status = "converged"
            break
        if deadline is not None and time.monotonic() > deadline:
            status = "time-limit"
            break
    return NestedResult(status, LB, UB, pools, records, len(records),
                        time.monotonic() - t0, total)
