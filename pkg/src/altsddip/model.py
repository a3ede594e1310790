"""Multi-stage stochastic MIP under stage-wise independence.

A stage ``t`` owns a template

    min  c_x x + c_y y + const + theta
    s.t. B z + A x + C y  (sense)  b
         z = x_hat                         (copy rows)
         theta >= v_k + pi_k x             (cuts of the stage pool)

and a list of realizations that override objective coefficients and
right-hand sides.  Stage 1 has a single realization and its incoming state
is ``x0``.  Indices of realizations and stages are 0-based in code.
"""

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ContractError, ModelError, UnsupportedError
from .mip import MilpInstance
from .simplex import LinearProgram

STATE_KINDS = ("binary", "integer", "continuous")
LOCAL_KINDS = ("continuous", "integer", "binary")
OVERRIDE_TARGETS = ("c_x", "c_y", "b", "const")
PROB_TOL = 1e-12


@dataclass
class Triplets:
    """Sparse matrix as (row, col, value) lists."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        self.vals = np.asarray(self.vals, dtype=float).reshape(-1)

    @classmethod
    def empty(cls):
        return cls([], [], [])

    @classmethod
    def from_dense(cls, M):
        M = np.asarray(M, dtype=float)
        r, c = np.nonzero(M)
        return cls(r, c, M[r, c])

    def to_csr(self, shape):
        return sp.csr_array((self.vals, (self.rows, self.cols)), shape=shape)

    def __eq__(self, other):
        return (isinstance(other, Triplets) and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.vals, other.vals))


@dataclass
class StageTemplate:
    t: int
    state_kind: List[str]
    state_lo: np.ndarray
    state_hi: np.ndarray
    local_kind: List[str]
    local_lo: np.ndarray
    local_hi: np.ndarray
    c_x: np.ndarray
    c_y: np.ndarray
    B: Triplets
    A: Triplets
    C: Triplets
    b: np.ndarray
    sense: np.ndarray = None
    L: float = 0.0
    const: float = 0.0

    def __post_init__(self):
        self.state_kind = list(self.state_kind)
        self.local_kind = list(self.local_kind)
        for name in ("state_lo", "state_hi", "local_lo", "local_hi", "c_x", "c_y", "b"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if self.sense is None:
            self.sense = np.full(self.b.size, "G")
        self.sense = np.asarray(self.sense, dtype="<U1").reshape(-1)
        self.L = float(self.L)
        self.const = float(self.const)

    @property
    def h(self):
        return len(self.state_kind)

    @property
    def n_local(self):
        return len(self.local_kind)

    @property
    def n_rows(self):
        return self.b.size


@dataclass
class Realization:
    q: float
    overrides: list = field(default_factory=list)

    def __post_init__(self):
        self.q = float(self.q)
        self.overrides = [(str(tg), int(pos), float(v)) for tg, pos, v in self.overrides]


@dataclass(frozen=True)
class ScenarioPath:
    """One realization index per stage (stage 0 always 0)."""

    indices: tuple


@dataclass
class MsipModel:
    T: int
    templates: List[StageTemplate]
    realizations: List[List[Realization]]
    x0: np.ndarray
    name: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)

    def n_real(self, t):
        return len(self.realizations[t])

    def probs(self, t):
        return np.array([r.q for r in self.realizations[t]])

    def state_dim(self, t):
        """Dimension of the state leaving stage ``t``; ``t = -1`` is ``x0``."""
        return self.x0.size if t < 0 else self.templates[t].h

    def n_scenarios(self):
        return math.prod(self.n_real(t) for t in range(self.T))

    def stage_data(self, t, j):
        """``(c_x, c_y, b, const)`` of stage ``t`` under realization ``j``."""
        key = ("data", t, j)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        tpl = self.templates[t]
        data = {"c_x": tpl.c_x.copy(), "c_y": tpl.c_y.copy(), "b": tpl.b.copy()}
        const = tpl.const
        for target, pos, val in self.realizations[t][j].overrides:
            if target == "const":
                const = val
            else:
                data[target][pos] = val
        out = (data["c_x"], data["c_y"], data["b"], const)
        self._cache[key] = out
        return out

    def stage_matrix(self, t):
        """``[B A C]`` of stage ``t`` as CSR."""
        key = ("mat", t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        tpl = self.templates[t]
        m = tpl.n_rows
        hp = self.state_dim(t - 1)
        M = sp.hstack([tpl.B.to_csr((m, hp)), tpl.A.to_csr((m, tpl.h)),
                       tpl.C.to_csr((m, tpl.n_local))], format="csr")
        self._cache[key] = M
        return M

    def stage_cost(self, t, j, x, y):
        c_x, c_y, _, const = self.stage_data(t, j)
        return float(c_x @ x + c_y @ y + const)

    def state_bounds(self, t):
        tpl = self.templates[t]
        return tpl.state_lo, tpl.state_hi, np.array([k != "continuous" for k in tpl.state_kind])


# ---------------------------------------------------------------- validation
def _triplet_issues(name, trip, shape, t):
    out = []
    if trip.rows.size and (trip.rows.min() < 0 or trip.rows.max() >= shape[0]):
        out.append(f"stage {t}: {name} row index out of range [0,{shape[0]})")
    if trip.cols.size and (trip.cols.min() < 0 or trip.cols.max() >= shape[1]):
        out.append(f"stage {t}: {name} column count exceeds declared dimension {shape[1]}")
    if not np.all(np.isfinite(trip.vals)):
        out.append(f"stage {t}: {name} has non-finite coefficients")
    return out


def validate_model(model):
    """List of invariant violations; empty when the model is well formed."""
    issues = []
    if model.T < 1:
        return ["model: T must be >= 1"]
    if len(model.templates) != model.T:
        issues.append(f"model: {len(model.templates)} templates for T={model.T}")
    if len(model.realizations) != model.T:
        issues.append(f"model: {len(model.realizations)} realization lists for T={model.T}")
    if issues:
        return issues
    for t, tpl in enumerate(model.templates):
        if tpl.t != t:
            issues.append(f"stage {t}: template index {tpl.t} != position {t}")
        h, ny, m = tpl.h, tpl.n_local, tpl.n_rows
        hp = model.state_dim(t - 1)
        for name, arr, size in (("state_lo", tpl.state_lo, h), ("state_hi", tpl.state_hi, h),
                                ("local_lo", tpl.local_lo, ny), ("local_hi", tpl.local_hi, ny),
                                ("c_x", tpl.c_x, h), ("c_y", tpl.c_y, ny),
                                ("sense", tpl.sense, m)):
            if arr.size != size:
                issues.append(f"stage {t}: {name} has length {arr.size}, expected {size}")
        for k, kind in enumerate(tpl.state_kind):
            if kind not in STATE_KINDS:
                issues.append(f"stage {t}: state {k} has unknown kind {kind!r}")
        for k, kind in enumerate(tpl.local_kind):
            if kind not in LOCAL_KINDS:
                issues.append(f"stage {t}: local {k} has unknown kind {kind!r}")
        if tpl.state_lo.size == h and tpl.state_hi.size == h:
            if np.any(~np.isfinite(tpl.state_lo)) or np.any(~np.isfinite(tpl.state_hi)):
                issues.append(f"stage {t}: state bounds must be finite")
            elif np.any(tpl.state_lo > tpl.state_hi):
                issues.append(f"stage {t}: state lower bound exceeds upper bound")
            for k, kind in enumerate(tpl.state_kind):
                if kind == "binary" and (tpl.state_lo[k] != 0 or tpl.state_hi[k] != 1):
                    issues.append(f"stage {t}: binary state {k} must have bounds [0,1]")
        if tpl.local_lo.size == ny and tpl.local_hi.size == ny:
            if np.any(tpl.local_lo > tpl.local_hi) or np.any(tpl.local_lo == np.inf):
                issues.append(f"stage {t}: local bounds inconsistent")
            for k, kind in enumerate(tpl.local_kind):
                if kind != "continuous" and not (np.isfinite(tpl.local_lo[k])
                                                 and np.isfinite(tpl.local_hi[k])):
                    issues.append(f"stage {t}: integer local {k} must be bounded")
        if np.any(~np.isin(tpl.sense, ("G", "L", "E"))):
            issues.append(f"stage {t}: unknown row sense")
        issues += _triplet_issues("B", tpl.B, (m, hp), t)
        issues += _triplet_issues("A", tpl.A, (m, h), t)
        issues += _triplet_issues("C", tpl.C, (m, ny), t)
        if not math.isfinite(tpl.L):
            issues.append(f"stage {t}: lower bound L must be finite")
        reals = model.realizations[t]
        if not reals:
            issues.append(f"stage {t}: needs at least one realization")
            continue
        if t == 0 and len(reals) != 1:
            issues.append("stage 0: first stage must have exactly one realization")
        qs = [r.q for r in reals]
        if any(q < 0 or q > 1 for q in qs):
            issues.append(f"stage {t}: probabilities must lie in [0,1]")
        total = math.fsum(qs)
        if abs(total - 1.0) > PROB_TOL:
            issues.append(f"stage {t}: probabilities sum {total:g} != 1")
        sizes = {"c_x": h, "c_y": ny, "b": m}
        for j, r in enumerate(reals):
            for target, pos, val in r.overrides:
                if target not in OVERRIDE_TARGETS:
                    issues.append(f"stage {t} realization {j}: cannot override {target!r}")
                elif target != "const" and not 0 <= pos < sizes[target]:
                    issues.append(f"stage {t} realization {j}: {target}[{pos}] out of range")
                elif not math.isfinite(val):
                    issues.append(f"stage {t} realization {j}: non-finite override")
    return issues


def require_valid(model):
    issues = validate_model(model)
    if issues:
        raise ModelError("; ".join(issues))


# ------------------------------------------------------------- subproblems
def _build(model, t, j, pool, x_hat=None, pi=None):
    """Assemble the stage-``t`` MILP.

    With ``x_hat`` the copy variables are free and pinned by copy rows, so
    the copy-row duals are the gradient of the value in ``x_hat``.  With
    ``pi`` instead, the copy rows are dropped, ``z`` takes the previous
    stage's state domain and the objective is reduced by ``pi . z``.
    """
    tpl = model.templates[t]
    c_x, c_y, b, const = model.stage_data(t, j)
    hp = model.state_dim(t - 1)
    h, ny, m = tpl.h, tpl.n_local, tpl.n_rows
    has_theta = t < model.T - 1
    nv = hp + h + ny + (1 if has_theta else 0)
    blocks = [sp.hstack([model.stage_matrix(t), sp.csr_array((m, nv - hp - h - ny))],
                        format="csr")]
    rhs = [b]
    sense = [tpl.sense]
    tags = [np.full(m, "structural", dtype="<U10")]

    if x_hat is not None:
        blocks.append(sp.hstack([sp.eye_array(hp, format="csr"),
                                 sp.csr_array((hp, nv - hp))], format="csr"))
        rhs.append(np.asarray(x_hat, dtype=float))
        sense.append(np.full(hp, "E"))
        tags.append(np.full(hp, "copy", dtype="<U10"))

    theta_lb = -np.inf
    if has_theta:
        theta_lb = pool.L
        k = len(pool.cuts)
        if k:
            G = np.stack([c.pi for c in pool.cuts])
            V = np.array([c.v for c in pool.cuts])
            rows = np.hstack([np.zeros((k, hp)), -G, np.zeros((k, ny)), np.ones((k, 1))])
            blocks.append(sp.csr_array(rows))
            rhs.append(V)
            sense.append(np.full(k, "G"))
            tags.append(np.full(k, "cut", dtype="<U10"))

    A = sp.vstack(blocks, format="csc")
    c = np.concatenate([np.zeros(hp), c_x, c_y, [1.0] if has_theta else []])
    lb = np.concatenate([np.full(hp, -np.inf), tpl.state_lo, tpl.local_lo,
                         [theta_lb] if has_theta else []])
    ub = np.concatenate([np.full(hp, np.inf), tpl.state_hi, tpl.local_hi,
                         [np.inf] if has_theta else []])
    integer = np.concatenate([np.zeros(hp, dtype=bool),
                              [k != "continuous" for k in tpl.state_kind],
                              [k != "continuous" for k in tpl.local_kind],
                              [False] if has_theta else []]).astype(bool)
    if pi is not None:
        prev = model.templates[t - 1] if t > 0 else None
        if prev is None:
            raise ContractError("stage 0 has no incoming state to relax")
        c[:hp] = -np.asarray(pi, dtype=float)
        lb[:hp] = prev.state_lo
        ub[:hp] = prev.state_hi
        integer[:hp] = [k != "continuous" for k in prev.state_kind]

    lp = LinearProgram(A, np.concatenate(rhs), np.concatenate(sense), lb, ub, c,
                       obj_offset=const, row_tags=np.concatenate(tags))
    return MilpInstance(lp, integer, layout={
        "z": slice(0, hp),
        "x": slice(hp, hp + h),
        "y": slice(hp + h, hp + h + ny),
        "theta": hp + h + ny if has_theta else None,
    })


def instantiate_subproblem(model, t, j, x_hat, pool=None):
    """Stage-``t`` subproblem for realization ``j`` at incoming state ``x_hat``."""
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    if not 0 <= t < model.T:
        raise ModelError(f"stage {t} out of range")
    if not 0 <= j < model.n_real(t):
        raise ModelError(f"stage {t} has no realization {j}")
    if x_hat.size != model.state_dim(t - 1):
        raise ModelError(f"incoming state has dimension {x_hat.size}, "
                         f"stage {t} expects {model.state_dim(t - 1)}")
    if t < model.T - 1 and pool is None:
        raise ModelError(f"stage {t} needs its cut pool")
    return _build(model, t, j, pool, x_hat=x_hat)


def relaxed_subproblem(model, t, j, pi, pool=None):
    """Stage-``t`` problem with the copy constraint dualized by ``pi``."""
    pi = np.asarray(pi, dtype=float).reshape(-1)
    if t < 1:
        raise ModelError("the first stage has no incoming state to relax")
    if pi.size != model.state_dim(t - 1):
        raise ModelError("multiplier dimension mismatch")
    return _build(model, t, j, pool, pi=pi)


# ----------------------------------------------------------------- sampling
def sample_scenario_paths(model, M, seed=None):
    """``M`` i.i.d. scenario paths; ``seed`` is an int or a numpy Generator."""
    if M < 2:
        raise ConfigError("at least two scenario paths are required (M >= 2)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    cols = [np.zeros(M, dtype=np.int64)]
    for t in range(1, model.T):
        cols.append(rng.choice(model.n_real(t), size=M, p=model.probs(t)))
    idx = np.stack(cols, axis=1)
    return [ScenarioPath(tuple(int(v) for v in row)) for row in idx]


def all_scenario_paths(model):
    """Every path of the tree with its probability, in lexicographic order."""
    import itertools

    ranges = [range(model.n_real(t)) for t in range(model.T)]
    out = []
    for combo in itertools.product(*ranges):
        p = math.prod(model.realizations[t][j].q for t, j in enumerate(combo))
        out.append((ScenarioPath(tuple(combo)), p))
    return out


# ------------------------------------------------------------ binarization
def _expand_columns(trip, col_map, n_rows):
    """Rewrite triplet columns through ``col_map``.

    ``col_map[k]`` is ``(lo, [(new_col, weight), ...])``; returns the new
    triplets and the rhs correction ``-sum_k M[:, k] * lo_k``.
    """
    rows, cols, vals = [], [], []
    shift = np.zeros(n_rows)
    for r, k, v in zip(trip.rows, trip.cols, trip.vals):
        lo, parts = col_map[k]
        for new_col, w in parts:
            rows.append(r)
            cols.append(new_col)
            vals.append(v * w)
        shift[r] -= v * lo
    return Triplets(rows, cols, vals), shift


def binarize_state(model):
    """Replace every bounded-integer state component by its base-2 expansion.

    ``x = lo + sum_k 2^k b_k``; when the bits can exceed ``hi - lo`` a cap
    row keeps the expansion inside the original range.  Constant shifts go
    to the right-hand sides and to the objective constant (per realization
    when objective coefficients are overridden).
    """
    require_valid(model)
    for tpl in model.templates:
        if "continuous" in tpl.state_kind:
            raise UnsupportedError(f"stage {tpl.t} has continuous state; cannot binarize")
    if all(k == "binary" for tpl in model.templates for k in tpl.state_kind):
        return model

    # col_maps[t][k] = (lo, [(new_index, weight)]) for state leaving stage t
    col_maps, caps = [], []
    for tpl in model.templates:
        cmap, cap, nxt = [], [], 0
        for k, kind in enumerate(tpl.state_kind):
            lo, hi = tpl.state_lo[k], tpl.state_hi[k]
            if kind == "binary":
                cmap.append((0.0, [(nxt, 1.0)]))
                nxt += 1
                continue
            span = int(round(hi - lo))
            nbits = max(1, math.ceil(math.log2(span + 1)))
            parts = [(nxt + i, float(2 ** i)) for i in range(nbits)]
            cmap.append((float(lo), parts))
            if 2 ** nbits - 1 > span:
                cap.append((parts, float(span)))
            nxt += nbits
        col_maps.append((cmap, nxt))
        caps.append(cap)

    templates, realizations = [], []
    for t, tpl in enumerate(model.templates):
        cmap, h_new = col_maps[t]
        m = tpl.n_rows
        A_new, shift_a = _expand_columns(tpl.A, cmap, m)
        if t > 0:
            B_new, shift_b = _expand_columns(tpl.B, col_maps[t - 1][0], m)
        else:
            B_new, shift_b = tpl.B, np.zeros(m)
        shift = shift_a + shift_b

        # cap rows: sum 2^k b_k <= hi - lo
        a_rows, a_cols, a_vals = list(A_new.rows), list(A_new.cols), list(A_new.vals)
        extra_b, extra_sense = [], []
        for i, (parts, span) in enumerate(caps[t]):
            for col, w in parts:
                a_rows.append(m + i)
                a_cols.append(col)
                a_vals.append(w)
            extra_b.append(span)
            extra_sense.append("L")
        A_new = Triplets(a_rows, a_cols, a_vals)
        n_cap = len(extra_b)

        def expand_cost(cx):
            out = np.zeros(h_new)
            const = 0.0
            for k, (lo, parts) in enumerate(cmap):
                for col, w in parts:
                    out[col] = cx[k] * w
                const += cx[k] * lo
            return out, const

        c_x_new, c_shift = expand_cost(tpl.c_x)
        kinds = ["binary"] * h_new
        templates.append(StageTemplate(
            t=t, state_kind=kinds, state_lo=np.zeros(h_new), state_hi=np.ones(h_new),
            local_kind=tpl.local_kind, local_lo=tpl.local_lo, local_hi=tpl.local_hi,
            c_x=c_x_new, c_y=tpl.c_y,
            B=B_new, A=A_new, C=tpl.C,
            b=np.concatenate([tpl.b + shift, extra_b]),
            sense=np.concatenate([tpl.sense, np.array(extra_sense, dtype="<U1")]),
            L=tpl.L, const=tpl.const + c_shift,
        ))

        reals = []
        for j, r in enumerate(model.realizations[t]):
            new_ov = []
            cx_over = {pos: val for tg, pos, val in r.overrides if tg == "c_x"}
            for target, pos, val in r.overrides:
                if target == "c_x":
                    lo, parts = cmap[pos]
                    new_ov += [("c_x", col, val * w) for col, w in parts]
                elif target == "b":
                    new_ov.append(("b", pos, val + shift[pos]))
                elif target == "c_y":
                    new_ov.append((target, pos, val))
            base_const = next((v for tg, _, v in r.overrides if tg == "const"), tpl.const)
            if cx_over or any(tg == "const" for tg, _, _ in r.overrides):
                cx = model.stage_data(t, j)[0]
                _, cshift = expand_cost(cx)
                new_ov.append(("const", 0, base_const + cshift))
            reals.append(Realization(r.q, new_ov))
        realizations.append(reals)

    return MsipModel(model.T, templates, realizations, model.x0.copy(),
                     name=model.name)
