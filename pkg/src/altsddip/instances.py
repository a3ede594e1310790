"""Instance generators (stochastic multi-knapsack, generation expansion) and JSON I/O."""

import json
import math
from importlib import resources

import numpy as np

from .errors import ConfigError, ModelError
from .model import (
    MsipModel,
    Realization,
    StageTemplate,
    Triplets,
    validate_model,
)

SMKP_PENALTY = 200.0


def _check_sizes(**sizes):
    for name, v in sizes.items():
        if int(v) != v or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v}")


# ------------------------------------------------------------------- SMKP
def generate_smkp(T, rows, cols, scens, seed, penalty=SMKP_PENALTY):
    """Multi-stage stochastic multi-knapsack instance.

    Stage ``t``: ``min q(w)^T x_t + rho 1^T y_t`` subject to
    ``W_{t-1} x_{t-1} + A_t x_t + y_t >= h_t`` with binary ``x_t`` and
    ``y_t >= 0``.  Matrix entries and costs are uniform on 1..100 and
    ``h_t = 3/4 (W_{t-1} 1 + A_t 1)``; the first stage has no incoming
    state (``W_0 = 0``).  Only the costs vary across the equiprobable
    realizations of a stage.
    """
    _check_sizes(rows=rows, cols=cols, scens=scens)
    if T < 2 or int(T) != T:
        raise ConfigError(f"T must be an integer >= 2, got {T}")
    rng = np.random.default_rng(seed)
    templates, realizations = [], []
    for t in range(T):
        A = rng.integers(1, 101, size=(rows, cols)).astype(float)
        if t > 0:
            W = rng.integers(1, 101, size=(rows, cols)).astype(float)
            B = Triplets.from_dense(W)
            h = 0.75 * W.sum(axis=1) + 0.75 * A.sum(axis=1)
        else:
            B = Triplets.empty()
            h = 0.75 * A.sum(axis=1)
        n_real = 1 if t == 0 else scens
        costs = rng.integers(1, 101, size=(n_real, cols)).astype(float)
        templates.append(StageTemplate(
            t=t,
            state_kind=["binary"] * cols,
            state_lo=np.zeros(cols), state_hi=np.ones(cols),
            local_kind=["continuous"] * rows,
            local_lo=np.zeros(rows), local_hi=np.full(rows, np.inf),
            c_x=costs[0], c_y=np.full(rows, float(penalty)),
            B=B, A=Triplets.from_dense(A), C=Triplets.from_dense(np.eye(rows)),
            b=h, sense=np.full(rows, "G"), L=0.0,
        ))
        realizations.append([
            Realization(1.0 / n_real, [("c_x", k, costs[j, k]) for k in range(cols)])
            for j in range(n_real)
        ])
    return MsipModel(T, templates, realizations, np.zeros(0),
                     name=f"smkp_T{T}_r{rows}_c{cols}_s{scens}_seed{seed}")


# -------------------------------------------------------------------- GEP
def load_gep_data():
    with resources.files("altsddip").joinpath("data/gep.json").open("r") as fh:
        return json.load(fh)


def generate_gep(T=10, scens=3, seed=0, G=None, n_types=None, data=None):
    """Generation expansion planning with integer cumulative builds as state.

    Per stage: ``x_t = x_{t-1} + g_t`` with ``0 <= x_t <= G``; generation in
    each demand block is limited by ``rating * x_t``; unmet demand is
    penalized, which gives complete recourse.  Fuel costs and demands are
    perturbed independently per realization.
    """
    data = data or load_gep_data()
    types = data["types"]
    if n_types is not None:
        _check_sizes(n_types=n_types)
        if n_types > len(types):
            raise ConfigError(f"bundled data has only {len(types)} generator types")
        types = types[:n_types]
    n = len(types)
    _check_sizes(scens=scens)
    if T < 2 or int(T) != T:
        raise ConfigError(f"T must be an integer >= 2, got {T}")
    caps = np.array([ty["max_units"] for ty in types], dtype=float) if G is None else \
        np.broadcast_to(np.asarray(G, dtype=float), (n,)).copy()
    if np.any(caps < 0) or np.any(caps != np.round(caps)):
        raise ConfigError("generator caps G must be non-negative integers")
    blocks = data["subperiods"]
    S = len(blocks)
    rng = np.random.default_rng(seed)

    cap_mw = np.array([ty["capacity_mw"] for ty in types])
    avail = np.array([ty["availability"] for ty in types])
    fuel = np.array([ty["fuel_cost"] for ty in types])
    build = np.array([ty["build_cost"] for ty in types])
    hours = np.array([b["hours"] for b in blocks])
    level = np.array([b["load_factor"] for b in blocks])
    rho = float(data["unmet_penalty"])

    # locals: g (n, integer), y (S*n), u (S)
    n_loc = n + S * n + S
    g_idx = np.arange(n)
    y_idx = lambda s: n + s * n + np.arange(n)  # noqa: E731
    u_idx = n + S * n + np.arange(S)
    local_kind = ["integer"] * n + ["continuous"] * (S * n + S)
    local_lo = np.zeros(n_loc)
    local_hi = np.concatenate([caps, np.full(S * n + S, np.inf)])

    templates, realizations = [], []
    for t in range(T):
        disc = (1.0 + data["discount_rate"]) ** -t
        esc = (1.0 + data["fuel_escalation"]) ** t
        rating = (cap_mw * avail)[None, :] * hours[:, None] / 1000.0  # GWh per unit
        demand = data["peak_load_mw"] * (1.0 + data["load_growth"]) ** t * level * hours / 1000.0

        B, A, C = [], [], []
        b, sense = [], []
        r = 0
        for k in range(n):  # x_t - x_{t-1} - g_t = 0
            B.append((r, k, -1.0))
            A.append((r, k, 1.0))
            C.append((r, g_idx[k], -1.0))
            b.append(0.0)
            sense.append("E")
            r += 1
        for s in range(S):  # y_ts - rating x_t <= 0
            for k in range(n):
                C.append((r, y_idx(s)[k], 1.0))
                A.append((r, k, -rating[s, k]))
                b.append(0.0)
                sense.append("L")
                r += 1
        dem_rows = []
        for s in range(S):  # 1^T y_ts + u_ts = d_ts
            for k in range(n):
                C.append((r, y_idx(s)[k], 1.0))
            C.append((r, u_idx[s], 1.0))
            b.append(demand[s])
            sense.append("E")
            dem_rows.append(r)
            r += 1

        c_y = np.zeros(n_loc)
        c_y[g_idx] = build * disc
        for s in range(S):
            c_y[y_idx(s)] = fuel * esc * disc
        c_y[u_idx] = rho * disc

        def trip(lst):
            if not lst:
                return Triplets.empty()
            rr, cc, vv = zip(*lst)
            return Triplets(rr, cc, vv)

        templates.append(StageTemplate(
            t=t, state_kind=["integer"] * n, state_lo=np.zeros(n), state_hi=caps.copy(),
            local_kind=local_kind, local_lo=local_lo, local_hi=local_hi,
            c_x=np.zeros(n), c_y=c_y, B=trip(B), A=trip(A), C=trip(C),
            b=np.array(b), sense=np.array(sense), L=0.0,
        ))
        n_real = 1 if t == 0 else scens
        reals = []
        for j in range(n_real):
            ov = []
            if t > 0:
                fdev = 1.0 + data["fuel_spread"] * rng.uniform(-1.0, 1.0, size=n)
                ddev = 1.0 + data["demand_spread"] * rng.uniform(-1.0, 1.0, size=S)
                for s in range(S):
                    for k in range(n):
                        ov.append(("c_y", int(y_idx(s)[k]), float(c_y[y_idx(s)[k]] * fdev[k])))
                    ov.append(("b", dem_rows[s], float(demand[s] * ddev[s])))
            reals.append(Realization(1.0 / n_real, ov))
        realizations.append(reals)
    return MsipModel(T, templates, realizations, np.zeros(n), name=f"gep_T{T}_s{scens}_seed{seed}")


# ------------------------------------------------------- worked example
def example_two_stage(L=8.0):
    """Two-stage toy with binary first-stage state.

    ``min x1 + x2 + Q(x)`` where ``Q(x) = min {4y : y >= 2.6 - 0.25 x1 - 0.5 x2,
    0 <= y <= 4, y integer}``; ``L`` bounds ``Q`` from below.
    """
    s0 = StageTemplate(0, ["binary"] * 2, [0, 0], [1, 1], [], [], [], [1.0, 1.0], [],
                       Triplets.empty(), Triplets.empty(), Triplets.empty(), [], L=L)
    s1 = StageTemplate(1, [], [], [], ["integer"], [0], [4], [], [4.0],
                       Triplets([0, 0], [0, 1], [0.25, 0.5]), Triplets.empty(),
                       Triplets([0], [0], [1.0]), [2.6], L=0.0)
    return MsipModel(2, [s0, s1], [[Realization(1.0)], [Realization(1.0)]], np.zeros(0),
                     name="two_stage_example")


# ------------------------------------------------------------------ JSON
def _num(v):
    v = float(v)
    return None if math.isinf(v) else v


def _trip_json(tr):
    return [[int(r), int(c), float(v)] for r, c, v in zip(tr.rows, tr.cols, tr.vals)]


def model_to_dict(model):
    stages = []
    for t, tpl in enumerate(model.templates):
        stages.append({
            "t": t,
            "state": [{"kind": k, "lo": _num(lo), "hi": _num(hi)}
                      for k, lo, hi in zip(tpl.state_kind, tpl.state_lo, tpl.state_hi)],
            "locals": [{"kind": k, "lo": _num(lo), "hi": _num(hi)}
                       for k, lo, hi in zip(tpl.local_kind, tpl.local_lo, tpl.local_hi)],
            "c_x": [float(v) for v in tpl.c_x],
            "c_y": [float(v) for v in tpl.c_y],
            "const": tpl.const,
            "triplets": {"B": _trip_json(tpl.B), "A": _trip_json(tpl.A), "C": _trip_json(tpl.C)},
            "b": [float(v) for v in tpl.b],
            "sense": [str(s) for s in tpl.sense],
            "L": tpl.L,
            "realizations": [{"q": r.q, "overrides": [[tg, pos, v] for tg, pos, v in r.overrides]}
                             for r in model.realizations[t]],
        })
    return {"name": model.name, "T": model.T, "x0": [float(v) for v in model.x0],
            "stages": stages}


def write_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def _get(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelError(f"{where}: missing field {key!r}")
    return obj[key]


def _bound(v, default):
    return default if v is None else float(v)


def _trip_from(raw, where):
    try:
        if not raw:
            return Triplets.empty()
        r, c, v = zip(*raw)
        return Triplets(r, c, v)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{where}: triplets must be [row, col, value] lists ({exc})") from None


def model_from_dict(doc):
    T = int(_get(doc, "T", "document"))
    x0 = _get(doc, "x0", "document")
    raw_stages = _get(doc, "stages", "document")
    if len(raw_stages) != T:
        raise ModelError(f"document: {len(raw_stages)} stages listed for T={T}")
    templates, realizations = [], []
    for t, st in enumerate(raw_stages):
        where = f"stages[{t}]"
        try:
            state = _get(st, "state", where)
            locs = _get(st, "locals", where)
            if isinstance(locs, int):
                locs = [{"kind": "continuous", "lo": 0.0, "hi": None}] * locs
            trip = _get(st, "triplets", where)
            b = _get(st, "b", where)
            tpl = StageTemplate(
                t=int(st.get("t", t)),
                state_kind=[s["kind"] for s in state],
                state_lo=[_bound(s.get("lo"), 0.0) for s in state],
                state_hi=[_bound(s.get("hi"), 1.0) for s in state],
                local_kind=[s["kind"] for s in locs],
                local_lo=[_bound(s.get("lo"), -math.inf) for s in locs],
                local_hi=[_bound(s.get("hi"), math.inf) for s in locs],
                c_x=_get(st, "c_x", where), c_y=_get(st, "c_y", where),
                B=_trip_from(trip.get("B", []), where + ".triplets.B"),
                A=_trip_from(trip.get("A", []), where + ".triplets.A"),
                C=_trip_from(trip.get("C", []), where + ".triplets.C"),
                b=b, sense=st.get("sense", ["G"] * len(b)),
                L=_get(st, "L", where), const=st.get("const", 0.0),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"{where}: malformed stage ({exc})") from None
        reals = []
        for j, r in enumerate(_get(st, "realizations", where)):
            rw = f"{where}.realizations[{j}]"
            try:
                reals.append(Realization(_get(r, "q", rw),
                                         [tuple(o) for o in r.get("overrides", [])]))
            except (TypeError, ValueError) as exc:
                raise ModelError(f"{rw}: malformed override ({exc})") from None
        total = math.fsum(r.q for r in reals)
        if abs(total - 1.0) > 1e-9:
            raise ModelError(f"{where}.realizations: probabilities sum to {total:.12g}, not 1")
        if abs(total - 1.0) > 1e-12:
            # within the file tolerance but outside the model's: renormalize
            for r in reals:
                r.q /= total
        templates.append(tpl)
        realizations.append(reals)
    model = MsipModel(T, templates, realizations, x0, name=str(doc.get("name", "")))
    issues = validate_model(model)
    if issues:
        raise ModelError("; ".join(issues))
    return model


def read_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}") from None
    return model_from_dict(doc)
