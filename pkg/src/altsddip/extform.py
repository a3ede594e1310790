"""Extensive form: the whole scenario tree as one MILP (ground truth for small trees)."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .mip import MilpInstance, solve_milp
from .model import require_valid
from .simplex import LinearProgram

DEFAULT_CAP = 5000


@dataclass
class TreeNode:
    stage: int
    history: tuple  # realization indices from stage 0 to ``stage``
    prob: float
    parent: int  # index into the node list, -1 at the root
    x: slice
    y: slice


def tree_size(model):
    size, width = 0, 1
    for t in range(model.T):
        width *= model.n_real(t)
        size += width
    return size


def build_extensive_form(model, cap=DEFAULT_CAP):
    """One ``(x_n, y_n)`` block per tree node, linked through the parent's state.

    Returns the instance and the node list (stage, history, probability and
    the variable slices of every node).
    """
    require_valid(model)
    n_nodes = tree_size(model)
    if n_nodes > cap:
        raise ConfigError(f"extensive form has {n_nodes} nodes, above the cap {cap}")

    nodes = []
    layer = [(-1, (), 1.0)]
    col = 0
    for t in range(model.T):
        tpl = model.templates[t]
        nxt = []
        for parent, hist, p in layer:
            for j in range(model.n_real(t)):
                q = model.realizations[t][j].q
                xs = slice(col, col + tpl.h)
                ys = slice(col + tpl.h, col + tpl.h + tpl.n_local)
                col += tpl.h + tpl.n_local
                nodes.append(TreeNode(t, hist + (j,), p * q, parent, xs, ys))
                nxt.append((len(nodes) - 1, hist + (j,), p * q))
        layer = nxt
    n_cols = col

    blocks, rhs, sense = [], [], []
    c = np.zeros(n_cols)
    lb = np.zeros(n_cols)
    ub = np.zeros(n_cols)
    integer = np.zeros(n_cols, dtype=bool)
    offset = 0.0
    for node in nodes:
        t = node.stage
        tpl = model.templates[t]
        c_x, c_y, b, const = model.stage_data(t, node.history[-1])
        hp = model.state_dim(t - 1)
        m = tpl.n_rows
        Bm = tpl.B.to_csr((m, hp))
        Am = tpl.A.to_csr((m, tpl.h))
        Cm = tpl.C.to_csr((m, tpl.n_local))
        b = b.copy()
        rows = sp.lil_array((m, n_cols))
        if node.parent < 0:
            b = b - Bm @ model.x0
        else:
            px = nodes[node.parent].x
            rows[:, px] = Bm.toarray()
        rows[:, node.x] = Am.toarray()
        rows[:, node.y] = Cm.toarray()
        blocks.append(rows.tocsr())
        rhs.append(b)
        sense.append(tpl.sense)
        c[node.x] = node.prob * c_x
        c[node.y] = node.prob * c_y
        offset += node.prob * const
        lb[node.x], ub[node.x] = tpl.state_lo, tpl.state_hi
        lb[node.y], ub[node.y] = tpl.local_lo, tpl.local_hi
        integer[node.x] = [k != "continuous" for k in tpl.state_kind]
        integer[node.y] = [k != "continuous" for k in tpl.local_kind]

    A = sp.vstack(blocks, format="csc") if blocks else sp.csc_array((0, n_cols))
    lp = LinearProgram(A, np.concatenate(rhs), np.concatenate(sense), lb, ub, c,
                       obj_offset=offset)
    return MilpInstance(lp, integer), nodes


def solve_extensive_form(model, cap=DEFAULT_CAP, limits=None):
    """Solve the extensive form; the node list is returned in ``info["nodes"]``."""
    inst, nodes = build_extensive_form(model, cap)
    sol = solve_milp(inst, limits)
    sol.info["nodes"] = nodes
    return sol


def first_stage_decision(sol):
    node = sol.info["nodes"][0]
    return sol.primal[node.x].copy()
