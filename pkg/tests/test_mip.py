import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from altsddip.errors import ContractError, SolverError
from altsddip.mip import MilpInstance, MipLimits, solve_lp_relaxation, solve_milp
from altsddip.simplex import LinearProgram
from oracles import enumerate_binary_milp


def _mixed_reference(A, sense, rhs, c, nb, nc, cub):
    """Enumerate binaries, solve the continuous part with HiGHS."""
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=nb):
        xb = np.array(bits)
        r = rhs - A[:, :nb] @ xb
        Ac = A[:, nb:]
        g, l, e = sense == "G", sense == "L", sense == "E"
        Aub = np.vstack([-Ac[g], Ac[l]])
        bub = np.concatenate([-r[g], r[l]])
        res = linprog(c[nb:], A_ub=Aub if bub.size else None, b_ub=bub if bub.size else None,
                      A_eq=Ac[e] if e.any() else None, b_eq=r[e] if e.any() else None,
                      bounds=[(0, cub)] * nc, method="highs")
        if res.status == 0:
            best = min(best, float(c[:nb] @ xb + res.fun))
    return best


def test_mixed_instances_match_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(60):
        nb, nc, m = int(rng.integers(1, 9)), int(rng.integers(1, 4)), int(rng.integers(1, 6))
        n = nb + nc
        A = rng.integers(-5, 6, (m, n)).astype(float)
        rhs = rng.integers(-5, 10, m).astype(float)
        sense = rng.choice(np.array(list("GLE")), m, p=[0.45, 0.45, 0.1])
        c = rng.integers(-10, 11, n).astype(float)
        ub = np.r_[np.ones(nb), np.full(nc, 5.0)]
        inst = MilpInstance(LinearProgram(sp.csc_array(A), rhs, sense, np.zeros(n), ub, c),
                            np.r_[np.ones(nb, bool), np.zeros(nc, bool)])
        sol = solve_milp(inst)
        ref = _mixed_reference(A, sense, rhs, c, nb, nc, 5.0)
        if ref == np.inf:
            assert sol.status == "infeasible"
        else:
            assert sol.optimal
            assert sol.objective == pytest.approx(ref, abs=1e-6 * (1 + abs(ref)))


def test_general_integers():
    # min -5x - 4y  s.t. 6x + 4y <= 24, x + 2y <= 6, x, y in {0..10} integer -> x=4,y=0 obj -20
    lp = LinearProgram(np.array([[6.0, 4.0], [1.0, 2.0]]), [24.0, 6.0], ["L", "L"],
                       [0, 0], [10, 10], [-5.0, -4.0])
    sol = solve_milp(MilpInstance(lp, [True, True]))
    assert sol.optimal
    assert sol.objective == pytest.approx(-20.0)
    assert solve_lp_relaxation(MilpInstance(lp, [True, True])).objective == pytest.approx(-21.0)
    assert np.all(sol.primal == np.round(sol.primal))


def test_integral_root_needs_no_branching():
    lp = LinearProgram(np.array([[1.0, 1.0]]), [1.0], ["G"], [0, 0], [1, 1], [1.0, 2.0])
    sol = solve_milp(MilpInstance(lp, [True, True]))
    assert sol.optimal and sol.node_count == 0
    assert sol.objective == pytest.approx(1.0)


def test_node_limit_keeps_valid_bound():
    rng = np.random.default_rng(4)
    n = 18
    A = rng.integers(1, 20, (3, n)).astype(float)
    rhs = A.sum(axis=1) * 0.37
    c = rng.integers(1, 20, n).astype(float)
    lp = LinearProgram(sp.csc_array(A), rhs, ["G"] * 3, np.zeros(n), np.ones(n), c)
    inst = MilpInstance(lp, np.ones(n, bool))
    full = solve_milp(inst)
    cut = solve_milp(inst, MipLimits(max_nodes=3))
    assert full.optimal
    assert cut.status in ("hit-limit", "optimal")
    assert cut.bound <= full.objective + 1e-6
    if cut.has_solution:
        assert cut.objective >= full.objective - 1e-6


def test_integer_mark_on_unbounded_variable_rejected():
    lp = LinearProgram(np.array([[1.0]]), [1.0], ["G"], [0.0], [np.inf], [1.0])
    with pytest.raises(ContractError):
        solve_milp(MilpInstance(lp, [True]))


def test_unbounded_relaxation_raises():
    lp = LinearProgram(np.array([[1.0, 1.0]]), [0.0], ["G"], [0.0, 0.0], [1.0, np.inf],
                       [0.0, -1.0])
    with pytest.raises(SolverError):
        solve_milp(MilpInstance(lp, [True, False]))


def test_pure_binary_against_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(40):
        n, m = int(rng.integers(1, 13)), int(rng.integers(1, 5))
        A = rng.integers(-5, 6, (m, n)).astype(float)
        rhs = rng.integers(-5, 10, m).astype(float)
        sense = rng.choice(np.array(list("GLE")), m, p=[0.45, 0.45, 0.1])
        c = rng.integers(-10, 11, n).astype(float)
        lp = LinearProgram(sp.csc_array(A), rhs, sense, np.zeros(n), np.ones(n), c)
        sol = solve_milp(MilpInstance(lp, np.ones(n, bool)))
        ref = enumerate_binary_milp(A, sense, rhs, c)
        if ref is None:
            assert sol.status == "infeasible"
        else:
            assert sol.objective == pytest.approx(ref, abs=1e-6)


def test_example_subproblem_values(example):
    from altsddip.model import instantiate_subproblem

    for x_hat, q in (((0, 0), 12.0), ((1, 1), 8.0)):
        inst = instantiate_subproblem(example, 1, 0, x_hat)
        sol = solve_milp(inst)
        assert sol.optimal and sol.objective == pytest.approx(q)
        assert solve_lp_relaxation(inst).objective <= sol.objective + 1e-6


def test_pure_lp_instance_matches_relaxation():
    lp = LinearProgram(np.array([[1.0, 2.0]]), [3.0], ["G"], [0, 0], [5, 5], [1.0, 1.0])
    inst = MilpInstance(lp)
    assert solve_milp(inst).objective == pytest.approx(solve_lp_relaxation(inst).objective)


def test_adding_a_row_never_lowers_the_optimum():
    rng = np.random.default_rng(9)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        A = rng.integers(1, 10, (2, n)).astype(float)
        rhs = A.sum(axis=1) * 0.4
        c = rng.integers(1, 10, n).astype(float)
        base = solve_milp(MilpInstance(LinearProgram(A, rhs, ["G", "G"], np.zeros(n),
                                                     np.ones(n), c), np.ones(n, bool)))
        row = rng.integers(-3, 4, (1, n)).astype(float)
        more = solve_milp(MilpInstance(LinearProgram(np.vstack([A, row]), np.r_[rhs, -1.0],
                                                     ["G", "G", "G"], np.zeros(n), np.ones(n),
                                                     c), np.ones(n, bool)))
        if more.optimal:
            assert more.objective >= base.objective - 1e-7


def test_deterministic_result():
    rng = np.random.default_rng(2)
    A = rng.integers(-5, 6, (4, 12)).astype(float)
    lp = LinearProgram(A, rng.integers(-5, 10, 4).astype(float), ["G", "L", "G", "L"],
                       np.zeros(12), np.ones(12), rng.integers(-10, 11, 12).astype(float))
    a = solve_milp(MilpInstance(lp, np.ones(12, bool)))
    b = solve_milp(MilpInstance(lp, np.ones(12, bool)))
    assert a.objective == b.objective and np.array_equal(a.primal, b.primal)
    assert a.node_count == b.node_count
