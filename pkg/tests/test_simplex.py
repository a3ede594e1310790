import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from altsddip.errors import ContractError
from altsddip.simplex import (
    BACKEND,
    FEAS_TOL,
    LinearProgram,
    SimplexEngine,
    available_backends,
    extract_copy_duals,
    get_kernel,
    solve_lp,
)
from oracles import dual_objective, random_feasible_lp


def _highs(lp):
    A = lp.A.toarray()
    g, l, e = lp.sense == "G", lp.sense == "L", lp.sense == "E"
    Aub = np.vstack([-A[g], A[l]])
    bub = np.concatenate([-lp.rhs[g], lp.rhs[l]])
    res = linprog(lp.c, A_ub=Aub if bub.size else None, b_ub=bub if bub.size else None,
                  A_eq=A[e] if e.any() else None, b_eq=lp.rhs[e] if e.any() else None,
                  bounds=list(zip(lp.lb, lp.ub)), method="highs")
    return res


def test_small_lp_known_optimum():
    # min -x - y  s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2), obj -2.8
    lp = LinearProgram(np.array([[1.0, 2.0], [3.0, 1.0]]), [4.0, 6.0], ["L", "L"],
                       [0.0, 0.0], [np.inf, np.inf], [-1.0, -1.0])
    sol = solve_lp(lp)
    assert sol.optimal
    assert sol.objective == pytest.approx(-2.8, abs=1e-9)
    np.testing.assert_allclose(sol.primal, [1.6, 1.2], atol=1e-9)
    # duals are d obj / d rhs: both rows bind with multipliers -0.4 and -0.2
    np.testing.assert_allclose(sol.duals, [-0.4, -0.2], atol=1e-9)


def test_infeasible_and_unbounded():
    inf = LinearProgram(np.array([[1.0], [1.0]]), [2.0, 1.0], ["G", "L"], [0.0], [np.inf],
                        [1.0])
    assert solve_lp(inf).status == "infeasible"
    unb = LinearProgram(np.array([[1.0, -1.0]]), [0.0], ["G"], [0.0, 0.0], [np.inf, np.inf],
                        [-1.0, 0.0])
    assert solve_lp(unb).status == "unbounded"


def test_bad_inputs_rejected():
    with pytest.raises(ContractError):
        LinearProgram(np.ones((2, 2)), [1.0], ["G", "G"], [0, 0], [1, 1], [1, 1])
    with pytest.raises(ContractError):
        LinearProgram(np.ones((1, 2)), [1.0], ["X"], [0, 0], [1, 1], [1, 1]).check()
    with pytest.raises(ContractError):
        LinearProgram(np.ones((1, 2)), [1.0], ["G"], [2, 0], [1, 1], [1, 1]).check()


def test_backends_listed():
    assert "python" in available_backends()
    assert BACKEND in available_backends()
    assert get_kernel("python") is not None
    with pytest.raises(ValueError):
        get_kernel("fortran")


@pytest.mark.parametrize("backend", available_backends())
def test_random_lps_match_highs(backend):
    rng = np.random.default_rng(11)
    for _ in range(150):
        lp = random_feasible_lp(rng)
        sol = SimplexEngine(lp, backend=backend).solve()
        ref = _highs(lp)
        assert ref.status == 0 and sol.optimal
        assert sol.objective == pytest.approx(ref.fun, abs=1e-6 * (1 + abs(ref.fun)))


def test_backends_agree_bitwise_on_objective():
    if len(available_backends()) < 2:
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(5)
    for _ in range(100):
        lp = random_feasible_lp(rng)
        a = SimplexEngine(lp, backend="compiled").solve()
        b = SimplexEngine(lp, backend="python").solve()
        assert a.status == b.status
        assert a.objective == pytest.approx(b.objective, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_duality_property(seed):
    lp = random_feasible_lp(np.random.default_rng(seed))
    sol = solve_lp(lp)
    assert sol.optimal
    A = lp.A.toarray()
    r = A @ sol.primal
    assert np.all(r[lp.sense == "G"] >= lp.rhs[lp.sense == "G"] - FEAS_TOL)
    assert np.all(r[lp.sense == "L"] <= lp.rhs[lp.sense == "L"] + FEAS_TOL)
    # dual signs of a minimization with y = d obj / d rhs
    assert np.all(sol.duals[lp.sense == "G"] >= -1e-9)
    assert np.all(sol.duals[lp.sense == "L"] <= 1e-9)
    assert abs(sol.objective - dual_objective(lp, sol.duals)) <= 1e-7 * (1 + abs(sol.objective))


def test_warm_start_matches_cold():
    rng = np.random.default_rng(3)
    for _ in range(50):
        lp = random_feasible_lp(rng)
        eng = SimplexEngine(lp)
        first = eng.solve()
        lb, ub = lp.lb.copy(), lp.ub.copy()
        k = int(rng.integers(lp.A.shape[1]))
        ub[k] = max(lb[k], np.floor(first.primal[k]))
        warm = eng.solve(lb, ub, basis=first.basis)
        cold = SimplexEngine(LinearProgram(lp.A, lp.rhs, lp.sense, lb, ub, lp.c)).solve()
        assert warm.status == cold.status
        if cold.optimal:
            assert warm.objective == pytest.approx(cold.objective, abs=1e-7)


def test_copy_duals_on_example(example):
    from altsddip.model import instantiate_subproblem
    from altsddip.mip import solve_lp_relaxation

    inst = instantiate_subproblem(example, 1, 0, np.zeros(2))
    sol = solve_lp_relaxation(inst)
    assert sol.objective == pytest.approx(10.4)
    np.testing.assert_allclose(extract_copy_duals(sol, inst.lp), [-1.0, -2.0], atol=1e-9)
    with pytest.raises(ContractError):
        extract_copy_duals(None, inst.lp)


def test_sparse_input_accepted():
    A = sp.random(8, 10, density=0.4, random_state=1, format="csr")
    lp = LinearProgram(A, np.zeros(8), ["L"] * 8, np.zeros(10), np.ones(10), -np.ones(10))
    assert solve_lp(lp).optimal


def test_bound_optimum():
    lp = LinearProgram(np.zeros((0, 1)), [], [], [0.0], [1.0], [-1.0])
    sol = solve_lp(lp)
    assert sol.optimal and sol.objective == -1.0 and sol.primal[0] == 1.0


def test_infeasible_pair():
    lp = LinearProgram(np.array([[1.0], [1.0]]), [1.0, 0.0], ["G", "L"], [-np.inf], [np.inf],
                       [0.0])
    assert solve_lp(lp).status == "infeasible"


def _copy_lp(x_hat, rng_seed=0):
    """``min c y`` s.t. ``D y >= d - E z``, ``z = x_hat`` (copy rows), ``0 <= y <= 5``."""
    rng = np.random.default_rng(rng_seed)
    m, h, ny = 3, 2, 4
    D = rng.uniform(0.5, 2.0, (m, ny))
    E = rng.uniform(-1.0, 1.0, (m, h))
    d = rng.uniform(2.0, 4.0, m)
    c = rng.uniform(1.0, 3.0, ny)
    A = np.block([[E, D], [np.eye(h), np.zeros((h, ny))]])
    return LinearProgram(A, np.r_[d, x_hat], ["G"] * m + ["E"] * h,
                         np.r_[np.full(h, -np.inf), np.zeros(ny)],
                         np.r_[np.full(h, np.inf), np.full(ny, 5.0)],
                         np.r_[np.zeros(h), c], row_tags=["structural"] * m + ["copy"] * h)


def test_copy_duals_supporting_plane_and_finite_differences():
    x_hat = np.array([0.3, 0.6])
    sol = solve_lp(_copy_lp(x_hat))
    pi = extract_copy_duals(sol, _copy_lp(x_hat))
    rng = np.random.default_rng(1)
    for _ in range(100):
        x = rng.uniform(0.0, 1.0, 2)
        assert solve_lp(_copy_lp(x)).objective >= sol.objective + pi @ (x - x_hat) - 1e-6
    eps = 1e-6
    for r in range(2):
        e = np.zeros(2)
        e[r] = eps
        fd = (solve_lp(_copy_lp(x_hat + e)).objective - sol.objective) / eps
        assert fd == pytest.approx(pi[r], abs=1e-4)


def test_copy_duals_zero_when_state_is_irrelevant():
    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    lp = LinearProgram(A, [1.0, 0.5], ["G", "E"], [-np.inf, 0.0], [np.inf, 4.0], [0.0, 2.0],
                       row_tags=["structural", "copy"])
    np.testing.assert_allclose(extract_copy_duals(solve_lp(lp), lp), [0.0], atol=1e-12)
