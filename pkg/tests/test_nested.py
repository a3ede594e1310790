import math

import pytest

from altsddip.errors import ConfigError
from altsddip.extform import solve_extensive_form
from altsddip.instances import generate_smkp
from altsddip.nested import NestedConfig, relative_gap, run_nested_benders


@pytest.mark.parametrize("family", ["I", "L"])
@pytest.mark.parametrize("mode", ["default", "alternating"])
def test_bounds_bracket_optimum(tiny_smkp, family, mode):
    opt = solve_extensive_form(tiny_smkp).objective
    res = run_nested_benders(tiny_smkp, NestedConfig(cut_family=family, backward_mode=mode))
    assert res.status == "converged"
    assert res.LB <= opt + 1e-6 <= res.UB + 2e-6
    assert res.gap <= 0.01
    lbs = [r.LB for r in res.records]
    assert all(b >= a for a, b in zip(lbs, lbs[1:]))


def test_iteration_limit_and_checks():
    m = generate_smkp(3, 3, 8, 2, seed=2)
    res = run_nested_benders(m, NestedConfig(iteration_limit=1, gap_threshold=1e-9))
    assert res.status in ("iteration-limit", "converged")
    with pytest.raises(ConfigError):
        run_nested_benders(m, NestedConfig(max_paths=2))
    with pytest.raises(ConfigError):
        NestedConfig(gap_threshold=0.0).check()


def test_relative_gap():
    assert relative_gap(9.0, 10.0) == pytest.approx(0.1)
    assert relative_gap(0.0, math.inf) == math.inf


def test_example_bounds_meet(example):
    res = run_nested_benders(example, NestedConfig())
    assert res.LB == pytest.approx(10.0) and res.UB == pytest.approx(10.0)


def test_deterministic_model_converges():
    m = generate_smkp(3, 2, 4, 1, seed=5)
    opt = solve_extensive_form(m).objective
    res = run_nested_benders(m, NestedConfig())
    assert res.status == "converged" and res.LB <= opt + 1e-6 <= res.UB + 2e-6


def test_alternating_needs_fewer_exact_solves():
    fewer = 0
    for s in range(3):
        m = generate_smkp(3, 3, 6, 2, seed=s)
        a = run_nested_benders(m, NestedConfig(backward_mode="alternating"))
        d = run_nested_benders(m, NestedConfig(backward_mode="default"))
        assert a.status == d.status == "converged"
        fewer += a.stats.exact_evals < d.stats.exact_evals
    assert fewer == 3


def test_best_gap_non_increasing(tiny_smkp):
    res = run_nested_benders(tiny_smkp, NestedConfig(backward_mode="default"))
    gaps = [relative_gap(r.LB, r.UB) for r in res.records]
    best = [min(gaps[: k + 1]) for k in range(len(gaps))]
    assert all(b <= a for a, b in zip(best, best[1:]))
