import json

import numpy as np
import pytest

from altsddip.errors import ModelError
from altsddip.instances import (
    example_two_stage,
    generate_gep,
    generate_smkp,
    load_gep_data,
    model_from_dict,
    model_to_dict,
    read_model,
    write_model,
)
from altsddip.model import validate_model


def _same(a, b):
    assert a.T == b.T and np.array_equal(a.x0, b.x0)
    for t in range(a.T):
        ta, tb = a.templates[t], b.templates[t]
        assert ta.state_kind == tb.state_kind and ta.local_kind == tb.local_kind
        for f in ("state_lo", "state_hi", "local_lo", "local_hi", "c_x", "c_y", "b"):
            np.testing.assert_array_equal(getattr(ta, f), getattr(tb, f))
        assert ta.A == tb.A and ta.B == tb.B and ta.C == tb.C
        assert list(ta.sense) == list(tb.sense) and ta.L == tb.L and ta.const == tb.const
        for j in range(a.n_real(t)):
            assert a.realizations[t][j] == b.realizations[t][j]


@pytest.mark.parametrize("make", [
    lambda: generate_smkp(3, 2, 5, 3, seed=1),
    lambda: generate_gep(T=3, scens=2, seed=4),
    example_two_stage,
])
def test_json_roundtrip(tmp_path, make):
    m = make()
    p = tmp_path / "m.json"
    write_model(m, p)
    _same(m, read_model(p))
    write_model(read_model(p), tmp_path / "again.json")
    assert p.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_smkp_shape():
    m = generate_smkp(3, 10, 30, 3, seed=1)
    assert validate_model(m) == []
    assert m.n_scenarios() == 9
    assert all(tpl.h == 30 and tpl.n_rows == 10 for tpl in m.templates)
    assert m.templates[0].B.vals.size == 0
    assert np.all(m.probs(1) == pytest.approx(1 / 3))


def test_gep_shape():
    data = load_gep_data()
    m = generate_gep(T=10, scens=3, seed=0)
    assert validate_model(m) == []
    n = len(data["types"])
    assert m.templates[0].h == n
    assert all(k == "integer" for k in m.templates[0].state_kind)
    assert m.n_real(0) == 1 and m.n_real(5) == 3
    assert generate_gep(T=2, scens=1, seed=0, n_types=2).templates[0].h == 2


def test_bad_documents_name_location():
    doc = model_to_dict(generate_smkp(2, 1, 2, 2, seed=0))
    doc["stages"][1]["realizations"][0]["q"] = 0.9
    with pytest.raises(ModelError, match=r"stages\[1\]"):
        model_from_dict(doc)
    doc = model_to_dict(generate_smkp(2, 1, 2, 2, seed=0))
    del doc["stages"][0]["b"]
    with pytest.raises(ModelError, match=r"stages\[0\].*'b'"):
        model_from_dict(doc)
    doc = model_to_dict(generate_smkp(2, 1, 2, 2, seed=0))
    doc["stages"][1]["triplets"]["A"].append([0, 7, 1.0])
    with pytest.raises(ModelError, match="stage 1"):
        model_from_dict(doc)


def test_probabilities_renormalized_within_tolerance():
    doc = model_to_dict(generate_smkp(2, 1, 2, 2, seed=0))
    doc["stages"][1]["realizations"][0]["q"] += 5e-10
    m = model_from_dict(doc)
    assert abs(m.probs(1).sum() - 1.0) <= 1e-12


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ModelError, match="line 1"):
        read_model(p)


def test_infinite_bounds_written_as_null(tmp_path):
    p = tmp_path / "m.json"
    write_model(generate_smkp(2, 1, 2, 1, seed=0), p)
    doc = json.loads(p.read_text())
    assert doc["stages"][0]["locals"][0]["hi"] is None


def test_smkp_data_rules():
    m = generate_smkp(3, 4, 6, 2, seed=3)
    for t, tpl in enumerate(m.templates):
        A = tpl.A.to_csr((4, 6)).toarray()
        W = tpl.B.to_csr((4, m.state_dim(t - 1))).toarray() if t else np.zeros((4, 0))
        np.testing.assert_allclose(tpl.b, 0.75 * (W.sum(axis=1) + A.sum(axis=1)))
        assert A.min() >= 1 and A.max() <= 100
        for j in range(m.n_real(t)):
            c = m.stage_data(t, j)[0]
            assert np.all((c >= 1) & (c <= 100) & (c == np.round(c)))
        # all-slack point is feasible
        assert np.all(tpl.b >= 0)


def test_gep_default_tree_and_zero_caps():
    from altsddip.extform import solve_extensive_form

    assert generate_gep().n_scenarios() == 3 ** 9
    m = generate_gep(T=3, scens=2, seed=1, G=0)
    S = len(load_gep_data()["subperiods"])
    expected = 0.0
    for t in range(m.T):
        for j, r in enumerate(m.realizations[t]):
            _, c_y, b, _ = m.stage_data(t, j)
            expected += r.q * float(c_y[-S:] @ b[-S:])
    assert solve_extensive_form(m).objective == pytest.approx(expected, rel=1e-9)
    for t in range(m.T):
        assert np.all(m.stage_data(t, 0)[2][-S:] > 0)


def test_gep_builds_are_cumulative():
    from altsddip.extform import solve_extensive_form

    m = generate_gep(T=3, scens=1, seed=0, n_types=3)
    sol = solve_extensive_form(m)
    nodes = sol.info["nodes"]
    xs = [sol.primal[n.x] for n in nodes]
    for a, b in zip(xs, xs[1:]):
        assert np.all(b >= a - 1e-9)


def test_generator_bytes_identical(tmp_path):
    write_model(generate_gep(T=3, scens=2, seed=5), tmp_path / "a.json")
    write_model(generate_gep(T=3, scens=2, seed=5), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_hand_written_example_file(tmp_path):
    from altsddip.extform import solve_extensive_form

    doc = {
        "T": 2, "x0": [],
        "stages": [
            {"t": 0, "state": [{"kind": "binary"}, {"kind": "binary"}], "locals": [],
             "c_x": [1, 1], "c_y": [], "triplets": {}, "b": [], "L": 8,
             "realizations": [{"q": 1}]},
            {"t": 1, "state": [], "locals": [{"kind": "integer", "lo": 0, "hi": 4}],
             "c_x": [], "c_y": [4], "triplets": {"B": [[0, 0, 0.25], [0, 1, 0.5]],
                                                 "C": [[0, 0, 1]]},
             "b": [2.6], "sense": ["G"], "L": 0, "realizations": [{"q": 1}]},
        ],
    }
    p = tmp_path / "ex.json"
    p.write_text(json.dumps(doc))
    m = read_model(p)
    # optimum is Q(1,1) = 8 plus the first-stage cost 2
    assert solve_extensive_form(m).objective == pytest.approx(10.0)


def test_generator_size_errors():
    from altsddip.errors import ConfigError

    with pytest.raises(ConfigError):
        generate_smkp(1, 2, 2, 2, seed=0)
    with pytest.raises(ConfigError):
        generate_smkp(3, 0, 2, 2, seed=0)
    with pytest.raises(ConfigError):
        generate_gep(T=1)
