import csv
import json

import pytest

from altsddip.cli import main
from altsddip.extform import solve_extensive_form
from altsddip.instances import read_model
from altsddip.model import validate_model


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def tiny_file(tmp_path):
    p = tmp_path / "tiny.json"
    assert main(["gen", "smkp", "--T", "3", "--rows", "2", "--cols", "4", "--scens", "2",
                 "--seed", "7", "--out", str(p)]) == 0
    return p


def test_gen_smkp_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert main(["gen", "smkp", "--T", "3", "--rows", "10", "--cols", "30", "--scens", "3",
                     "--seed", "1", "--out", str(p)]) == 0
    assert validate_model(read_model(a)) == []
    assert a.read_bytes() == b.read_bytes()


def test_gen_gep(tmp_path):
    p = tmp_path / "g.json"
    assert main(["gen", "gep", "--T", "3", "--scens", "2", "--seed", "0", "--out", str(p)]) == 0
    assert read_model(p).T == 3
    q = tmp_path / "gb.json"
    assert main(["gen", "gep", "--T", "2", "--scens", "2", "--binarize", "--out", str(q)]) == 0
    assert all(k == "binary" for tpl in read_model(q).templates for k in tpl.state_kind)


@pytest.mark.parametrize("argv", [
    ["gen", "smkp", "--T", "3", "--rows", "2", "--cols", "4", "--scens", "2"],
    ["gen", "knapsack", "--out", "x.json"],
    ["solve", "--algo", "sddip"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1


def test_solve_extform(tiny_file, tmp_path):
    out = tmp_path / "ef.csv"
    assert main(["solve", str(tiny_file), "--algo", "extform", "--out", str(out)]) == 0
    row = _rows(tmp_path / "ef_summary.csv")[0]
    assert float(row["gap_pct"]) == 0.0
    assert float(row["UB"]) == pytest.approx(solve_extensive_form(read_model(tiny_file)).objective)


def test_solve_sddip_reports_tight_prop(tiny_file, tmp_path):
    out = tmp_path / "s.csv"
    code = main(["solve", str(tiny_file), "--algo", "sddip", "--cut", "I", "--backward",
                 "alternating", "--M", "2", "--seed", "3", "--out", str(out)])
    assert code in (0, 2)
    row = _rows(tmp_path / "s_summary.csv")[0]
    assert float(row["tight_prop"]) < 0.5
    its = _rows(out)
    assert len(its) == int(row["iterations"])
    assert list(its[0]) == ["i", "LB", "UB", "cuts_benders", "cuts_tight", "elapsed_s"]


def test_solve_nested(tiny_file, tmp_path):
    out = tmp_path / "n.csv"
    assert main(["solve", str(tiny_file), "--algo", "nested", "--out", str(out)]) == 0
    assert _rows(tmp_path / "n_summary.csv")[0]["status"] == "converged"


@pytest.mark.parametrize("extra", [
    ["--algo", "extform", "--M", "3"],
    ["--algo", "extform", "--cut", "L"],
    ["--algo", "nested", "--alpha", "0.2"],
    ["--algo", "sddip", "--M", "1"],
    ["--algo", "sddip", "--gap", "0.1"],
])
def test_incompatible_flags(tiny_file, tmp_path, extra):
    assert main(["solve", str(tiny_file), "--out", str(tmp_path / "x.csv")] + extra) == 1


def test_time_limit_exit_code(tmp_path):
    p = tmp_path / "m.json"
    main(["gen", "smkp", "--T", "3", "--rows", "4", "--cols", "12", "--scens", "3",
          "--out", str(p)])
    code = main(["solve", str(p), "--backward", "default", "--delta", "0", "--time-limit",
                 "0.001", "--out", str(tmp_path / "t.csv")])
    assert code == 2
    assert _rows(tmp_path / "t_summary.csv")[0]["status"] == "time-limit"


def test_missing_instance_is_error(tmp_path):
    assert main(["solve", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x.csv")]) == 1


def test_integer_state_needs_binarize(tmp_path):
    p = tmp_path / "g.json"
    main(["gen", "gep", "--T", "2", "--scens", "1", "--out", str(p)])
    assert main(["solve", str(p), "--out", str(tmp_path / "x.csv")]) == 1


def _is_cell(v):
    if v == ">limit":
        return True
    try:
        float(v)
        return True
    except ValueError:
        return False


def test_bench_grid(tmp_path):
    grid = {"classes": [{"T": 2, "rows": 2, "cols": 4, "scens": 2}], "seeds": [1, 2],
            "configs": [{"cut": "I", "backward": "alternating"},
                        {"cut": "L", "backward": "alternating"}], "M": 2}
    g = tmp_path / "grid.json"
    g.write_text(json.dumps(grid))
    outs = []
    for k in range(2):
        out = tmp_path / f"b{k}.csv"
        assert main(["bench", str(g), "--out", str(out), "--no-timing"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = _rows(tmp_path / "b0.csv")
    assert len(rows) == 1
    assert {"IA-iter", "IA-gap", "IA-eprop", "LA-gap"} <= set(rows[0])
    assert all(_is_cell(v) for v in rows[0].values())


def test_bench_limit_sentinel(tmp_path):
    grid = {"classes": [{"T": 3, "rows": 4, "cols": 12, "scens": 3}], "seeds": [1],
            "configs": [{"cut": "I", "backward": "default"}], "M": 2, "delta": 0.0,
            "time_limit": 0.001}
    g = tmp_path / "grid.json"
    g.write_text(json.dumps(grid))
    out = tmp_path / "b.csv"
    assert main(["bench", str(g), "--out", str(out)]) == 0
    row = _rows(out)[0]
    assert row["ID-t"] == ">limit"
    assert all(_is_cell(v) for v in row.values())


def test_bench_records_failures_and_continues(tmp_path):
    grid = {"classes": [{"T": 2, "rows": 2, "cols": 4, "scens": 2}], "seeds": [1],
            "configs": [{"cut": "I", "backward": "alternating"},
                        {"cut": "I", "backward": "sideways"}], "M": 2}
    g = tmp_path / "grid.json"
    g.write_text(json.dumps(grid))
    out = tmp_path / "b.csv"
    assert main(["bench", str(g), "--out", str(out), "--no-timing"]) == 0
    row = _rows(out)[0]
    assert row["failures"] == "1"
    assert float(row["IA-gap"]) >= 0.0
