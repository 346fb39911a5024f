import csv

import numpy as np
import pytest

from mvforest import cli, concrete, grid
from mvforest.simgen import CovarianceSpec

UCI_HEADER = ("No,Cement,Slag,Fly ash,Water,SP,Coarse Aggr.,Fine Aggr.,SLUMP(cm),FLOW(cm),"
              "Compressive Strength (28-day)(Mpa)")


def write_slump(path, n=103, seed=0, mutate=None):
    """Synthetic file in the UCI slump layout (record number, 7 features, 3 outputs)."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(50, 400, size=(n, 7))
    Y = np.column_stack([X[:, 3] / 10 + rng.normal(size=n), X[:, 3] / 5 + rng.normal(size=n),
                         X[:, 0] / 8 + rng.normal(size=n)])
    lines = [UCI_HEADER]
    for i in range(n):
        lines.append(",".join([str(i + 1)] + [f"{v:.4f}" for v in np.r_[X[i], Y[i]]]))
    if mutate:
        mutate(lines)
    path.write_text("\n".join(lines) + "\n")
    return X, Y


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- concrete loader

def test_load_well_formed(tmp_path):
    X, Y = write_slump(tmp_path / "slump.data")
    data = concrete.load_concrete(tmp_path / "slump.data")
    assert (data.n, data.p, data.d) == (103, 7, 3)
    np.testing.assert_allclose(data.features, np.round(X, 4))
    np.testing.assert_allclose(data.outputs, np.round(Y, 4))
    assert data.output_names == ("slump", "flow", "cs")


def test_load_global_standardization(tmp_path):
    write_slump(tmp_path / "slump.data")
    Y = concrete.load_concrete(tmp_path / "slump.data", standardize=True).outputs
    assert np.all(np.abs(Y.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(Y.var(axis=0, ddof=1) - 1) < 1e-9)


def _blank_cell(lines):
    cells = lines[5].split(",")
    cells[4] = ""
    lines[5] = ",".join(cells)


@pytest.mark.parametrize("mutate,line,fragment", [
    (_blank_cell, 6, "missing value"),
    (lambda lines: lines.__setitem__(9, lines[9] + ",1.0"), 10, "12 columns"),
    (lambda lines: lines.__setitem__(3, lines[3].replace(",", ",abc,", 1).rsplit(",", 1)[0]),
     4, "non-numeric"),
])
def test_load_errors_name_the_line(tmp_path, mutate, line, fragment):
    write_slump(tmp_path / "bad.data", mutate=mutate)
    with pytest.raises(concrete.ConcreteParseError, match=fragment) as info:
        concrete.load_concrete(tmp_path / "bad.data")
    assert info.value.line == line
    assert f":{line}:" in str(info.value)


def test_load_wrong_header(tmp_path):
    (tmp_path / "h.data").write_text("a,b,c\n1,2,3\n")
    with pytest.raises(concrete.ConcreteParseError):
        concrete.load_concrete(tmp_path / "h.data")


def test_output_subsets():
    subsets = concrete.output_subsets(3)
    assert subsets == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


def test_run_concrete_structure(tmp_path):
    write_slump(tmp_path / "s.data", n=40)
    data = concrete.load_concrete(tmp_path / "s.data")
    rows = concrete.run_concrete(data, methods=["rf_univ", "rf_multi"], repetitions=2,
                                 num_trees=20, standardize="global")
    cv = [r for r in rows if r["table"] == "cv"]
    loo = [r for r in rows if r["table"] == "loocv"]
    assert len(cv) == 2 * 7 and len(loo) == 2
    assert all(r["folds"] == 40 and r["outputs"] == "slump+flow+cs" for r in loo)
    # the two RF variants coincide on every single-output column
    by = {(r["method"], r["outputs"]): r for r in cv}
    for out in ("slump", "flow", "cs"):
        assert by[("rf_univ", out)]["overall_mse"] == by[("rf_multi", out)]["overall_mse"]
        assert by[("rf_univ", out)][f"mse_{out}"] == by[("rf_univ", out)]["overall_mse"]
    tri = by[("rf_univ", "slump+flow+cs")]
    assert tri["sum_of_mse"] == pytest.approx(3 * tri["overall_mse"])
    with pytest.raises(ValueError):
        concrete.run_concrete(data, standardize="none")


def test_concrete_cli(tmp_path):
    write_slump(tmp_path / "s.data", n=30)
    out = tmp_path / "c.csv"
    code = cli.main(["concrete", "--data", str(tmp_path / "s.data"), "--methods", "et_mt",
                     "--reps", "1", "--trees", "5", "--no-loocv", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 7 and rows[0].keys() == set(concrete.RESULT_COLUMNS)


def test_concrete_cli_missing_file(tmp_path, capsys):
    code = cli.main(["concrete", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------- simulation grid

def test_select_errors():
    assert len(grid.select_errors()) == 5
    assert grid.select_errors([0.0], [2]) == [CovarianceSpec(0.0, 1)]
    assert grid.select_errors([0.9]) == [CovarianceSpec(0.9, 1), CovarianceSpec(0.9, 2)]
    assert grid.select_errors(None, [2]) == [CovarianceSpec(0.0, 1), CovarianceSpec(0.5, 2),
                                             CovarianceSpec(0.9, 2)]


def test_full_grid_has_495_settings():
    assert len(grid.ExperimentConfig().settings) == 495


@pytest.mark.parametrize("kwargs", [{"methods": ["xgb"]}, {"repetitions": 0}, {"folds": 1},
                                    {"sizes": []}, {"methods": []}])
def test_invalid_experiment(kwargs):
    with pytest.raises(ValueError):
        grid.ExperimentConfig(**kwargs)


def test_simulate_filter_row_count(tmp_path):
    out, summary = tmp_path / "g.csv", tmp_path / "s.csv"
    code = cli.main(["simulate", "--models", "cross", "--dependence", "independent",
                     "--rho", "0.5", "--ell", "2", "--n", "100", "--methods", "rf_multi,et_mt",
                     "--reps", "3", "--trees", "5", "--out", str(out), "--summary", str(summary)])
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 6
    assert list(rows[0].keys()) == list(grid.GRID_COLUMNS)
    assert {(r["method"], r["repetition"]) for r in rows} == {
        (m, str(i)) for m in ("rf_multi", "et_mt") for i in range(3)}
    assert all(r["rho"] == "0.5" and r["ell"] == "2" and r["unstable"] == "false" for r in rows)
    for r in rows:
        mses = [float(r[f"mse_y{j}"]) for j in (1, 2, 3)]
        assert float(r["overall_mse"]) == pytest.approx(np.mean(mses))
        assert float(r["fit_seconds"]) > 0
    summ = read_csv(summary)
    assert len(summ) == 2 and all(s["repetitions"] == "3" for s in summ)
    mean = np.mean([float(r["overall_mse"]) for r in rows if r["method"] == "rf_multi"])
    assert float(summ[0]["mean_overall_mse"]) == pytest.approx(mean)


def test_simulate_is_deterministic_and_worker_independent(tmp_path):
    args = ["simulate", "--models", "jump", "mgam1", "--dependence", "weakly_dependent",
            "--rho", "0", "--n", "100", "--methods", "et_univ", "--reps", "2", "--trees", "4"]
    paths = []
    for i, workers in enumerate((1, 1, 2)):
        paths.append(tmp_path / f"r{i}.csv")
        assert cli.main(args + ["--workers", str(workers), "--out", str(paths[-1])]) == 0
    # fit_seconds differs between runs; everything else must not
    strip = [[{k: v for k, v in r.items() if k != "fit_seconds"} for r in read_csv(p)]
             for p in paths]
    assert strip[0] == strip[1] == strip[2]
    flags = {r["model"]: r["unstable"] for r in read_csv(paths[0])}
    assert flags == {"jump": "false", "mgam1": "true"}


def test_simulate_failure_exit_code(tmp_path, monkeypatch):
    def boom(setting, config):
        raise FloatingPointError("nan")

    monkeypatch.setattr(grid, "run_cell", boom)
    code = cli.main(["simulate", "--models", "cubic", "--dependence", "independent", "--rho", "0",
                     "--n", "100", "--reps", "1", "--out", str(tmp_path / "g.csv")])
    assert code == 1
    assert read_csv(tmp_path / "g.csv") == []


@pytest.mark.parametrize("argv", [
    ["simulate", "--models", "nonsense"],
    ["simulate", "--models", "cubic", "--rho", "0.7"],
    ["simulate", "--models", "cubic", "--methods", "gbm"],
])
def test_invalid_filters_exit_2(tmp_path, argv):
    assert cli.main(argv + ["--out", str(tmp_path / "x.csv")]) == 2


def test_unwritable_output_exit_2(tmp_path):
    out = tmp_path / "missing_dir" / "g.csv"
    assert cli.main(["gen", "--model", "jump", "--out", str(out)]) == 2


def test_gen_writes_dataset(tmp_path):
    out = tmp_path / "d.csv"
    assert cli.main(["gen", "--model", "mgam2", "--dependence", "strongly_dependent",
                     "--rho", "0.9", "--ell", "2", "--n", "100", "--seed", "3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 100
    assert list(rows[0]) == [f"x{i}" for i in range(1, 11)] + ["y1", "y2", "y3"]


def test_bench_rows(tmp_path):
    out = tmp_path / "b.csv"
    assert cli.main(["bench", "--models", "additive", "--dependence", "independent", "--rho", "0",
                     "--n", "100", "--methods", "et_multi", "et_univ", "--reps", "2",
                     "--trees", "5", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r["method"] for r in rows] == ["et_multi", "et_univ"]
    for r in rows:
        assert float(r["min_seconds"]) <= float(r["mean_seconds"]) <= float(r["max_seconds"])
