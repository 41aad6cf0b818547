import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from pvrf.cli import main, parse_predicate, subgroup_summary
from pvrf.errors import DataError


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--scenario", 3, "--censoring", 50, "--n", 150, "--reps", 2, "--pilot-n", 5000,
               "--seed", 7, "--out", d) == 0
    return d


def test_help_and_version(capsys):
    assert run("--help") == 0
    assert run("fit", "--help") == 0
    assert run("--version") == 0
    assert "pvrf" in capsys.readouterr().out
    assert run() == 1


def test_simulate_outputs(sim):
    stem = "scenario3_c50"
    grid = read_csv(sim / f"{stem}_taugrid.csv")
    assert [r["quantile"] for r in grid] == ["q50", "q60", "q70", "q80", "q90"]
    taus = [float(r["tau"]) for r in grid]
    assert taus == sorted(taus) and float(grid[0]["t0"]) == pytest.approx(taus[2])
    data = read_csv(sim / f"{stem}_rep0.csv")
    truth = read_csv(sim / f"{stem}_rep0_truth.csv")
    assert len(data) == len(truth) == 150
    for d, t in zip(data, truth):
        assert d["id"] == t["id"]
        assert float(d["time"]) == min(float(t["event_time"]), float(t["censor_time"]))
        assert float(t["rmst_q50"]) <= taus[0] + 1e-12
    assert (sim / f"{stem}_rep1.csv").read_bytes() != (sim / f"{stem}_rep0.csv").read_bytes()
    meta = json.loads((sim / f"{stem}_rep0.csv.meta.json").read_text())
    assert meta["command"] == "simulate" and meta["seed"] == 7 and meta["tool"] == "pvrf"
    assert "threads" not in meta["params"] and meta["params"]["n"] == 150


def test_pipeline_fit_predict_contrast(sim, tmp_path):
    data, schema = sim / "scenario3_c50_rep0.csv", sim / "scenario3_c50_schema.json"
    pv = tmp_path / "pv.csv"
    assert run("pseudo", "--data", data, "--schema", schema, "--tau", 1.0, "--seed", 1, "--out", pv) == 0
    naive = tmp_path / "pvn.csv"
    assert run("pseudo", "--data", data, "--schema", schema, "--tau", 1.0, "--seed", 1, "--method", "naive",
               "--threads", 1, "--out", naive) == 0
    a = [float(r["pseudo_value"]) for r in read_csv(pv)]
    b = [float(r["pseudo_value"]) for r in read_csv(naive)]
    np.testing.assert_allclose(a, b, atol=1e-10)

    model = tmp_path / "m.json"
    assert run("fit", "--data", data, "--schema", schema, "--tau", 1.0, "--algorithm", "cart", "--n-trees", 10,
               "--seed", 3, "--threads", 1, "--out", model) == 0
    meta = json.loads((tmp_path / "m.json.meta.json").read_text())
    assert meta["inputs"][str(data)] == hashlib.sha256(data.read_bytes()).hexdigest()
    pred = tmp_path / "p.csv"
    assert run("predict", "--model", model, "--data", data, "--id-col", "id", "--seed", 3, "--out", pred) == 0
    rows = read_csv(pred)
    assert len(rows) == 150 and all(np.isfinite(float(r["rmst"])) for r in rows)

    con = tmp_path / "c.json"
    assert run("contrast", "--model", model, "--data", data, "--treatment-col", "trt", "--level-a", "A",
               "--level-b", "B", "--seed", 3, "--out", con) == 0
    out = json.loads(con.read_text())
    vals = [r["contrast"] for r in out["rows"]]
    assert out["n"] == 150 and out["summary"]["average"] == pytest.approx(np.mean(vals))
    assert run("contrast", "--model", model, "--data", data, "--treatment-col", "trt", "--level-a", "A",
               "--level-b", "B", "--tau", 2.0, "--seed", 3, "--out", con) == 2

    sub = tmp_path / "s.csv"
    assert run("subgroups", "--predictions", pred, "--data", data, "--group", "b=trt == 'B'",
               "--group", "all=True", "--group", "none=x1 > 1e9", "--seed", 0, "--out", sub) == 0
    g = {r["group"]: r for r in read_csv(sub)}
    assert int(g["all"]["count"]) == 150 and g["none"]["count"] == "0" and g["none"]["mean"] == ""
    p = np.array([float(r["rmst"]) for r in rows])
    isb = np.array([r["trt"] == "B" for r in read_csv(data)])
    assert float(g["b"]["mean"]) == pytest.approx(p[isb].mean(), rel=1e-12)

    assert run("subgroups", "--predictions", pred, "--data", data, "--group", "noequals", "--seed", 0,
               "--out", sub) == 1
    assert run("subgroups", "--predictions", data, "--data", data, "--group", "a=True", "--seed", 0,
               "--out", sub) == 2

    shap = tmp_path / "sh.csv"
    assert run("shapley", "--model", model, "--data", data, "--rows", 2, "--background", 20, "--permutations", 10,
               "--seed", 4, "--out", shap) == 0
    srows = read_csv(shap)
    assert len({r["entity"] for r in srows}) == 2


def test_evaluate_and_importance(sim, tmp_path):
    data, schema = sim / "scenario3_c50_rep0.csv", sim / "scenario3_c50_schema.json"
    ev = tmp_path / "ev.csv"
    assert run("evaluate", "--data", data, "--schema", schema, "--tau", 1.0, "--method", "gee", "--folds", 3,
               "--level-a", "A", "--level-b", "B", "--seed", 2, "--out", ev) == 0
    rows = read_csv(ev)
    assert {r["metric"] for r in rows} == {"wrss", "contrast"}
    assert [r["fold"] for r in rows if r["metric"] == "wrss"] == ["1", "2", "3", "mean", "min", "max"]
    imp = tmp_path / "imp.csv"
    assert run("importance", "--data", data, "--schema", schema, "--tau", 1.0, "--method", "gee", "--folds", 3,
               "--seed", 2, "--out", imp) == 0
    assert "x1" in {r["entity"] for r in read_csv(imp)}
    assert run("evaluate", "--data", data, "--schema", schema, "--tau", 1.0, "--method", "reference",
               "--seed", 2, "--out", ev) == 1


def test_usage_errors(sim, tmp_path, capsys):
    data, schema = sim / "scenario3_c50_rep0.csv", sim / "scenario3_c50_schema.json"
    out = tmp_path / "x.json"
    assert run("fit", "--data", data, "--schema", schema, "--model", "gee", "--seed", 1, "--out", out) == 1
    assert "--tau" in capsys.readouterr().err
    assert run("fit", "--data", data, "--schema", schema, "--tau", 1, "--model", "gee", "--out", out) == 1
    assert "--seed" in capsys.readouterr().err
    assert run("fit", "--data", data, "--schema", schema, "--tau", 1, "--seed", 1, "--out", out) == 1
    assert run("fit", "--data", data, "--schema", schema, "--tau", 1, "--seed", 1, "--model", "gee",
               "--algorithm", "cart", "--out", out) == 1
    assert run("fit", "--bogus", "--seed", 1) == 1
    assert run("fit", "--data", data, "--schema", schema, "--tau", 1, "--seed", 1, "--algorithm", "cart",
               "--mtry", "lots", "--out", out) == 1


def test_config_merge(sim, tmp_path):
    data, schema = sim / "scenario3_c50_rep0.csv", sim / "scenario3_c50_schema.json"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data": str(data), "schema": str(schema), "tau": 2.0, "seed": 5, "model": "gee"}))
    out = tmp_path / "m.json"
    assert run("fit", "--config", cfg, "--tau", 1.0, "--out", out) == 0
    assert json.loads(out.read_text())["tau"] == 1.0          # flag beats config
    meta = json.loads((tmp_path / "m.json.meta.json").read_text())
    assert meta["seed"] == 5 and meta["params"]["model"] == "gee" and "config" not in meta["params"]
    cfg.write_text(json.dumps({"seed": 5, "no_such_option": 1}))
    assert run("fit", "--config", cfg, "--out", out) == 1
    cfg.write_text("not json")
    assert run("fit", "--config", cfg, "--out", out) == 1


def test_data_and_numeric_exit_codes(tmp_path):
    schema = tmp_path / "s.json"
    schema.write_text(json.dumps({"time": "time", "status": "status", "columns": {"x": "continuous"}}))
    bad = tmp_path / "bad.csv"
    bad.write_text("time,status,x\n1,1,0.5\n-2,0,0.1\n3,1,0.2\n")
    out = tmp_path / "o.csv"
    assert run("pseudo", "--data", bad, "--schema", schema, "--tau", 1, "--seed", 1, "--out", out) == 2
    assert run("pseudo", "--data", tmp_path / "missing.csv", "--schema", schema, "--tau", 1, "--seed", 1,
               "--out", out) == 2
    typo = tmp_path / "typo.json"
    typo.write_text(json.dumps({"time": "time", "status": "status", "covariates": {"x": "continuous"}}))
    assert run("pseudo", "--data", bad, "--schema", typo, "--tau", 1, "--seed", 1, "--out", out) == 2
    # perfectly separated covariate: Cox partial likelihood has no finite maximum
    sep = tmp_path / "sep.csv"
    rows = [f"{t},1,{1.0 if t <= 10 else 0.0}" for t in range(1, 21)]
    sep.write_text("time,status,x\n" + "\n".join(rows) + "\n")
    assert run("fit", "--data", sep, "--schema", schema, "--tau", 5, "--model", "cox", "--seed", 1,
               "--out", tmp_path / "m.json") == 3


def _study(cwd, threads):
    argv = [sys.executable, "-m", "pvrf.cli", "study", "--scenario", "1", "3", "--censoring", "50",
            "--reps", "2", "--n-train", "80", "--n-test", "40", "--methods", "km", "gee", "cart",
            "--quantiles", "50", "--n-trees", "5", "--pilot-n", "5000", "--seed", "9",
            "--threads", str(threads), "--out", "res"]
    subprocess.run(argv, cwd=cwd, check=True)
    return {p.name: p.read_bytes() for p in sorted((cwd / "res").iterdir())}


def test_study_byte_identical_across_threads(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = _study(tmp_path / "a", 1)
    b = _study(tmp_path / "b", 3)
    assert set(a) == {"results.csv", "results_long.csv", "results.csv.meta.json", "results_long.csv.meta.json"}
    assert a == b


def test_parse_predicate():
    row = {"age": "70", "er": "pos", "grade": "2"}
    assert parse_predicate("age >= 65 and er == 'pos'")(row)
    assert not parse_predicate("not (grade in [1, 2])")(row)
    assert parse_predicate("60 < age <= 70")(row)
    assert parse_predicate("er != 'neg' or age < 0")(row)
    assert parse_predicate("age > -1")(row)
    assert not parse_predicate("er > 3")(row)          # mixed types never match
    with pytest.raises(DataError):
        parse_predicate("weight > 3")(row)
    for bad in ("__import__('os')", "age + 1 > 2", "age.real > 1", "age >"):
        with pytest.raises(Exception) as exc:
            parse_predicate(bad)(row)
        assert type(exc.value).__name__ in ("UsageError", "DataError")


def test_subgroup_summary_examples():
    rows = [{"g": "a"}, {"g": "a"}, {"g": "b"}, {"g": "c"}]
    out = subgroup_summary([1.0, 3.0, 5.0, 7.0], rows,
                           [("a", "g == 'a'"), ("b", "g == 'b'"), ("z", "g == 'z'"), ("ab", "g in ('a', 'b')")])
    assert [(o.count, o.mean) for o in out] == [(2, 2.0), (1, 5.0), (0, None), (3, 3.0)]
    assert out[0].sd == pytest.approx(np.sqrt(2)) and out[1].sd is None and out[3].sd == pytest.approx(2.0)
    with pytest.raises(DataError):
        subgroup_summary([1.0], rows, [("a", "True")])
