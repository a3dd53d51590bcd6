import hashlib
import json

import numpy as np
import pytest

from intercause.cli import main, read_config
from intercause.rates import ASBESTOS_COUNTS, write_counts_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def counts_csv(tmp_path):
    path = tmp_path / "counts.csv"
    write_counts_csv(ASBESTOS_COUNTS, path)
    return str(path)


def test_bounds_json(capsys, counts_csv):
    code, out, _ = run(capsys, "bounds", counts_csv, "--evidence", "1,1,1")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"]
    assert doc["classes"]["0000"]["lower"] == pytest.approx(1 - 141 / 3130)
    assert list(doc["posteriors"]) == ["1,1,1"]


def test_bounds_infeasible_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("z,m,cases,total\n0,0,50,100\n0,1,10,100\n1,0,10,100\n1,1,20,100\n")
    code, _, err = run(capsys, "bounds", str(path))
    assert code == 2
    assert "violations" in err


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bounds"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["fit", "x.csv", "--restriction", "bogus"])
    assert info.value.code == 1


def test_missing_file_exit_three(capsys):
    code, _, _ = run(capsys, "fit", "/nonexistent/data.csv")
    assert code == 3


def test_missing_w_column_is_schema_error(capsys, tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("z,m,y,x1\n0,0,1,0.2\n")
    code, _, err = run(capsys, "fit", str(path))
    assert code == 3 and "w" in err


def test_maxent_table_uses_percentages(capsys, counts_csv):
    code, out, _ = run(capsys, "maxent", counts_csv, "--evidence", "1,1,1", "--format", "table")
    assert code == 0 and "%" in out


def test_maxent_json_uses_decimals(capsys, counts_csv):
    _, out, _ = run(capsys, "maxent", counts_csv)
    doc = json.loads(out)
    assert all(0 <= v <= 1 for v in doc["classes"].values())


def test_simulate_asbestos_row_count(tmp_path, capsys):
    out = tmp_path / "rep.csv"
    assert run(capsys, "simulate", "--design", "asbestos", "--out", str(out))[0] == 0
    assert len(out.read_text().splitlines()) == 21319 + 1


def test_simulate_same_seed_same_hash(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        run(capsys, "simulate", "--n", "1000", "--error-dist", "t5", "--seed", "8", "--ground-truth", "--out", str(p))
    assert hashlib.sha256(a.read_bytes()).hexdigest() == hashlib.sha256(b.read_bytes()).hexdigest()
    header = a.read_text().splitlines()[0]
    assert header == "z,m,y,w,x1,x2,class"


def test_fit_attribute_pipeline(tmp_path, capsys):
    data = tmp_path / "d.csv"
    fit = tmp_path / "fit.json"
    run(capsys, "simulate", "--n", "300", "--seed", "2", "--out", str(data))
    assert run(capsys, "fit", str(data), "--n-starts", "2", "--seed", "5", "--out", str(fit))[0] == 0
    first = fit.read_text()
    run(capsys, "fit", str(data), "--n-starts", "2", "--seed", "5", "--out", str(fit))
    assert fit.read_text() == first
    doc = json.loads(first)
    assert {"theta", "beta", "loglik", "aic", "iterations", "converged", "schema_version"} <= set(doc)

    code, _, _ = run(capsys, "attribute", str(fit), "--evidence", "1,1,1")
    assert code == 1  # covariates present, no data to average over
    code, out, _ = run(capsys, "attribute", str(fit), "--evidence", "1,1,1", "--data", str(data), "--shares", "default")
    post = json.loads(out)
    assert sum(post["posterior"].values()) == pytest.approx(1.0)
    assert sum(post["shares"].values()) == pytest.approx(1.0)

    curve = tmp_path / "curve.csv"
    code, _, _ = run(capsys, "attribute", str(fit), "--evidence", "1,1,1", "--data", str(data),
                     "--curve=-10:10:41", "--format", "csv", "--out", str(curve))
    assert code == 0
    lines = curve.read_text().splitlines()
    assert lines[0] == "w,class,probability" and len(lines) == 1 + 41 * 5
    side = json.loads((tmp_path / "curve.csv.crossings.json").read_text())
    assert side["evidence"] == "1,1,1" and "schema_version" in side


def test_fit_config_file(tmp_path, capsys):
    data = tmp_path / "d.csv"
    cfg = tmp_path / "em.cfg"
    cfg.write_text("# settings\nn_starts = 1\nmax_iter = 5\n")
    run(capsys, "simulate", "--n", "200", "--out", str(data))
    code, out, _ = run(capsys, "fit", str(data), "--config", str(cfg))
    assert code == 0 and json.loads(out)["iterations"] <= 5
    assert read_config(cfg) == {"n_starts": "1", "max_iter": "5"}


def test_bootstrap_constant(tmp_path, capsys):
    data = tmp_path / "d.csv"
    run(capsys, "simulate", "--n", "100", "--out", str(data))
    code, out, _ = run(capsys, "bootstrap", str(data), "--pipeline", "constant", "-B", "10")
    doc = json.loads(out)
    assert code == 0 and doc["B"] == 10 and doc["estimates"]["constant"]["se"] == 0.0
