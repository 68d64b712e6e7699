import csv
import json

import numpy as np
import pytest

from drrules.cli import main
from drrules.report import ExperimentReport, mean_ci, split_seeds


@pytest.fixture
def toy_csv(tmp_path):
    rng = np.random.default_rng(0)
    n = 40
    a = rng.integers(0, 2, n)
    b = rng.integers(0, 2, n)
    c = rng.normal(size=n).round(3)
    y = a & b
    path = tmp_path / "toy.csv"
    lines = ["a,b,c,label"] + [f"{a[i]},{b[i]},{c[i]},{y[i]}" for i in range(n)]
    path.write_text("\n".join(lines) + "\n")
    return path


FAST = ["--patience", "2", "--max-outer", "6"]


def test_train_then_eval(toy_csv, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--data", str(toy_csv), "--label-col", "label", "--out", str(out)] + FAST) == 0
    model = json.loads((out / "model.json").read_text())
    assert model["complexity"] <= 30
    assert (out / "model.txt").read_text().strip()
    hist = [json.loads(l) for l in (out / "history.jsonl").read_text().splitlines()]
    assert hist and all("seconds" not in h for h in hist)
    capsys.readouterr()
    metrics = tmp_path / "m.json"
    assert main(["eval", "--model", str(out / "model.json"), "--data", str(toy_csv),
                 "--label-col", "label", "--out", str(metrics)]) == 0
    m = json.loads(metrics.read_text())
    assert m["accuracy"] == 100.0
    assert m["tp"] + m["fp"] + m["tn"] + m["fn"] == 40
    assert all(0 <= r["firing_rate"] <= 1 for r in m["rules"])


def test_missing_data_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["train"])
    assert e.value.code == 2


def test_csv_without_schema_is_rejected(toy_csv, capsys):
    assert main(["train", "--data", str(toy_csv)]) == 1
    assert "label-col" in capsys.readouterr().err


def test_corrupt_model_file(toy_csv, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eval", "--model", str(bad), "--data", str(toy_csv), "--label-col", "label"]) == 1
    assert "cannot parse model file" in capsys.readouterr().err


def test_experiment_report(toy_csv, tmp_path, capsys):
    out = tmp_path / "rep.json"
    args = ["experiment", "--data", str(toy_csv), "--label-col", "label", "--splits", "2",
            "--workers", "1", "--out", str(out)] + FAST
    assert main(args) == 0
    table = capsys.readouterr().out
    assert "test acc %" in table
    d = json.loads(out.read_text())
    rep = ExperimentReport.from_dict(d)
    assert len(rep.records) == 2
    seeds = split_seeds(0, 2)
    assert [r["seed"] for r in rep.records] == seeds
    m, h = mean_ci([r["test_accuracy"] for r in rep.records])
    assert rep.aggregates["test_accuracy"] == {"mean": m, "ci95": h}
    assert "wall_seconds" not in rep.records[0]
    first = out.read_bytes()
    assert main(args) == 0
    assert out.read_bytes() == first


def test_report_rejects_tampering(toy_csv, tmp_path):
    out = tmp_path / "rep.json"
    main(["experiment", "--data", str(toy_csv), "--label-col", "label", "--splits", "2",
          "--workers", "1", "--out", str(out)] + FAST)
    d = json.loads(out.read_text())
    d["records"][0]["test_accuracy"] += 1.0
    with pytest.raises(ValueError):
        ExperimentReport.from_dict(d)


def test_cycling_csv(toy_csv, tmp_path, capsys):
    out = tmp_path / "cyc.csv"
    assert main(["cycling", "--data", str(toy_csv), "--label-col", "label", "--iters", "3",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 * 21
    assert rows[0].keys() == {"iteration", "bin", "instantaneous", "running_average"}
    last = [r for r in rows if r["iteration"] == "3"]
    assert sum(float(r["running_average"]) for r in last) == pytest.approx(40)
    assert "modes" in capsys.readouterr().err


def test_bounds_command(capsys):
    assert main(["bounds", "--N", "1000", "--d", "10", "--cmax", "19", "--cprime", "5"]) == 0
    out = capsys.readouterr().out
    assert "lambda_M" in out and "81" in out
    assert main(["bounds", "--N", "100", "--d", "2", "--cmax", "30"]) == 1
