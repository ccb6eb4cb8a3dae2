import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

import survsel.harness
from survsel import generate_toy_dataset
from survsel.cli import main
from survsel.exceptions import NumericalError


@pytest.fixture()
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    d, _ = generate_toy_dataset(300, n_noise=4, seed=1)
    frame = d.frame.copy()
    frame["site"] = np.where(np.arange(300) % 3 == 0, "north", "south")
    frame.loc[4, "x1"] = np.nan
    frame["time"], frame["event"] = d.time, d.event
    frame.to_csv("raw.csv", index=False)
    columns = {name: "numeric" for name in d.feature_names}
    columns.update(site="categorical", time="time", event="event")
    (tmp_path / "schema.json").write_text(json.dumps({"columns": columns, "num_events": 2}))
    (tmp_path / "manifest.json").write_text(json.dumps({
        "data": {"prepared": "prep"}, "variants": ["plain", "filter-svm"], "folds": 2,
        "model": {"max_epochs": 2, "shared_width": 8, "cause_width": 8, "n_selected": 3},
        "search": {"iterations": 1}, "output_dir": "out"}))
    return tmp_path


def run(*argv):
    return main(list(argv))


def test_full_workflow(workspace, capsys):
    assert run("prepare", "--input", "raw.csv", "--schema", "schema.json", "--out", "prep") == 0
    assert "prepared 300 records x 11 features" in capsys.readouterr().out

    assert run("augment", "--input", "prep", "--synth", "2", "--seed", "4") == 0
    meta = json.loads((workspace / "prep_synth2" / "meta.json").read_text())
    assert [f["name"] for f in meta["features"]][-2:] == ["synth0", "synth1"]

    assert run("train", "--variant", "filter-svm", "--manifest", "manifest.json") == 0
    ckpt = workspace / "out" / "filter-svm_fold0.npz"
    assert ckpt.exists()
    log = pd.read_csv(workspace / "out" / "filter-svm_fold0_log.csv")
    assert log["epoch"].iloc[0] == 0

    assert run("evaluate", "--model", str(ckpt), "--data", "prep", "--horizons", "12,60",
               "--out", "eval.csv") == 0
    assert len(pd.read_csv("eval.csv")) == 4

    assert run("rank-features", "--method", "relieff", "--data", "prep", "--top", "3",
               "--out", "rank.csv") == 0
    ranks = pd.read_csv("rank.csv")
    assert list(ranks["rank"]) == [1, 2, 3, 1, 2, 3]

    assert run("rank-features", "--method", "permutation", "--data", "prep", "--model",
               str(ckpt), "--repeats", "1") == 0

    assert run("search", "--manifest", "manifest.json") == 0
    assert (workspace / "out" / "summary.csv").exists()

    assert run("degradation", "--counts", "0,1", "--variants", "plain", "--manifest",
               "manifest.json", "--out", "deg") == 0
    curve = pd.read_csv(workspace / "deg" / "degradation.csv")
    assert sorted(set(curve["count"])) == [0, 1]


def test_usage_errors_exit_1(workspace, capsys):
    assert run("train", "--variant", "plain", "--manifest", "absent.json") == 1
    with pytest.raises(SystemExit) as info:
        run("train", "--variant", "nope", "--manifest", "manifest.json")
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        run()
    assert info.value.code == 1
    (workspace / "bad.json").write_text(json.dumps({"data": {}}))
    assert run("search", "--manifest", "bad.json") == 1
    assert run("rank-features", "--method", "permutation", "--data", "prep") == 1


def test_data_errors_exit_2(workspace):
    (workspace / "broken.csv").write_text("x0,time,event\n1,2,1\n1,-3,0\n")
    (workspace / "s.json").write_text(json.dumps(
        {"columns": {"x0": "numeric", "time": "time", "event": "event"}}))
    assert run("prepare", "--input", "broken.csv", "--schema", "s.json", "--out", "p") == 2
    assert run("augment", "--input", "missing_dir", "--synth", "1") == 2


def test_numerical_failure_exits_3(workspace, monkeypatch):
    def explode(*args, **kwargs):
        raise NumericalError("non-finite loss at epoch 1, batch 0", epoch=1, batch=0)

    monkeypatch.setattr(survsel.harness, "train_variant", explode)
    assert run("train", "--variant", "plain", "--manifest", "manifest.json") == 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "survsel", "--help"], capture_output=True,
                         text=True, check=True).stdout
    for command in ("prepare", "augment", "train", "search", "evaluate", "rank-features",
                    "degradation"):
        assert command in out
