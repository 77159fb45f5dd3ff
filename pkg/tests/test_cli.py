import json

import numpy as np
import pytest

from dchawkes.cli import main
from dchawkes.dataio import read_params
from dchawkes.events import EventLog

PARAMS = """model = sr
K = 2
variant = restricted_r
M = 0.03 0.003; 0.003 0.03
alpha_n = 0.2 0.2; 0.2 0.2
alpha_r = 0.2 0.2; 0.2 0.2
beta_n = 1 1; 1 1
beta_r = 1 1; 1 1
"""


@pytest.fixture
def sim(tmp_path):
    (tmp_path / "p.txt").write_text(PARAMS)
    out = tmp_path / "ev.csv"
    assert main(["simulate", "--params", str(tmp_path / "p.txt"), "--n", "12", "--T", "500", "--seed", "3",
                 "--out", str(out)]) == 0
    full = EventLog.from_csv(out)
    full.window(0.0, 400.0).to_csv(tmp_path / "train.csv")
    full.window(400.0, 500.0, closed_left=False).to_csv(tmp_path / "test.csv")
    return tmp_path


def test_simulate_writes_events_and_labels(sim):
    log = EventLog.from_csv(sim / "ev.csv")
    assert log.n == 12 and log.horizon_T == 500.0 and len(log) > 0
    assert np.loadtxt(sim / "ev.labels.txt", dtype=int).tolist() == [0] * 6 + [1] * 6


def test_fit_eval_select_k(sim, capsys):
    assert main(["fit", "--events", str(sim / "train.csv"), "--K", "2", "--refine", "--out",
                 str(sim / "fit.params")]) == 0
    params, meta = read_params(sim / "fit.params")
    assert params.K == 2 and meta["events"] > 0 and len(meta["config_hash"]) == 12
    assert (sim / "fit.labels.txt").exists() and (sim / "fit.json").exists()
    capsys.readouterr()
    assert main(["eval", "--events", str(sim / "train.csv"), "--test", str(sim / "test.csv"), "--params",
                 str(sim / "fit.params"), "--labels", str(sim / "fit.labels.txt"), "--delta", "1",
                 "--n-intervals", "10", "--out", str(sim / "eval.jsonl")]) == 0
    rows = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert [r["metric"] for r in rows] == ["test_loglik_per_event", "dynamic_link_auc"]
    assert all(np.isfinite(r["mean"]) for r in rows)
    assert len((sim / "eval.jsonl").read_text().splitlines()) == 2
    assert main(["select-k", "--events", str(sim / "train.csv"), "--test", str(sim / "test.csv"),
                 "--K-list", "1", "2"]) == 0
    assert "best K = 2" in capsys.readouterr().out


def test_config_file_with_relative_paths(sim):
    (sim / "fit.cfg").write_text("events = train.csv\nK = 2\nout = viaconfig.params\n")
    assert main(["fit", "--config", str(sim / "fit.cfg")]) == 0
    assert (sim / "viaconfig.params").exists()


def test_exit_codes(tmp_path):
    assert main(["fit", "--events", str(tmp_path / "missing.csv"), "--K", "2"]) == 2
    assert main(["fit", "--config", str(tmp_path / "missing.cfg")]) == 2
    (tmp_path / "bad.cfg").write_text("K = 2\nK = 3\n")
    assert main(["fit", "--config", str(tmp_path / "bad.cfg")]) == 2
    assert main(["experiment"]) == 2
    unstable = PARAMS.replace("alpha_n = 0.2 0.2; 0.2 0.2", "alpha_n = 0.9 0.9; 0.9 0.9")
    (tmp_path / "u.txt").write_text(unstable)
    assert main(["simulate", "--params", str(tmp_path / "u.txt"), "--n", "4", "--T", "10",
                 "--out", str(tmp_path / "u.csv")]) == 1


def test_experiment_from_config(tmp_path):
    (tmp_path / "exp.cfg").write_text(
        "preset = gamma_max\nreplicates = 1\ngrid.s = 0 0.4\nfixed.n = 10\nfixed.T = 30\nname = mini\n"
        f"output_dir = {tmp_path}\n")
    assert main(["experiment", "--config", str(tmp_path / "exp.cfg"), "--threads", "2"]) == 0
    assert (tmp_path / "mini.csv").exists() and (tmp_path / "mini.manifest.jsonl").exists()
