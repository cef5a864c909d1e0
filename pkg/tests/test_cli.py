import json
import subprocess
import sys

import numpy as np
import pytest

from gsegraph.cli import main
from gsegraph.graph import default_gse_graph


def run(tmp_path, name, *args):
    out = tmp_path / name
    rc = main([*args, "--out", str(out)])
    return rc, out


def files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_spectrum_run(tmp_path):
    rc, out = run(tmp_path, "spec", "spectrum", "--count", "40", "--fold")
    assert rc == 0
    assert {"config.json", "report.json", "spectrum.csv"} <= set(files(out))
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["seed"] == 0 and cfg["topology_digest"] == default_gse_graph().closed().digest


def test_scatter_run_is_worker_independent(tmp_path):
    args = ["scatter", "--realizations", "3", "--n-k", "20", "--seed", "5"]
    rc1, a = run(tmp_path, "a", *args, "--workers", "1")
    rc2, b = run(tmp_path, "b", *args, "--workers", "2")
    assert rc1 == rc2 == 0
    assert files(a) == files(b)
    assert "samples.csv" in files(a)


def test_rmt_run_is_worker_independent(tmp_path):
    args = ["rmt", "--n", "40", "--realizations", "3", "--tau-abs", "5", "--seed", "3"]
    _, a = run(tmp_path, "a", *args)
    _, b = run(tmp_path, "b", *args, "--workers", "2")
    assert files(a) == files(b)


def test_stats_from_spectrum_file(tmp_path):
    _, spec = run(tmp_path, "spec", "spectrum", "--count", "1200")
    rc, out = run(tmp_path, "stats", "stats", "--spectrum", str(spec / "spectrum.csv"), "--windows", "100",
                  "--l-max", "5", "--n-l", "5")
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert len(rep["number_variance"]) == 5
    assert (out / "stats_spacing.csv").exists() and (out / "stats_long_range.csv").exists()


def test_sweep_run(tmp_path):
    rc, out = run(tmp_path, "sw", "sweep", "--increments", "8", "--n-k", "10", "--band", "100", "101")
    assert rc == 0
    amp = np.loadtxt(out / "sweep.csv", delimiter=",")
    assert amp.shape == (8, 10) and amp[0].max() < 1e-10


def test_compare_exit_codes(tmp_path):
    _, a = run(tmp_path, "a", "scatter", "--realizations", "2", "--n-k", "50")
    _, b = run(tmp_path, "b", "scatter", "--realizations", "2", "--n-k", "50", "--eps", "0.5")
    rc, out = run(tmp_path, "same", "compare", str(a), str(a))
    assert rc == 0 and json.loads((out / "report.json").read_text())["status"] == "pass"
    rc, _ = run(tmp_path, "diff", "compare", str(a), str(b))
    assert rc == 2
    rc, _ = run(tmp_path, "dev", "compare", str(a), str(a), "--expect", "im_S1_2bar=deviate")
    assert rc == 2


@pytest.mark.parametrize("args", [
    ["rmt", "--tau-abs", "-1"],
    ["scatter", "--eps", "-0.1"],
    ["stats", "--spectrum", "/nonexistent/spectrum.csv"],
    ["compare", "/nonexistent/a", "/nonexistent/b"],
    ["compare", ".", ".", "--expect", "im_S1_2bar=maybe"],
])
def test_errors_exit_one(tmp_path, args):
    rc, _ = run(tmp_path, "err", *args)
    assert rc == 1


def test_graph_config_file(tmp_path):
    path = tmp_path / "g.json"
    path.write_text(default_gse_graph().to_json())
    rc, out = run(tmp_path, "cfg", "spectrum", "--count", "10", "--config", str(path))
    assert rc == 0


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "gsegraph.cli", "spectrum", "--count", "4",
                        "--out", str(tmp_path / "o")], capture_output=True)
    assert r.returncode == 0
    r = subprocess.run([sys.executable, "-m", "gsegraph.cli", "bogus"], capture_output=True)
    assert r.returncode != 0
