import json
import subprocess
import sys

import numpy as np
import pytest

from builders import random_tensor
from ssbounds.cli import main
from ssbounds.simlab import DataSampler, ExperimentConfig
from ssbounds.tensor import LossTensor
from ssbounds.tensorio import read_report, write_tensor


def run(*argv):
    try:
        return main(list(argv))
    except SystemExit as e:
        return e.code


@pytest.fixture
def tensor_file(tmp_path, rng):
    p = tmp_path / "t.json"
    write_tensor(random_tensor(rng, 2, 6, 3), p)
    return p


@pytest.fixture
def config_file(tmp_path):
    cfg = ExperimentConfig(sampler=DataSampler(class_sep=2.0), k1=2, k2=4, n_grid=(3, 5), surrogate_cap=5.0)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    return p


def test_channel_output(capsys):
    assert run("channel", "z", "--q", "0.5") == 0
    out = capsys.readouterr().out.strip()
    assert out.startswith("capacity_bits=0.321928095")
    assert run("channel", "ternary", "--alpha", "0.5") == 0
    assert capsys.readouterr().out.startswith("capacity_bits=0.5 ")
    assert run("channel", "bac", "--p", "0", "--q", "0") == 0
    assert capsys.readouterr().out.strip() == "capacity_bits=1 optimal_p_u1=0.5"
    assert run("channel", "bac", "--p", "0.6", "--q", "0.4") == 2
    assert run("channel", "ternary", "--alpha", "0.7", "--epsilon", "0.4") == 2


def test_usage_errors(tensor_file, tmp_path):
    assert run() == 1
    assert run("bogus") == 1
    assert run("channel", "z") == 1
    out = str(tmp_path / "r.csv")
    assert run("bounds", "--tensor", str(tensor_file), "--out", out, "--C1", "3") == 1
    assert run("bounds", "--tensor", str(tensor_file), "--out", out, "--optimize", "--C1", "3", "--C2", "0.1") == 1
    assert run("bounds", "--tensor", str(tensor_file), "--out", out, "--bounds", "ld_mi,nope") == 1


def test_validation_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1, "loss_')
    out = str(tmp_path / "r.csv")
    assert run("bounds", "--tensor", str(bad), "--out", out) == 2
    assert run("verify", "--tensor", str(bad)) == 2
    assert run("verify", "--tensor", str(tmp_path / "missing.json")) == 2
    assert run("simulate", "--config", str(bad), "--out", str(tmp_path)) == 2


def test_bounds_command(tensor_file, tmp_path):
    out = tmp_path / "r.csv"
    assert run("bounds", "--tensor", str(tensor_file), "--out", str(out)) == 0
    names = {r["bound_name"] for r in read_report(out)}
    assert {"err", "ld_mi", "wasserstein", "fast_rate_opt"} <= names
    assert run("bounds", "--tensor", str(tensor_file), "--bounds", "fast_rate",
               "--C1", "3", "--C2", "0.3", "--out", str(out)) == 0
    rows = read_report(out)
    assert [r["bound_name"] for r in rows] == ["err", "fast_rate"]
    assert rows[1]["C1"] == 3.0 and rows[1]["C2"] == 0.3 and rows[1]["feasible"]
    assert run("bounds", "--tensor", str(tensor_file), "--bounds", "fast_rate",
               "--C1", "1", "--C2", "0.3", "--out", str(out)) == 0
    assert not read_report(out)[1]["feasible"]


def test_bounds_json_and_levels(tensor_file, tmp_path):
    out, levels = tmp_path / "r.json", tmp_path / "l.csv"
    assert run("bounds", "--tensor", str(tensor_file), "--bounds", "chained_ld,ld_mi", "--format", "json",
               "--k-max", "4", "--levels-out", str(levels), "--out", str(out)) == 0
    recs = json.loads(out.read_text())
    assert [r["bound_name"] for r in recs] == ["chained_ld", "err", "ld_mi"]
    lines = levels.read_text().splitlines()
    assert lines[0] == "bound_name,level,term,mean_mi"
    assert lines[-1].startswith("chained_ld,tail,")


def test_simulate_and_verify(config_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert run("simulate", "--config", str(config_file), "--out", str(out)) == 0
    files = sorted(p.name for p in out.iterdir())
    assert files == ["surrogate_n3.json", "surrogate_n5.json", "tensor_n3.json", "tensor_n5.json"]
    capsys.readouterr()
    for f in files:
        assert run("verify", "--tensor", str(out / f)) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_verify_corrupted(tmp_path, capsys):
    # all masks pick column 0, which never errs; column 1 always errs
    values = np.zeros((2, 4, 3, 2))
    values[..., 1] = 1
    p = tmp_path / "bad.json"
    write_tensor(LossTensor(values, np.zeros((4, 3), np.int8), shared_masks=True), p)
    assert run("verify", "--tensor", str(p)) == 3
    out = capsys.readouterr().out
    assert "FAIL err_le_ld_mi" in out and "FAIL balanced_masks" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ssbounds", "channel", "z", "--q", "0"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.startswith("capacity_bits=1 ")
