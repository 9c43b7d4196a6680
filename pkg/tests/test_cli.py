import json
import subprocess
import sys

import pytest

from basisinit.cli import main, read_config_file
from basisinit.libfile import load_library

FAST_PRETRAIN = ["--epochs", "5", "--arch", "1,8,1", "--max-mse", "none"]


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def libfile(tmp_path_factory):
    path = tmp_path_factory.mktemp("lib") / "lib.bin"
    assert run("pretrain", "--dim", 1, "--max-degree", 8, *FAST_PRETRAIN, "--out", path) == 0
    return path


def test_pretrain_counts(libfile, tmp_path):
    assert len(load_library(libfile)) == 9
    out = tmp_path / "l2.bin"
    assert run("pretrain", "--dim", 2, "--max-degree", 2, "--epochs", 3, "--arch", "2,8,1", "--max-mse", "none",
               "--out", out) == 0
    assert len(load_library(out)) == 6


def test_pretrain_rerun_byte_identical(libfile, tmp_path):
    again = tmp_path / "again.bin"
    assert run("pretrain", "--dim", 1, "--max-degree", 8, *FAST_PRETRAIN, "--out", again) == 0
    assert again.read_bytes() == libfile.read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "pre.cfg"
    cfg.write_text("# basis training\nepochs = 7\nlearning_rate = 0.01\nwidth = 6\nmax_degree = 1\n"
                   "max_mse = none\n")
    out = tmp_path / "c.bin"
    assert run("pretrain", "--config", cfg, "--epochs", 2, "--out", out) == 0
    lib = load_library(out)
    assert lib.config.epochs == 2 and lib.config.learning_rate == 0.01
    assert lib.arch.layer_widths == (1, 6, 1) and lib.max_degree == 1


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("epochs 7\n")
    assert run("pretrain", "--config", bad) == 1
    bad.write_text("flux_capacitor = 1\n")
    assert run("pretrain", "--config", bad) == 1
    good = tmp_path / "g.cfg"
    good.write_text('a = 1\nb = "x"\nc = [1, 2]\nd = plain words  # comment\n')
    assert read_config_file(good) == {"a": 1, "b": "x", "c": [1, 2], "d": "plain words"}


def test_approx_builtin_oracle(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert run("approx", "--target", "1d.f5", "--degree", 4, "--domain", "-1,9", "--basis-source", "oracle",
               "--out", out) == 0
    text = capsys.readouterr().out
    r2 = float(text.split("R2  =")[1].split()[0])
    assert r2 >= 0.999999
    doc = json.loads(out.read_text())
    assert doc["effective_config"]["degree"] == 4 and doc["test_metrics"]["r_squared"] >= 0.999999


def test_approx_sample_file_matches_builtin(tmp_path, capsys):
    import numpy as np
    xs = np.linspace(-1, 9, 50).tolist()
    sample = tmp_path / "s.csv"
    sample.write_text("x,f\n" + "".join(f"{x!r},{x * x!r}\n" for x in xs))
    ws = tmp_path / "s.txt"
    ws.write_text("x f\n" + "".join(f"{x!r} {x * x!r}\n" for x in xs))
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("approx", "--samples", sample, "--degree", 2, "--basis-source", "oracle", "--out", a) == 0
    assert run("approx", "--samples", ws, "--degree", 2, "--basis-source", "oracle", "--out", b) == 0
    ca, cb = json.loads(a.read_text())["coefficients"], json.loads(b.read_text())["coefficients"]
    assert ca == cb
    assert abs(float.fromhex(ca[2]) - 1.0) < 1e-10


def test_approx_degree_above_library(libfile, tmp_path, capsys):
    assert run("approx", "--library", libfile, "--target", "1d.f1", "--degree", 13, "--out", tmp_path / "m") == 2
    err = capsys.readouterr().err
    assert "K=13" in err and "M=8" in err


def test_approx_network_predict_inspect(libfile, tmp_path, capsys):
    model = tmp_path / "m.json"
    assert run("approx", "--library", libfile, "--target", "1d.f1", "--degree", 3, "--out", model) == 0
    assert run("predict", "--model", model, "--library", libfile, "--x", "0.5", "--x", "-0.25") == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[-3] == "x1,prediction" and len(lines[-2].split(",")) == 2
    assert run("predict", "--model", model, "--x", "0.5") == 1  # library missing
    assert run("inspect", libfile) == 0
    assert "9 nets" in capsys.readouterr().out
    assert run("inspect", model) == 0
    assert "fit model" in capsys.readouterr().out


def test_usage_errors(tmp_path):
    assert run("approx", "--degree", 2) == 1
    assert run("approx", "--target", "nope", "--degree", 2, "--basis-source", "oracle") == 1
    assert run("approx", "--target", "1d.f1", "--degree", 2, "--domain", "3,1", "--basis-source", "oracle") == 1
    assert run("approx", "--target", "1d.f1", "--degree", 2, "--library", tmp_path / "missing.bin") == 2
    assert run("bench", "no-such-kind") == 1
    assert run("bench", "approx-1d") == 1
    assert run() == 1
    with pytest.raises(SystemExit) as exc:
        run("pretrain", "--dim", 3)
    assert exc.value.code == 1


def test_bench_writes_report_tree(tmp_path, capsys):
    cfg = tmp_path / "b.cfg"
    cfg.write_text("n_iters = 2\nbatch_size = 32\n")
    assert run("bench", "activation-timing", "--seed", "0", "--config", cfg, "--out", tmp_path) == 0
    runs = list((tmp_path / "activation-timing").iterdir())
    assert len(runs) == 1
    spec = json.loads((runs[0] / "spec.json").read_text())
    assert spec["spec"]["settings"]["n_iters"] == 2
    assert "report:" in capsys.readouterr().out


def test_bench_extrapolation_two_arms(libfile, tmp_path):
    assert run("bench", "extrapolation-demo", "--library", libfile, "--seed", "0", "--epochs", "3",
               "--out", tmp_path) == 1  # 'epochs' is not an extrapolation-demo setting
    cfg = tmp_path / "e.cfg"
    cfg.write_text("naive_epochs = 3\nn_test = 51\n")
    assert run("bench", "extrapolation-demo", "--library", libfile, "--seed", "0", "--config", cfg,
               "--out", tmp_path) == 0
    run_dir = next((tmp_path / "extrapolation-demo").iterdir())
    body = (run_dir / "report.csv").read_text()
    assert "naive" in body and "mapped" in body


@pytest.mark.parametrize("sub", ["pretrain", "approx", "predict", "bench", "inspect"])
def test_help_documents_flags(sub):
    out = subprocess.run([sys.executable, "-m", "basisinit.cli", sub, "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "--" in out.stdout and "usage" in out.stdout
