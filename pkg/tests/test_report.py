import pytest

from basisinit.bench.report import (
    ExperimentReport,
    ExperimentSpec,
    SpecError,
    read_report,
    write_report,
)


def sample_report():
    spec = ExperimentSpec("width-sweep", {"arch": ["1,8,1", "1,16,1"]}, [0, 1], {"epochs": 3, "lr": 0.01})
    rows = [
        {"arch": "1,8,1", "seed": 0, "status": "ok", "mse": 1.2345678901234567e-07, "r2": 0.9999, "n": 25,
         "flag": True},
        {"arch": "1,8,1", "seed": 1, "status": "failed", "error": "TrainingDivergedError: boom, at epoch 3"},
    ]
    curves = {"loss_1_8_1_s0": {"epoch": [0, 1, 2], "loss": [1.0, 0.5, 1e-300]}}
    return ExperimentReport(spec, rows, curves, {"python": "3.x"}, ["a claim"])


def test_round_trip(tmp_path):
    rep = sample_report()
    run = write_report(rep, tmp_path)
    assert (run / "report.csv").exists() and (run / "spec.json").exists() and (run / "env.json").exists()
    assert (run / "curves" / "loss_1_8_1_s0.csv").exists()
    assert read_report(run) == rep


def test_rows_are_rectangular():
    rep = sample_report()
    assert set(rep.rows[0]) == set(rep.rows[1])
    assert rep.rows[1]["mse"] is None
    assert len(rep.failures()) == 1


def test_reruns_never_reuse_a_directory(tmp_path):
    a = write_report(sample_report(), tmp_path)
    before = sorted(p.name for p in a.rglob("*"))
    b = write_report(sample_report(), tmp_path)
    assert a != b and a.parent == b.parent
    assert sorted(p.name for p in a.rglob("*")) == before


def test_spec_validation():
    with pytest.raises(SpecError, match="valid kinds"):
        ExperimentSpec("made-up", {"a": [1]})
    with pytest.raises(SpecError, match="empty"):
        ExperimentSpec("width-sweep", {"arch": []})
    with pytest.raises(SpecError, match="empty"):
        ExperimentSpec("width-sweep", {})
    with pytest.raises(SpecError, match="seed"):
        ExperimentSpec("width-sweep", {"arch": ["1,8,1"]}, [])


def test_cells_are_cartesian():
    spec = ExperimentSpec("init-sensitivity", {"init": ["uniform", "kaiming"], "gain": [1, 2, 3]})
    assert len(spec.cells()) == 6
