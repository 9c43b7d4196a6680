import numpy as np
import pytest

from basisinit.basis import (
    BasisLibrary,
    BasisTrainingError,
    ExtrapolationWarning,
    MissingBasisError,
    default_train_config,
    eval_basis,
    format_exponents,
    graded_exponents,
    monomial,
    progressive_pretrain,
    train_basis,
    validate_library,
)
from basisinit.nn import Architecture, InitStrategy

from conftest import tiny_library


def test_graded_order():
    assert graded_exponents(1, 3) == [(0,), (1,), (2,), (3,)]
    assert graded_exponents(2, 2) == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]
    assert len(graded_exponents(2, 6)) == 28
    with pytest.raises(ValueError):
        graded_exponents(3, 2)


def test_monomial_values():
    X = np.array([[2.0, 3.0], [-1.0, 0.5]])
    assert np.array_equal(monomial(X, (2, 1)), np.array([12.0, 0.5]))
    assert np.array_equal(monomial(np.array([2.0, -3.0]), (3,)), np.array([8.0, -27.0]))
    assert format_exponents((1, 2)) == "x1^1*x2^2"
    assert format_exponents((3,)) == "x^3"


def test_library_shape_and_provenance(lib1d, lib2d):
    assert len(lib1d) == 5 and lib1d.max_degree == 4
    assert list(lib1d.nets) == [(k,) for k in range(5)]
    assert lib1d[(0,)].provenance == "random"
    assert lib1d[3].provenance == "inherited:2"
    assert len(lib2d) == 6
    assert lib2d[(1, 1)].provenance == "inherited:0,2"


def test_missing_basis(lib1d):
    with pytest.raises(MissingBasisError, match="x\\^5"):
        lib1d[(5,)]
    assert (5,) not in lib1d and 2 in lib1d


def test_incomplete_library_rejected(lib1d):
    nets = dict(lib1d.nets)
    nets.pop((2,))
    with pytest.raises(ValueError, match="incomplete"):
        BasisLibrary(1, 4, lib1d.arch, lib1d.config, nets)


def test_extrapolation_warning(lib1d):
    with pytest.warns(ExtrapolationWarning):
        eval_basis(lib1d, (2,), np.array([1.5]))
    out = eval_basis(lib1d, (2,), np.array([0.5, -0.5]))
    assert out.shape == (2,)


def test_pretraining_is_deterministic():
    a, b = tiny_library(1, 2, seed=5), tiny_library(1, 2, seed=5)
    assert a.same_as(b) and a.digest() == b.digest()
    assert tiny_library(1, 2, seed=6).digest() != a.digest()


def test_warm_start_changes_result():
    cfg = default_train_config(1, epochs=30, n_samples=32)
    arch = Architecture((1, 8, 1), "gelu")
    cold = train_basis((2,), cfg, arch, init=InitStrategy(seed=0))
    warm = train_basis((2,), cfg, arch, warm_start=cold.params)
    assert warm.provenance == "inherited"
    assert warm.final_mse <= cold.final_mse * 1.0001


def test_final_mse_measured_on_training_samples():
    cfg = default_train_config(1, epochs=20, n_samples=40)
    arch = Architecture((1, 8, 1), "gelu")
    net = train_basis((1,), cfg, arch)
    from basisinit.nn import sample_points
    X = sample_points(cfg, 1)
    assert net.final_mse == pytest.approx(np.mean((net(X) - X[:, 0]) ** 2), rel=1e-12)


def test_mse_gate_raises_after_retry():
    cfg = default_train_config(1, epochs=1, n_samples=16, output_lstsq=False)
    arch = Architecture((1, 2, 1), "sigmoid")
    with pytest.raises(BasisTrainingError, match="after retry"):
        progressive_pretrain(1, 3, cfg, arch, max_mse=1e-12)


def test_validate_library(lib1d):
    with pytest.raises(BasisTrainingError):
        validate_library(lib1d, max_mse=0.0)
    validate_library(lib1d, max_mse=np.inf)


def test_bad_exponents():
    with pytest.raises(ValueError):
        train_basis((-1,), default_train_config(1, epochs=1))
    with pytest.raises(ValueError):
        default_train_config(3)
