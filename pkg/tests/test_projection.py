import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basisinit.bench.targets import builtin_target
from basisinit.projection import (
    DegreeSet,
    FitModel,
    GridSpec,
    LibraryMismatchError,
    RankWarning,
    as_domain,
    build_design_matrix,
    evaluate_fit,
    fit,
    fit_samples,
    load_model,
    predict,
    save_model,
    solve_coefficients,
)

from conftest import tiny_library


def test_oracle_recovers_x_squared():
    f5 = builtin_target("1d.f5")
    model = fit(None, 4, f5, f5.domain, source="oracle")
    assert np.allclose(model.coefficients, [0, 0, 1, 0, 0], atol=1e-10)
    assert model.metrics.mse <= 1e-20 * np.mean(f5(GridSpec(f5.domain, 1000).points()) ** 2)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.sampled_from(["pointwise", "uniform"]))
def test_oracle_recovers_any_quadratic(coefs, mode):
    X = GridSpec(((-3.0, 12.0),), 200).points()
    y = coefs[0] + coefs[1] * X[:, 0] + coefs[2] * X[:, 0] ** 2
    m = fit_samples(None, 2, X, y, mode=mode, source="oracle")
    assert np.allclose(m.coefficients, coefs, atol=1e-8 * (1 + max(map(abs, coefs))))


def test_oracle_2d_recovery():
    f4 = builtin_target("2d.f4")
    model = fit(None, 2, f4, f4.domain, source="oracle")
    expected = dict(zip(model.degree_set.exponents, model.coefficients))
    assert expected[(2, 0)] == pytest.approx(1, abs=1e-10) and expected[(0, 2)] == pytest.approx(1, abs=1e-10)
    assert abs(expected[(1, 1)]) < 1e-10


@pytest.mark.parametrize("name", ["1d.f1", "1d.f3"])
def test_residual_non_increasing_in_degree(name, lib1d):
    f = builtin_target(name)
    X = GridSpec(f.domain, 300).points()
    y = f(X)
    for source, lib, top in (("oracle", None, 8), ("network", lib1d, lib1d.max_degree)):
        res = [fit_samples(lib, K, X, y, source=source).residual_norm for K in range(top + 1)]
        assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(res, res[1:])), res


def test_network_fit_round_trip(lib1d, tmp_path):
    f = builtin_target("1d.f1")
    model = fit(lib1d, 3, f, f.domain)
    assert model.library_digest == lib1d.digest()
    path = save_model(model, tmp_path / "m.json")
    back = load_model(path)
    assert back.coefficients.tobytes() == model.coefficients.tobytes()
    X = GridSpec(f.domain, 50, "random").points()
    assert np.array_equal(predict(back, lib1d, X), predict(model, lib1d, X))
    rep = evaluate_fit(back, lib1d, f, GridSpec(f.domain, 101))
    assert rep.n_samples == 101 and rep.mse >= 0


def test_predict_rejects_other_library(lib1d):
    f = builtin_target("1d.f1")
    model = fit(lib1d, 2, f, f.domain)
    other = tiny_library(1, 4, seed=11)
    with pytest.raises(LibraryMismatchError):
        predict(model, other, np.array([0.1]))
    with pytest.raises(LibraryMismatchError):
        predict(model, None, np.array([0.1]))


def test_degree_above_library_max(lib1d):
    f = builtin_target("1d.f1")
    with pytest.raises(ValueError, match=r"K=5.*M=4"):
        fit(lib1d, 5, f, f.domain)


def test_rank_deficiency_reported():
    Phi = np.column_stack([np.ones(10), np.arange(10.0), np.arange(10.0)])
    with pytest.warns(RankWarning):
        sol = solve_coefficients(Phi, np.arange(10.0))
    assert sol.rank == 2 and len(sol.dropped) == 1
    assert np.allclose(Phi @ sol.coefficients, np.arange(10.0))


def test_solver_validation():
    with pytest.raises(ValueError, match="at least as many"):
        solve_coefficients(np.ones((2, 3)), np.ones(2))
    with pytest.raises(ValueError):
        solve_coefficients(np.ones((3, 1)), np.ones(2))
    with pytest.raises(ValueError):
        solve_coefficients(np.array([[np.nan], [1.0]]), np.ones(2))


def test_ill_conditioned_flag():
    X = GridSpec(((-1.0, 1.0),), 400).points()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankWarning)
        m = fit_samples(None, 14, X, np.cos(X[:, 0]), mode="uniform", source="oracle")
    assert m.condition_estimate > 1.0
    assert m.to_dict()["ill_conditioned"] == m.ill_conditioned


def test_design_matrix_columns_unmap_exactly():
    X = np.array([[3.0], [25.0], [-140.0]])
    D = build_design_matrix(None, DegreeSet.full(1, 3), X, source="oracle")
    assert np.allclose(D.matrix, np.column_stack([X[:, 0] ** k for k in range(4)]), rtol=1e-14)


def test_grid_kinds():
    mid = GridSpec(((0.0, 1.0),), 4).points()[:, 0]
    assert np.allclose(mid, [0.125, 0.375, 0.625, 0.875])
    lin = GridSpec(((0.0, 1.0),), 3, "linspace").points()[:, 0]
    assert lin.tolist() == [0.0, 0.5, 1.0]
    assert GridSpec(((0.0, 1.0), (2.0, 3.0)), 5).points().shape == (25, 2)
    with pytest.raises(ValueError):
        GridSpec(((1.0, 0.0),), 3)
    with pytest.raises(ValueError):
        GridSpec(((0.0, 1.0),), 3, "sobol")
    assert as_domain((0, 1, 2, 3), 2) == ((0.0, 1.0), (2.0, 3.0))
    assert as_domain((0, 1), 2) == ((0.0, 1.0), (0.0, 1.0))


def test_model_json_validation():
    with pytest.raises(ValueError, match="format"):
        FitModel.from_dict({"format": "other/1"})
