import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basisinit.activations import ActivationKind
from basisinit.nn import (
    Architecture,
    InitStrategy,
    Params,
    ShapeError,
    TrainConfig,
    forward,
    gradient,
    init_params,
    loss_and_gradient,
    sample_points,
    solve_output_layer,
    train,
)


def fd_gradient(params, arch, X, y, h=1e-6):
    flat = params.flat()
    g = np.empty_like(flat)
    for i in range(flat.size):
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        lu, _ = loss_and_gradient(Params.from_flat(arch, up), arch, X, y)
        ld, _ = loss_and_gradient(Params.from_flat(arch, dn), arch, X, y)
        g[i] = (lu - ld) / (2 * h)
    return g


@pytest.mark.parametrize("kind", list(ActivationKind))
def test_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(3)
    arch = Architecture((2, 5, 4, 1), kind)
    params = init_params(arch, InitStrategy("xavier", 1.0, 7, bias="fan_in"))
    X = rng.uniform(-1, 1, (9, 2)) + 0.05  # keep clear of the relu kink at exactly zero
    y = rng.standard_normal(9)
    g = gradient(params, arch, X, y).flat()
    fd = fd_gradient(params, arch, X, y)
    assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))


def test_architecture_parse_and_validation():
    a = Architecture.parse("1, 8, 8, 1")
    assert a.layer_widths == (1, 8, 8, 1) and a.n_layers == 3
    assert a.n_params == 8 + 8 + 64 + 8 + 8 + 1
    assert str(a) == "[1,8,8,1]/gelu"
    for bad in ["1", "1,0,1", "a,b", ""]:
        with pytest.raises(ValueError):
            Architecture.parse(bad)


def test_params_flat_round_trip_is_bit_exact():
    arch = Architecture((2, 3, 1), "tanh")
    p = init_params(arch, InitStrategy(seed=4, bias="fan_in"))
    q = Params.from_flat(arch, p.flat())
    assert p.equals(q)
    with pytest.raises(ShapeError):
        Params.from_flat(arch, p.flat()[:-1])


def test_init_is_deterministic_in_seed():
    arch = Architecture((1, 32, 1), "gelu")
    a = init_params(arch, InitStrategy(seed=1))
    assert a.equals(init_params(arch, InitStrategy(seed=1)))
    assert not a.equals(init_params(arch, InitStrategy(seed=2)))


@pytest.mark.parametrize("kind", ["uniform", "xavier", "kaiming"])
@given(gain=st.sampled_from([0.5, 1.0, 5.0, 20.0]))
def test_init_scale_follows_gain(kind, gain):
    arch = Architecture((64, 256, 1), "relu")
    W = init_params(arch, InitStrategy(kind, gain, 0)).weights[0]
    fan_out, fan_in = W.shape
    if kind == "uniform":
        assert np.abs(W).max() <= gain
        expected_std = gain / np.sqrt(3)
    elif kind == "xavier":
        bound = gain * np.sqrt(6 / (fan_in + fan_out))
        assert np.abs(W).max() <= bound
        expected_std = bound / np.sqrt(3)
    else:
        expected_std = gain * np.sqrt(2 / fan_in)
    assert W.std() == pytest.approx(expected_std, rel=0.03)


def test_bias_modes():
    arch = Architecture((4, 16, 1), "gelu")
    assert all(not b.any() for b in init_params(arch, InitStrategy()).biases)
    b = init_params(arch, InitStrategy(bias="fan_in")).biases[0]
    assert b.any() and np.abs(b).max() <= 0.5
    with pytest.raises(ValueError):
        InitStrategy(gain=0.0)
    with pytest.raises(ValueError):
        InitStrategy(bias="normal")


def test_forward_shapes_and_errors():
    arch = Architecture((2, 4, 3), "tanh")
    p = init_params(arch, InitStrategy())
    assert forward(p, arch, np.zeros((5, 2))).shape == (5, 3)
    with pytest.raises(ShapeError):
        forward(p, arch, np.zeros((5, 3)))
    with pytest.raises(ShapeError):
        p.check(Architecture((2, 5, 3), "tanh"))


def test_train_reduces_loss_and_does_not_mutate_input():
    arch = Architecture((1, 16, 1), "tanh")
    p0 = init_params(arch, InitStrategy(seed=0, bias="fan_in"))
    snapshot = p0.copy()
    cfg = TrainConfig(epochs=300, learning_rate=1e-2, n_samples=64)
    X = sample_points(cfg, 1)
    res = train(p0, arch, X, np.sin(3 * X[:, 0]), cfg)
    assert res.epochs_run == 300 and len(res.history) == 300
    assert res.history[-1] < 0.1 * res.history[0]
    assert p0.equals(snapshot)


def test_train_is_bit_reproducible():
    arch = Architecture((1, 8, 1), "gelu")
    cfg = TrainConfig(epochs=50, learning_rate=1e-2, n_samples=32, batch_size=8, seed=3)
    X = sample_points(cfg, 1)
    run = lambda: train(init_params(arch, InitStrategy(seed=3)), arch, X, X[:, 0] ** 2, cfg)  # noqa: E731
    a, b = run(), run()
    assert a.params.equals(b.params) and a.history == b.history


def test_zero_epochs_and_threshold():
    arch = Architecture((1, 8, 1), "gelu")
    p = init_params(arch, InitStrategy())
    X = np.linspace(-1, 1, 20)
    res = train(p, arch, X, X, TrainConfig(epochs=0))
    assert res.history == [] and res.params.equals(p)
    res = train(p, arch, X, X, TrainConfig(epochs=100, mse_threshold=1e9))
    assert res.epochs_run == 1 and res.first_epoch_below(1e9) == 0


def test_gd_optimizer_and_validation():
    arch = Architecture((1, 8, 1), "sigmoid")
    p = init_params(arch, InitStrategy(bias="fan_in"))
    X = np.linspace(-1, 1, 20)
    res = train(p, arch, X, X, TrainConfig(epochs=20, optimizer="gd", learning_rate=0.1))
    assert res.history[-1] < res.history[0]
    for bad in [dict(epochs=-1), dict(learning_rate=0), dict(optimizer="sgdm"), dict(domain=((1.0, -1.0),)),
                dict(sampling="sobol")]:
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_train_rejects_nonfinite_samples():
    arch = Architecture((1, 4, 1), "relu")
    p = init_params(arch, InitStrategy())
    with pytest.raises(ValueError):
        train(p, arch, np.array([0.0, np.nan]), np.array([0.0, 1.0]), TrainConfig(epochs=1))


def test_config_dict_round_trip():
    cfg = TrainConfig(epochs=7, domain=((-2.0, 3.0),), mse_threshold=1e-4, output_lstsq=True)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_sampling_modes():
    g = sample_points(TrainConfig(sampling="grid", grid_size=5), 2)
    assert g.shape == (25, 2) and g.min() == -1 and g.max() == 1
    r = sample_points(TrainConfig(n_samples=100, domain=((2.0, 3.0),)), 1)
    assert r.shape == (100, 1) and (r >= 2).all() and (r < 3).all()


def test_output_layer_solve_is_least_squares():
    arch = Architecture((1, 32, 1), "gelu")
    p = init_params(arch, InitStrategy(bias="fan_in"))
    X = np.linspace(-1, 1, 200).reshape(-1, 1)
    y = X[:, 0] ** 2
    q = solve_output_layer(p, arch, X, y, ridge=0.0)
    before = np.mean((forward(p, arch, X)[:, 0] - y) ** 2)
    after = np.mean((forward(q, arch, X)[:, 0] - y) ** 2)
    assert after < 1e-4 * before
    assert all(np.array_equal(a, b) for a, b in zip(p.weights[:-1], q.weights[:-1]))
