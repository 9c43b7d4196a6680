import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from basisinit.activations import (
    SELU_ALPHA,
    SELU_LAMBDA,
    ActivationKind,
    activate,
    activation_grad,
    time_activation,
)

ALL = list(ActivationKind)
finite = st.floats(-30, 30, allow_nan=False)


def test_seven_kinds():
    assert {a.value for a in ALL} == {"relu", "sigmoid", "tanh", "mish", "gelu", "selu", "celu"}


def test_parse_accepts_case_and_rejects_unknown():
    assert ActivationKind.parse("GELU") is ActivationKind.GELU
    with pytest.raises(ValueError, match="relu"):
        ActivationKind.parse("swish")


@pytest.mark.parametrize("x, expected", [
    (0.0, 0.0), (1.0, 0.5 * (1 + np.tanh(np.sqrt(2 / np.pi) * (1 + 0.044715)))), (-3.0, None)])
def test_gelu_tanh_form(x, expected):
    val = activate("gelu", x)
    if expected is not None:
        assert val == pytest.approx(expected, rel=1e-15)
    else:
        assert -0.01 < val < 0


def test_closed_forms():
    x = np.linspace(-4, 4, 81)
    assert np.allclose(activate("relu", x), np.maximum(x, 0))
    assert np.allclose(activate("sigmoid", x), 1 / (1 + np.exp(-x)))
    assert np.allclose(activate("tanh", x), np.tanh(x))
    assert np.allclose(activate("mish", x), x * np.tanh(np.log1p(np.exp(x))))
    assert np.allclose(activate("selu", x), SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * (np.exp(x) - 1)))
    assert np.allclose(activate("celu", x), np.where(x > 0, x, np.exp(x) - 1))


def test_scalar_in_scalar_out():
    for kind in ALL:
        assert isinstance(activate(kind, 0.3), float)
        assert isinstance(activation_grad(kind, 0.3), float)


@pytest.mark.parametrize("kind", ALL)
@given(x=finite)
def test_grad_matches_central_difference(kind, x):
    if kind in (ActivationKind.RELU, ActivationKind.SELU) and abs(x) < 1e-4:
        return  # kink at the origin
    h = 1e-6
    fd = (activate(kind, x + h) - activate(kind, x - h)) / (2 * h)
    assert activation_grad(kind, x) == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("kind", ALL)
def test_extreme_inputs_stay_finite(kind):
    x = np.array([-1e300, -800.0, -50.0, 0.0, 50.0, 800.0, 1e300])
    assert np.isfinite(activate(kind, x)).all()
    assert np.isfinite(activation_grad(kind, x)).all()


def test_input_not_modified():
    x = np.linspace(-2, 2, 11)
    before = x.copy()
    for kind in ALL:
        activate(kind, x)
        activation_grad(kind, x)
    assert np.array_equal(x, before)


def test_time_activation_record():
    rec = time_activation("relu", n_iters=3, batch_size=100)
    assert rec["activation"] == "relu" and rec["n_iters"] == 3
    assert rec["forward_ns"] > 0 and rec["backward_ns"] > 0
    with pytest.raises(ValueError):
        time_activation("relu", n_iters=0)
