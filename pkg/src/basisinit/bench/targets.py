"""Builtin target functions with the degree, domain and reference metrics they are benchmarked at."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TargetFunction:
    name: str
    dimension: int
    domain: tuple[tuple[float, float], ...]
    fn: Callable[..., np.ndarray]
    formula: str
    max_degree: int | None = None
    # reference accuracy for this target (baseline for the benchmark checks), if any
    ref_mse: float | None = None
    ref_r2: float | None = None

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.dimension == 1 else X.reshape(1, -1)
        if X.shape[1] != self.dimension:
            raise ValueError(f"{self.name} takes {self.dimension}-d input, got shape {X.shape}")
        return np.asarray(self.fn(*[X[:, c] for c in range(self.dimension)]), dtype=np.float64)


def _f6(x):
    return np.where(x < -1.0, x ** 3, np.where(x < 1.0, np.sin(np.pi * x / 2.0), x))


_I = ((-1.0, 1.0),)
_I2 = ((-1.0, 1.0), (-1.0, 1.0))

_TARGETS = [
    TargetFunction("1d.f1", 1, _I, lambda x: np.exp(np.sin(x)), "exp(sin(x))", 6, 4.17e-8, 9.9999988e-1),
    TargetFunction("1d.f2", 1, _I, lambda x: np.log1p(x * x), "ln(1 + x^2)", 8, 1.05e-8, 9.9999982e-1),
    TargetFunction("1d.f3", 1, _I, lambda x: np.sin(np.exp(x)), "sin(exp(x))", 8, 1.64e-8, 9.9999970e-1),
    TargetFunction("1d.f4", 1, ((4.0, 9.0),), np.cos, "cos(x)", 8, 3.65e-8, 9.9999988e-1),
    TargetFunction("1d.f5", 1, ((-1.0, 9.0),), lambda x: x * x, "x^2", 4, 8.39e-6, 1.0),
    TargetFunction("1d.f6", 1, ((-6.0, 4.0),), _f6, "x^3 if x<-1; sin(pi x/2) if -1<=x<1; x otherwise",
                   12, 5.38e-3, 9.9999827e-1),
    TargetFunction("2d.f1", 2, _I2, lambda a, b: np.cos(a + b), "cos(x1 + x2)", 4, 2.42e-6, 9.9998331e-1),
    TargetFunction("2d.f2", 2, _I2, lambda a, b: np.sin(np.exp(a)), "sin(exp(x1))", 6, 2.48e-7, 9.9995613e-1),
    TargetFunction("2d.f3", 2, ((2.0, 3.0), (2.0, 3.0)), lambda a, b: np.exp2(a + b), "2^(x1 + x2)", 6,
                   1.32e-6, 1.0),
    TargetFunction("2d.f4", 2, ((-5.0, 8.0), (-5.0, 8.0)), lambda a, b: a * a + b * b, "x1^2 + x2^2", 2,
                   8.60e-7, 1.0),
    TargetFunction("cubic", 1, ((-1.0, 1.0),), lambda x: x ** 3, "x^3"),
    TargetFunction("sin_pi_x_sin_4pi_y", 2, _I2, lambda a, b: np.sin(np.pi * a) * np.sin(4 * np.pi * b),
                   "sin(pi x) sin(4 pi y)"),
]

TARGETS = {t.name: t for t in _TARGETS}
SUITE_1D = [f"1d.f{i}" for i in range(1, 7)]
SUITE_2D = [f"2d.f{i}" for i in range(1, 5)]


def builtin_target(name: str) -> TargetFunction:
    try:
        return TARGETS[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; available: {', '.join(TARGETS)}") from None
