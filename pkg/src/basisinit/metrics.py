"""Error metrics used throughout: MSE, coefficient of determination, relative L2."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


class MetricError(ValueError):
    """Raised when a metric is undefined for the given data."""


def _pair(y, y_hat):
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise MetricError(f"length mismatch: {y.size} targets vs {y_hat.size} predictions")
    if y.size == 0:
        raise MetricError("metrics need at least one sample")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    r = y - y_hat
    return float(np.mean(r * r))


def r_squared(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    if y.size < 2:
        raise MetricError("R^2 needs at least two samples")
    centred = y - y.mean()
    ss_tot = float(np.dot(centred, centred))
    if ss_tot == 0.0:
        raise MetricError("R^2 undefined: target has zero variance")
    r = y - y_hat
    return 1.0 - float(np.dot(r, r)) / ss_tot


def relative_l2(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    norm_y = float(np.linalg.norm(y))
    if norm_y == 0.0:
        raise MetricError("relative L2 undefined: target has zero norm")
    return float(np.linalg.norm(y_hat - y)) / norm_y


@dataclass
class MetricsReport:
    mse: float
    r_squared: float | None
    relative_l2: float | None
    n_samples: int
    grid: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(y, y_hat, grid: dict | None = None) -> MetricsReport:
    """All three metrics at once; undefined ones come back as ``None``."""
    y, y_hat = _pair(y, y_hat)
    try:
        r2 = r_squared(y, y_hat)
    except MetricError:
        r2 = None
    try:
        rel = relative_l2(y, y_hat)
    except MetricError:
        rel = None
    return MetricsReport(mse(y, y_hat), r2, rel, int(y.size), dict(grid or {}))
