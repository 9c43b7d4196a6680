"""Decimal scaling of inputs into the reference domain [-1, 1] and back.

A point ``x`` is scaled by ``10**s`` where ``s = ceil(log10(floor(|x| + 1)))``.
The exponent is evaluated by counting decimal digits of the integer
``floor(|x| + 1)``, never through a floating point logarithm, so boundary
values such as ``x = 9`` or ``x = 99`` land on the right side of the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

# float64 represents 10**s exactly up to here
_EXACT_POW = 22
_POW10 = 10.0 ** np.arange(_EXACT_POW + 1)

MODES = ("pointwise", "uniform")
COORDINATE_SCALING = ("shared", "independent")


class MappingRangeError(OverflowError):
    """Unmapping overflowed float64."""


def _check_finite(x: float) -> None:
    if not math.isfinite(x):
        raise ValueError(f"cannot map non-finite value {x!r}")


def scale_exponent(x: float) -> int:
    """Smallest ``s >= 0`` with ``10**s >= floor(|x| + 1)``.

    Uses ``floor(|x| + 1) = floor(|x|) + 1``: the floor of a float is exact,
    whereas the float sum ``|x| + 1`` can round across an integer.
    """
    x = float(x)
    _check_finite(x)
    m = math.floor(abs(x))  # exact python int
    # 10**s >= m + 1  <=>  10**s > m  <=>  s = number of decimal digits of m
    return 0 if m == 0 else len(str(m))


def scale_exponents(x) -> np.ndarray:
    """Vectorised :func:`scale_exponent`; returns an int64 array shaped like ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("cannot map non-finite values")
    m = np.floor(np.abs(x))
    if (m >= _POW10[-1]).any():
        out = np.empty(x.shape, dtype=np.int64)
        flat_x, flat_out = x.ravel(), out.reshape(-1)
        for i, v in enumerate(flat_x):
            flat_out[i] = scale_exponent(v)
        return out
    # m is integer-valued and the powers below 1e22 are exact: count powers 10**p <= m
    return np.searchsorted(_POW10, m, side="right").astype(np.int64)


def pow10(s) -> np.ndarray | float:
    s = np.asarray(s)
    if s.size and (s < 0).any():
        raise ValueError("scaling exponent must be non-negative")
    if s.size and s.max() <= _EXACT_POW:
        out = _POW10[s]
    else:
        with np.errstate(over="ignore"):
            out = np.power(10.0, s.astype(np.float64))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MappedSample:
    x: float
    s: int
    x_hat: float


def forward_map(x: float) -> MappedSample:
    s = scale_exponent(x)
    return MappedSample(float(x), s, float(x) / pow10(s))


def inverse_map(x_hat: float, s: int) -> float:
    _check_finite(float(x_hat))
    if int(s) < 0:
        raise ValueError("scaling exponent must be non-negative")
    return float(x_hat) * pow10(int(s))


def unmap_basis_value(phi_hat, total_degree: int, s):
    """Recover a degree-``k`` monomial value: ``10**(k*s) * phi_hat``.

    ``s`` may be an array aligned with ``phi_hat``. For a 2-D monomial under a
    shared exponent pass ``total_degree = i + j``.
    """
    if total_degree < 0:
        raise ValueError("degree must be non-negative")
    s = np.asarray(s)
    if s.size and (s < 0).any():
        raise ValueError("scaling exponent must be non-negative")
    exponent = total_degree * s
    phi_hat_arr = np.asarray(phi_hat, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        out = phi_hat_arr * pow10(exponent)
    if not np.isfinite(out).all():
        raise MappingRangeError(f"unmapping degree {total_degree} with scale exponent up to {int(s.max())} overflows float64")
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class MappedBatch:
    """Mapped points: ``x`` and ``x_hat`` are (n, d); ``s`` is (n, d) int64.

    Under shared coordinate scaling every row of ``s`` is constant.
    """

    x: np.ndarray
    s: np.ndarray
    x_hat: np.ndarray
    mode: str
    coordinate_scaling: str

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def factor_exponent(self, exponents: Sequence[int]) -> np.ndarray:
        """Per-row power of ten that unmaps the monomial with these exponents."""
        e = np.asarray(exponents, dtype=np.int64)
        return self.s @ e

    def samples(self) -> Iterator[MappedSample]:
        """Per-coordinate :class:`MappedSample` records (1-D batches yield one per point)."""
        for xi, si, hi in zip(self.x, self.s, self.x_hat):
            for a, b, c in zip(xi, si, hi):
                yield MappedSample(float(a), int(b), float(c))


def map_domain(points, mode: str = "pointwise", coordinate_scaling: str = "shared") -> MappedBatch:
    """Map a batch of points into the reference domain.

    ``pointwise`` computes an exponent per point (per coordinate, then the row
    maximum under ``shared`` scaling); ``uniform`` uses one exponent, the
    maximum over the whole batch, for every point.
    """
    if mode not in MODES:
        raise ValueError(f"mapping mode must be one of {MODES}, got {mode!r}")
    if coordinate_scaling not in COORDINATE_SCALING:
        raise ValueError(f"coordinate scaling must be one of {COORDINATE_SCALING}, got {coordinate_scaling!r}")
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("map_domain needs a non-empty batch of points")
    S = scale_exponents(X)
    if mode == "uniform":
        if coordinate_scaling == "shared":
            S = np.full_like(S, S.max())
        else:
            S = np.broadcast_to(S.max(axis=0), S.shape).copy()
    elif coordinate_scaling == "shared":
        S = np.broadcast_to(S.max(axis=1, keepdims=True), S.shape).copy()
    return MappedBatch(X, S, X / pow10(S), mode, coordinate_scaling)


def uniform_exponent_for(points) -> int:
    return int(scale_exponents(np.asarray(points, dtype=np.float64)).max())
