"""Least-squares projection of a target onto the mapped monomial basis.

Each design-matrix column is one basis function on the original domain:
points are scaled into the reference domain, the basis net (or the exact
monomial, for the oracle source) is evaluated there, and the value is scaled
back by ``10**(degree * s)``. Coefficients come from a column-pivoted QR
factorisation of the column-equilibrated design matrix.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg

from basisinit import domain as dm
from basisinit.basis import BasisLibrary, format_exponents, graded_exponents, monomial
from basisinit.metrics import MetricsReport, evaluate

SOURCES = ("network", "oracle")
GRID_KINDS = ("midpoint", "linspace", "random")
CONDITION_WARN = 1e12
MODEL_FORMAT = "basisinit.fitmodel/1"


class RankWarning(UserWarning):
    pass


class LibraryMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class DegreeSet:
    dimension: int
    exponents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        exps = tuple(tuple(int(v) for v in e) for e in self.exponents)
        if not exps:
            raise ValueError("degree set is empty")
        if any(len(e) != self.dimension or min(e) < 0 for e in exps):
            raise ValueError(f"exponents {exps} do not fit dimension {self.dimension}")
        object.__setattr__(self, "exponents", exps)

    @classmethod
    def full(cls, dimension: int, max_degree: int) -> "DegreeSet":
        return cls(dimension, tuple(graded_exponents(dimension, max_degree)))

    @property
    def max_degree(self) -> int:
        return max(sum(e) for e in self.exponents)

    def __len__(self) -> int:
        return len(self.exponents)

    def __iter__(self):
        return iter(self.exponents)

    def labels(self) -> list[str]:
        return [format_exponents(e) for e in self.exponents]


@dataclass(eq=False)
class DesignMatrix:
    matrix: np.ndarray
    points: np.ndarray
    mapped: dm.MappedBatch
    degree_set: DegreeSet
    source: str

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def build_design_matrix(
    library: BasisLibrary | None,
    degree_set: DegreeSet,
    points,
    mode: str = "pointwise",
    source: str = "network",
    coordinate_scaling: str = "shared",
) -> DesignMatrix:
    if source not in SOURCES:
        raise ValueError(f"basis source must be one of {SOURCES}, got {source!r}")
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] != degree_set.dimension:
        raise ValueError(f"points are {X.shape[1]}-d, degree set is {degree_set.dimension}-d")
    if source == "network":
        if library is None:
            raise ValueError("network basis source needs a basis library")
        if library.dimension != degree_set.dimension:
            raise ValueError(f"library is {library.dimension}-d, degree set is {degree_set.dimension}-d")
        missing = [format_exponents(e) for e in degree_set if e not in library]
        if missing:
            raise ValueError(f"degree {degree_set.max_degree} exceeds library max degree "
                             f"{library.max_degree} (missing {', '.join(missing)})")
    mapped = dm.map_domain(X, mode, coordinate_scaling)

    cols = np.empty((X.shape[0], len(degree_set)))
    for j, e in enumerate(degree_set):
        if source == "network":
            phi_hat = library[e](mapped.x_hat)
        else:
            phi_hat = monomial(mapped.x_hat, e)
        expo = mapped.factor_exponent(e)
        with np.errstate(over="ignore", invalid="ignore"):
            col = phi_hat * dm.pow10(expo)
        bad = ~np.isfinite(col)
        if bad.any():
            i = int(np.argmax(bad))
            raise dm.MappingRangeError(
                f"design matrix entry overflows at point {X[i].tolist()} for basis {format_exponents(e)} "
                f"(scale factor 10^{int(expo[i])})")
        cols[:, j] = col
    return DesignMatrix(cols, X, mapped, degree_set, source)


@dataclass
class LstsqSolution:
    coefficients: np.ndarray
    residual_norm: float
    condition_estimate: float
    rank: int
    dropped: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ill_conditioned(self) -> bool:
        return self.condition_estimate > CONDITION_WARN


def solve_coefficients(design, y, rcond: float = 1e-12) -> LstsqSolution:
    """Minimise ``|Phi a - y|`` by column-pivoted QR.

    Columns are scaled to unit norm first so that pivoting and the rank
    cut-off see shape, not the ``10**(k*s)`` magnitude. Columns whose pivot
    falls below ``rcond`` times the largest pivot get a zero coefficient.
    """
    Phi = design.matrix if isinstance(design, DesignMatrix) else np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = Phi.shape
    if n < p:
        raise ValueError(f"need at least as many samples as basis functions ({n} < {p})")
    if y.shape[0] != n:
        raise ValueError(f"{y.shape[0]} targets for {n} design rows")
    if not (np.isfinite(Phi).all() and np.isfinite(y).all()):
        raise ValueError("design matrix and targets must be finite")

    norms = np.linalg.norm(Phi, axis=0)
    scale = np.where(norms > 0, norms, 1.0)
    Q, R, perm = scipy.linalg.qr(Phi / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > rcond * top)) if top > 0 else 0

    coef = np.zeros(p)
    notes = []
    if rank:
        z = scipy.linalg.solve_triangular(R[:rank, :rank], Q[:, :rank].T @ y)
        coef[perm[:rank]] = z / scale[perm[:rank]]
        cond = float(np.linalg.cond(R[:rank, :rank]))
    else:
        cond = float("inf")
    dropped = sorted(int(j) for j in perm[rank:])
    if dropped:
        msg = f"rank deficient design ({rank} of {p}); zeroed columns {dropped}"
        notes.append(msg)
        warnings.warn(msg, RankWarning, stacklevel=2)
    if cond > CONDITION_WARN:
        notes.append(f"condition estimate {cond:.3e} exceeds {CONDITION_WARN:.0e}")
    residual = float(np.linalg.norm(Phi @ coef - y))
    return LstsqSolution(coef, residual, cond, rank, dropped, notes)


@dataclass(frozen=True)
class GridSpec:
    """Sample points over a box: ``n`` per coordinate.

    ``midpoint`` places points at cell centres (no endpoints), ``linspace``
    includes both endpoints, ``random`` draws uniformly with ``seed``.
    """

    domain: tuple[tuple[float, float], ...]
    n: int
    kind: str = "midpoint"
    seed: int = 0

    def __post_init__(self):
        dom = tuple(tuple(float(v) for v in pair) for pair in self.domain)
        if not dom or any(not lo < hi for lo, hi in dom):
            raise ValueError(f"degenerate grid domain {dom}")
        if self.n < 1:
            raise ValueError("grid needs at least one point per coordinate")
        if self.kind not in GRID_KINDS:
            raise ValueError(f"grid kind must be one of {GRID_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "domain", dom)

    @property
    def dimension(self) -> int:
        return len(self.domain)

    def points(self) -> np.ndarray:
        if self.kind == "random":
            rng = np.random.default_rng(self.seed)
            lo = np.array([d[0] for d in self.domain])
            hi = np.array([d[1] for d in self.domain])
            count = self.n ** self.dimension
            return lo + (hi - lo) * rng.random((count, self.dimension))
        axes = []
        for lo, hi in self.domain:
            if self.kind == "linspace":
                axes.append(np.linspace(lo, hi, self.n))
            else:
                h = (hi - lo) / self.n
                axes.append(lo + h * (np.arange(self.n) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self) -> dict:
        return {"domain": [list(d) for d in self.domain], "n": self.n, "kind": self.kind, "seed": self.seed,
                "n_samples": self.n ** self.dimension}


def as_domain(domain, dimension: int) -> tuple[tuple[float, float], ...]:
    """Accept ``(a, b)``, ``[(a, b), (c, d)]`` or a flat ``(a, b, c, d)``."""
    arr = np.asarray(domain, dtype=np.float64).ravel()
    if arr.size == 2:
        pairs = [tuple(arr)] * dimension
    elif arr.size == 2 * dimension:
        pairs = [tuple(arr[2 * i:2 * i + 2]) for i in range(dimension)]
    else:
        raise ValueError(f"cannot read a {dimension}-d domain from {domain!r}")
    return tuple((float(a), float(b)) for a, b in pairs)


def default_fit_grid(domain, dimension: int) -> GridSpec:
    return GridSpec(as_domain(domain, dimension), 1000 if dimension == 1 else 50)


def default_test_grid(domain, dimension: int) -> GridSpec:
    return GridSpec(as_domain(domain, dimension), 2001 if dimension == 1 else 101)


@dataclass(eq=False)
class FitModel:
    degree_set: DegreeSet
    coefficients: np.ndarray
    mode: str
    coordinate_scaling: str
    source: str
    library_digest: str | None
    domain: tuple[tuple[float, float], ...]
    metrics: MetricsReport
    condition_estimate: float
    rank: int
    residual_norm: float
    warnings: list[str] = field(default_factory=list)
    target: str = ""

    @property
    def dimension(self) -> int:
        return self.degree_set.dimension

    @property
    def ill_conditioned(self) -> bool:
        return self.condition_estimate > CONDITION_WARN

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "target": self.target,
            "dimension": self.dimension,
            "max_degree": self.degree_set.max_degree,
            "exponents": [list(e) for e in self.degree_set],
            "coefficients": [float(c).hex() for c in self.coefficients],
            "coefficients_decimal": [repr(float(c)) for c in self.coefficients],
            "mode": self.mode,
            "coordinate_scaling": self.coordinate_scaling,
            "source": self.source,
            "library_digest": self.library_digest,
            "domain": [list(d) for d in self.domain],
            "metrics": self.metrics.to_dict(),
            "condition_estimate": self.condition_estimate,
            "ill_conditioned": self.ill_conditioned,
            "rank": self.rank,
            "residual_norm": self.residual_norm,
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "FitModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported fit model format {d.get('format')!r}")
        ds = DegreeSet(int(d["dimension"]), tuple(tuple(e) for e in d["exponents"]))
        m = d["metrics"]
        return cls(
            ds, np.array([float.fromhex(c) for c in d["coefficients"]]), d["mode"], d["coordinate_scaling"],
            d["source"], d["library_digest"], tuple(tuple(p) for p in d["domain"]),
            MetricsReport(m["mse"], m["r_squared"], m["relative_l2"], m["n_samples"], m.get("grid", {})),
            float(d["condition_estimate"]), int(d["rank"]), float(d["residual_norm"]), list(d.get("warnings", [])),
            d.get("target", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitModel":
        return cls.from_dict(json.loads(text))


def save_model(model: FitModel, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.to_json() + "\n")
    return path


def load_model(path) -> FitModel:
    return FitModel.from_json(Path(path).read_text())


def fit_samples(
    library: BasisLibrary | None,
    max_degree: int,
    X,
    y,
    mode: str = "pointwise",
    source: str = "network",
    coordinate_scaling: str = "shared",
    domain=None,
    rcond: float = 1e-12,
    target: str = "",
    grid: dict | None = None,
) -> FitModel:
    """Project given samples ``(X, y)`` onto the full degree set up to ``max_degree``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    dim = X.shape[1]
    if source == "network" and library is not None and max_degree > library.max_degree:
        raise ValueError(f"degree K={max_degree} exceeds library max degree M={library.max_degree}")
    ds = DegreeSet.full(dim, max_degree)
    design = build_design_matrix(library, ds, X, mode, source, coordinate_scaling)
    sol = solve_coefficients(design, y, rcond)
    y_fit = design.matrix @ sol.coefficients
    if domain is None:
        domain = tuple((float(X[:, c].min()), float(X[:, c].max())) for c in range(dim))
    digest = library.digest() if (source == "network" and library is not None) else None
    return FitModel(ds, sol.coefficients, mode, coordinate_scaling, source, digest, tuple(domain),
                    evaluate(y, y_fit, grid or {"kind": "training", "n_samples": int(X.shape[0])}),
                    sol.condition_estimate, sol.rank, sol.residual_norm, sol.warnings, target)


def fit(
    library: BasisLibrary | None,
    max_degree: int,
    target: Callable[[np.ndarray], np.ndarray],
    domain,
    grid: GridSpec | None = None,
    mode: str = "pointwise",
    source: str = "network",
    coordinate_scaling: str = "shared",
    rcond: float = 1e-12,
    name: str = "",
) -> FitModel:
    """Sample ``target`` over ``domain`` and fit the projection of degree ``max_degree``."""
    if library is not None:
        dim = library.dimension
    elif grid is not None:
        dim = grid.dimension
    else:
        dim = getattr(target, "dimension", None) or (np.asarray(domain, dtype=np.float64).size // 2)
    dom = as_domain(domain, dim)
    grid = grid or default_fit_grid(dom, dim)
    X = grid.points()
    y = np.asarray(target(X), dtype=np.float64).ravel()
    return fit_samples(library, max_degree, X, y, mode, source, coordinate_scaling, dom, rcond,
                       name or getattr(target, "name", ""), {"role": "fit", **grid.to_dict()})


def _check_library(model: FitModel, library: BasisLibrary | None) -> None:
    if model.source != "network":
        return
    if library is None:
        raise LibraryMismatchError("model was fitted with network basis; a basis library is required")
    if model.library_digest is not None and library.digest() != model.library_digest:
        raise LibraryMismatchError("basis library does not match the one the model was fitted with "
                                   f"(model {model.library_digest[:12]}, library {library.digest()[:12]})")


def predict(model: FitModel, library: BasisLibrary | None, X) -> np.ndarray:
    _check_library(model, library)
    design = build_design_matrix(library, model.degree_set, X, model.mode, model.source, model.coordinate_scaling)
    return design.matrix @ model.coefficients


def evaluate_fit(model: FitModel, library: BasisLibrary | None, target, grid: GridSpec) -> MetricsReport:
    """Metrics of the fitted model against ``target`` on ``grid``."""
    X = grid.points()
    if X.shape[0] < 2:
        raise ValueError("evaluation grid is degenerate (fewer than two points)")
    y = np.asarray(target(X), dtype=np.float64).ravel()
    return evaluate(y, predict(model, library, X), {"role": "test", **grid.to_dict()})
