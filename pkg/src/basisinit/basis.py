"""Library of networks pretrained on monomials over the reference domain.

Nets are trained in a chain: the first from random weights, each later one
warm-started from the trained parameters of its predecessor. In 1-D the chain
is ``x^0, x^1, ..., x^M``; in 2-D it walks exponent pairs in graded
lexicographic order ``(0,0), (0,1), (1,0), (0,2), (1,1), (2,0), ...``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from basisinit.activations import ActivationKind
from basisinit.nn import (
    Architecture,
    InitStrategy,
    Params,
    TrainConfig,
    TrainingDivergedError,
    forward,
    init_params,
    sample_points,
    train,
)

log = logging.getLogger(__name__)

REFERENCE_DOMAIN = (-1.0, 1.0)
DEFAULT_WIDTH = 1024
DEFAULT_MAX_DEGREE = {1: 12, 2: 6}
ACCEPT_MSE = 1e-5


class BasisTrainingError(RuntimeError):
    def __init__(self, exponents, message):
        self.exponents = tuple(exponents)
        super().__init__(f"basis {format_exponents(self.exponents)}: {message}")


class MissingBasisError(KeyError):
    pass


class ExtrapolationWarning(UserWarning):
    """Basis net evaluated outside the reference domain."""


def format_exponents(exponents) -> str:
    e = tuple(exponents)
    if len(e) == 1:
        return f"x^{e[0]}"
    return "*".join(f"x{c + 1}^{p}" for c, p in enumerate(e))


def graded_exponents(dimension: int, max_degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of total degree <= ``max_degree`` in graded lex order."""
    if dimension not in (1, 2):
        raise ValueError(f"basis dimension must be 1 or 2, got {dimension}")
    if max_degree < 0:
        raise ValueError("max degree must be >= 0")
    if dimension == 1:
        return [(k,) for k in range(max_degree + 1)]
    return [(i, d - i) for d in range(max_degree + 1) for i in range(d + 1)]


def monomial(X, exponents) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    out = np.ones(X.shape[0])
    for c, p in enumerate(exponents):
        if p:
            out = out * X[:, c] ** p
    return out


def default_architecture(dimension: int, activation="gelu", width: int = DEFAULT_WIDTH) -> Architecture:
    return Architecture((dimension, width, 1), ActivationKind.parse(activation))


def default_train_config(dimension: int, **overrides) -> TrainConfig:
    """Defaults for basis training on the reference domain."""
    if dimension == 1:
        cfg = TrainConfig(epochs=5000, learning_rate=1e-3, n_samples=512, sampling="random",
                          domain=(REFERENCE_DOMAIN,), output_lstsq=True)
    elif dimension == 2:
        cfg = TrainConfig(epochs=1000, learning_rate=1e-3, grid_size=32, sampling="grid",
                          domain=(REFERENCE_DOMAIN,), output_lstsq=True)
    else:
        raise ValueError(f"basis dimension must be 1 or 2, got {dimension}")
    return cfg.with_(**overrides) if overrides else cfg


@dataclass(eq=False)
class BasisNet:
    exponents: tuple[int, ...]
    arch: Architecture
    params: Params
    final_mse: float
    epochs: int
    seed: int
    provenance: str  # "random" or "inherited:<exponents>"
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.exponents)

    @property
    def total_degree(self) -> int:
        return sum(self.exponents)

    def __call__(self, X_hat) -> np.ndarray:
        return forward(self.params, self.arch, X_hat)[:, 0]

    def same_as(self, other: "BasisNet") -> bool:
        """Field-by-field bit-exact comparison (training history excluded)."""
        return (
            self.exponents == other.exponents
            and self.arch == other.arch
            and self.params.equals(other.params)
            and np.float64(self.final_mse).tobytes() == np.float64(other.final_mse).tobytes()
            and self.epochs == other.epochs
            and self.seed == other.seed
            and self.provenance == other.provenance
        )


def _inherited_tag(exponents) -> str:
    return "inherited:" + ",".join(map(str, exponents))


def train_basis(
    exponents,
    config: TrainConfig | None = None,
    arch: Architecture | None = None,
    warm_start: Params | None = None,
    init: InitStrategy | None = None,
    provenance: str | None = None,
) -> BasisNet:
    """Train one net to reproduce the monomial ``exponents`` on the reference domain.

    The recorded ``final_mse`` is measured against the exact monomial on the
    config's sample set using the returned parameters.
    """
    exponents = tuple(int(e) for e in exponents)
    if any(e < 0 for e in exponents):
        raise ValueError(f"exponents must be non-negative, got {exponents}")
    dim = len(exponents)
    config = config or default_train_config(dim)
    arch = arch or default_architecture(dim)
    if arch.input_dim != dim:
        raise ValueError(f"architecture {arch} does not take {dim}-d input")
    if warm_start is not None:
        warm_start.check(arch)
        start = warm_start
        provenance = provenance or "inherited"
    else:
        init = init or InitStrategy(seed=config.seed)
        start = init_params(arch, init)
        provenance = "random"

    X = sample_points(config, dim)
    y = monomial(X, exponents)
    try:
        result = train(start, arch, X, y, config, context=format_exponents(exponents))
    except TrainingDivergedError as exc:
        raise BasisTrainingError(exponents, str(exc)) from exc
    residual = forward(result.params, arch, X)[:, 0] - y
    final = float(np.mean(residual * residual))
    return BasisNet(exponents, arch, result.params, final, result.epochs_run, config.seed,
                    provenance, result.history)


def config_digest(arch: Architecture, config: TrainConfig, init: InitStrategy) -> str:
    """Hash of everything that determines a pretrained library (besides the max degree)."""
    blob = json.dumps({"arch": list(arch.layer_widths), "activation": arch.activation.value,
                       "config": config.to_dict(),
                       "init": {"kind": init.kind.value, "gain": init.gain, "seed": init.seed, "bias": init.bias}},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(eq=False)
class BasisLibrary:
    dimension: int
    max_degree: int
    arch: Architecture
    config: TrainConfig
    nets: dict[tuple[int, ...], BasisNet]
    created: int = 0
    init: InitStrategy = field(default_factory=InitStrategy)

    def __post_init__(self):
        expected = graded_exponents(self.dimension, self.max_degree)
        if sorted(self.nets) != sorted(expected):
            missing = sorted(set(expected) - set(self.nets))
            extra = sorted(set(self.nets) - set(expected))
            raise ValueError(f"library of degree {self.max_degree} is incomplete: missing {missing}, unexpected {extra}")
        self.nets = {e: self.nets[e] for e in expected}

    def __len__(self) -> int:
        return len(self.nets)

    def __getitem__(self, exponents) -> BasisNet:
        key = _key(exponents, self.dimension)
        try:
            return self.nets[key]
        except KeyError:
            raise MissingBasisError(
                f"no basis net for {format_exponents(key)} in a degree-{self.max_degree} library"
            ) from None

    def __contains__(self, exponents) -> bool:
        return _key(exponents, self.dimension) in self.nets

    @property
    def activation(self) -> ActivationKind:
        return self.arch.activation

    def config_digest(self) -> str:
        return config_digest(self.arch, self.config, self.init)

    def digest(self) -> str:
        """Content hash over every net's parameters and metadata."""
        h = hashlib.sha256(self.config_digest().encode())
        for e, net in self.nets.items():
            h.update(json.dumps([list(e), net.provenance, net.epochs, net.seed, float(net.final_mse).hex()]).encode())
            h.update(net.params.flat().astype("<f8").tobytes())
        return h.hexdigest()

    def same_as(self, other: "BasisLibrary") -> bool:
        return (
            self.dimension == other.dimension
            and self.max_degree == other.max_degree
            and self.arch == other.arch
            and self.config == other.config
            and self.init == other.init
            and self.created == other.created
            and list(self.nets) == list(other.nets)
            and all(self.nets[e].same_as(other.nets[e]) for e in self.nets)
        )

    def worst_mse(self) -> float:
        return max(net.final_mse for net in self.nets.values())

    def summary_rows(self) -> list[dict]:
        return [
            {"exponents": format_exponents(e), "degree": net.total_degree, "final_mse": net.final_mse,
             "epochs": net.epochs, "provenance": net.provenance}
            for e, net in self.nets.items()
        ]


def _key(exponents, dimension: int) -> tuple[int, ...]:
    if isinstance(exponents, (int, np.integer)):
        exponents = (int(exponents),)
    key = tuple(int(e) for e in exponents)
    if len(key) != dimension:
        raise MissingBasisError(f"exponents {key} do not match library dimension {dimension}")
    return key


def progressive_pretrain(
    dimension: int,
    max_degree: int | None = None,
    config: TrainConfig | None = None,
    arch: Architecture | None = None,
    init: InitStrategy | None = None,
    max_mse: float | None = ACCEPT_MSE,
    created: int = 0,
    progress: Callable[[BasisNet], None] | None = None,
) -> BasisLibrary:
    """Build a basis library by warm-starting each net from its predecessor.

    A net that diverges, or ends above ``max_mse``, is retrained once from
    random weights; a second failure aborts the chain.
    """
    if max_degree is None:
        max_degree = DEFAULT_MAX_DEGREE[dimension]
    order = graded_exponents(dimension, max_degree)
    config = config or default_train_config(dimension)
    arch = arch or default_architecture(dimension)
    init = init or InitStrategy(seed=config.seed)

    nets: dict[tuple[int, ...], BasisNet] = {}
    previous: BasisNet | None = None
    for index, exponents in enumerate(order):
        net = None
        failure = None
        try:
            if previous is None:
                net = train_basis(exponents, config, arch, init=init)
            else:
                net = train_basis(exponents, config, arch, warm_start=previous.params,
                                  provenance=_inherited_tag(previous.exponents))
        except BasisTrainingError as exc:
            failure = str(exc)
        if net is not None and max_mse is not None and net.final_mse > max_mse:
            failure = f"final MSE {net.final_mse:.3e} above {max_mse:.1e}"
        if failure is not None:
            log.warning("%s; retrying from random init", failure)
            retry_init = dataclasses.replace(init, seed=init.seed + 1 + index)
            net = train_basis(exponents, config, arch, init=retry_init)
            if max_mse is not None and net.final_mse > max_mse:
                raise BasisTrainingError(exponents, f"final MSE {net.final_mse:.3e} above {max_mse:.1e} after retry")
        log.info("%s: mse=%.3e epochs=%d (%s)", format_exponents(exponents), net.final_mse, net.epochs, net.provenance)
        nets[exponents] = net
        previous = net
        if progress is not None:
            progress(net)
    return BasisLibrary(dimension, max_degree, arch, config, nets, created, init)


def validate_library(library: BasisLibrary, max_mse: float = ACCEPT_MSE) -> None:
    bad = [(format_exponents(e), n.final_mse) for e, n in library.nets.items() if not n.final_mse <= max_mse]
    if bad:
        raise BasisTrainingError((), f"library rejected, nets above MSE {max_mse:g}: {bad}")


def eval_basis(library: BasisLibrary, exponents, X_hat, warn: bool = True) -> np.ndarray:
    """Forward pass of the stored net for ``exponents``.

    Inputs outside the reference domain are evaluated anyway (extrapolation)
    but raise an :class:`ExtrapolationWarning` when ``warn`` is set.
    """
    net = library[exponents]
    X_hat = np.asarray(X_hat, dtype=np.float64)
    if warn and X_hat.size and np.abs(X_hat).max() > 1.0:
        warnings.warn(f"{format_exponents(net.exponents)} evaluated outside [-1, 1]", ExtrapolationWarning,
                      stacklevel=2)
    return net(X_hat)


def iter_nets(library: BasisLibrary) -> Iterable[BasisNet]:
    return iter(library.nets.values())
