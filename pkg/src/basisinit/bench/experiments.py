"""Desk-scale experiment runners.

Every experiment is a grid of cells run once per seed. A cell is a pure
function of ``(cell parameters, seed, settings, context)`` so cells can run
in a process pool and still reproduce bit-identically. A failing cell is
recorded with ``status="failed"`` and its error message; the run continues.

Sweeps on ``y = x^3`` train on [-1, 1] and are scored on a wider test grid
through the decimal map: the net sees ``x_hat`` and the reported ``mse``/
``r2`` compare ``net(x_hat)`` with ``x_hat^3``. The unmapped comparison
``10^(3s) net(x_hat)`` vs ``x^3`` is reported alongside as ``mse_unmapped``
and ``r2_unmapped``.
"""

from __future__ import annotations

import copy
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable

import numpy as np

from basisinit.activations import ActivationKind, time_activation
from basisinit.basis import (
    BasisLibrary,
    default_architecture,
    default_train_config,
    format_exponents,
    monomial,
    train_basis,
)
from basisinit.bench.report import ExperimentReport, ExperimentSpec, curve_id, environment_fingerprint
from basisinit.bench.targets import SUITE_1D, SUITE_2D, builtin_target
from basisinit.domain import map_domain, unmap_basis_value
from basisinit.metrics import evaluate
from basisinit.nn import Architecture, InitStrategy, TrainConfig, forward, init_params, sample_points, train
from basisinit.projection import GridSpec, default_fit_grid, evaluate_fit, fit, predict

log = logging.getLogger(__name__)

WIDTH_SWEEP = ["1,8,1", "1,16,1", "1,32,1", "1,64,1", "1,128,1", "1,256,1"]
DEPTH_SWEEP = ["1,8,1", "1,8,8,1", "1,8,8,8,8,1", "1,128,1", "1,128,128,1", "1,128,128,128,128,1"]
MIXED_SWEEP = [
    "1,8,1", "1,8,8,1", "1,8,16,1", "1,8,32,1", "1,8,64,1", "1,8,128,1", "1,8,256,1", "1,8,8,8,8,1",
    "1,8,16,32,64,1", "1,8,16,32,128,1", "1,8,16,32,256,1", "1,8,16,64,128,1", "1,8,16,64,256,1",
    "1,8,16,128,256,1", "1,8,32,64,128,1", "1,8,32,64,256,1", "1,8,32,128,256,1", "1,8,64,128,256,1",
]
ALL_ACTIVATIONS = [a.value for a in ActivationKind]

# settings shared by the x^3 sweeps (architecture and activation studies)
_CUBIC = {
    "activation": "gelu",
    "epochs": 5000,
    "learning_rate": 1e-2,
    "n_samples": 512,
    "init": "kaiming",
    "gain": 1.0,
    "bias": "fan_in",
    "test_domain": [-20.0, 20.0],
    "n_test": 2001,
}

DEFAULT_SETTINGS: dict[str, dict[str, Any]] = {
    "init-sensitivity": {
        "arch": "2,64,64,64,1",
        "activation": "gelu",
        "target": "sin_pi_x_sin_4pi_y",
        "epochs": 2000,
        "learning_rate": 1e-3,
        "grid_size": 32,
        "bias": "zero",
        "n_test": 101,
    },
    "width-sweep": dict(_CUBIC),
    "depth-sweep": dict(_CUBIC),
    "mixed-arch-sweep": dict(_CUBIC),
    "activation-error": {**_CUBIC, "arch": "1,32,1"},
    "activation-timing": {"n_iters": 1000, "batch_size": 20_000},
    "basis-verify": {"verify_domain": [-10.0, 10.0], "n_test_1d": 2001, "n_test_2d": 101, "mode": "pointwise"},
    "approx-1d": {"source": "network", "mode": "pointwise", "grid_kind": "midpoint", "n_fit": None,
                  "n_test": 2001, "coordinate_scaling": "shared"},
    "approx-2d": {"source": "network", "mode": "pointwise", "grid_kind": "midpoint", "n_fit": None,
                  "n_test": 101, "coordinate_scaling": "shared"},
    "extrapolation-demo": {
        "naive_arch": "1,64,64,1",
        "activation": "gelu",
        "naive_epochs": 5000,
        "naive_learning_rate": 1e-2,
        "n_samples": 512,
        "naive_train_domain": [-10.0, 10.0],
        "naive_test_domain": [-15.0, 15.0],
        "mapped_test_domain": [-60.0, 60.0],
        "reference_width": 1024,
        "n_test": 2001,
    },
    "progressive-benefit": {
        "threshold": 1e-5,
        "epochs": 5000,
        "learning_rate": 1e-3,
        "width": 1024,
        "activation": "gelu",
        "bias": "zero",
        "n_samples": 512,
    },
}

DEFAULT_GRIDS: dict[str, dict[str, list]] = {
    "init-sensitivity": {"init": ["uniform", "xavier", "kaiming"], "gain": [0.5, 1.0, 2.0, 5.0, 10.0, 20.0]},
    "width-sweep": {"arch": WIDTH_SWEEP},
    "depth-sweep": {"arch": DEPTH_SWEEP},
    "mixed-arch-sweep": {"arch": MIXED_SWEEP},
    "activation-error": {"activation": ALL_ACTIVATIONS},
    "activation-timing": {"activation": ALL_ACTIVATIONS},
    "basis-verify": {"exponents": ["all"]},
    "approx-1d": {"target": SUITE_1D},
    "approx-2d": {"target": SUITE_2D},
    "extrapolation-demo": {"arm": ["naive", "mapped"]},
    "progressive-benefit": {"degree": [2, 3, 4, 5, 6]},
}

# kinds whose cells are deterministic given the library; one seed is enough
_SINGLE_SEED = {"basis-verify", "approx-1d", "approx-2d"}

CLAIMS: dict[str, list[str]] = {
    "init-sensitivity": ["median rel_l2: kaiming gain 1 < kaiming gain 20",
                         "median rel_l2: uniform gain 0.5 < uniform gain 5"],
    "width-sweep": ["arch 1,8,1 reaches test mse below 1e-4"],
    "depth-sweep": ["median mse: 1,8,8,1 < 1,8,1"],
    "mixed-arch-sweep": ["median mse: 1,8,8,1 < 1,8,1"],
    "activation-error": ["median mse: mish < sigmoid"],
    "activation-timing": ["median total time: relu < gelu < mish"],
    "basis-verify": ["x^3 net through the map reaches r2 >= 0.999 on [-10, 10]"],
    "approx-1d": ["f1-f4 r2 >= 0.9999; f5 r2 >= 0.999999; f6 r2 >= 0.999 and mse <= 5e-2"],
    "approx-2d": ["all targets r2 >= 0.999; f3, f4 r2 >= 0.99999"],
    "extrapolation-demo": ["naive arm mse > 1e3 on its test domain",
                           "mapped arm r2 >= 0.99 on its test domain",
                           "mapped mse_normalized < naive mse_normalized"],
    "progressive-benefit": ["inherited arm reaches the threshold in fewer epochs than random init "
                            "in >= 4 of 5 seeds for each degree"],
}


def default_spec(kind: str, seeds: list[int] | None = None, **settings) -> ExperimentSpec:
    if seeds is None:
        seeds = [0] if kind in _SINGLE_SEED else [0, 1, 2, 3, 4]
    return ExperimentSpec(kind, copy.deepcopy(DEFAULT_GRIDS.get(kind, {})), seeds, settings)


# --------------------------------------------------------------------------- helpers

def _linspace_grid(domain, n: int) -> np.ndarray:
    lo, hi = float(domain[0]), float(domain[1])
    return np.linspace(lo, hi, int(n)).reshape(-1, 1)


def _metrics_row(y, y_hat, prefix: str = "") -> dict:
    rep = evaluate(y, y_hat)
    return {f"{prefix}mse": rep.mse, f"{prefix}r2": rep.r_squared, f"{prefix}rel_l2": rep.relative_l2}


def _mapped_cubic_metrics(net: Callable[[np.ndarray], np.ndarray], X: np.ndarray) -> tuple[dict, dict]:
    """Score a reference-domain cubic net on ``X`` through the pointwise map."""
    batch = map_domain(X, "pointwise")
    s = batch.s[:, 0]
    x_hat = batch.x_hat
    ref_pred = net(x_hat)
    ref_true = x_hat[:, 0] ** 3
    pred = unmap_basis_value(ref_pred, 3, s)
    true = X[:, 0] ** 3
    row = _metrics_row(ref_true, ref_pred)
    unmapped = evaluate(true, pred)
    row["mse_unmapped"] = unmapped.mse
    row["r2_unmapped"] = unmapped.r_squared
    curve = {"x": X[:, 0].tolist(), "x_hat": x_hat[:, 0].tolist(), "f": true.tolist(), "pred": pred.tolist()}
    return row, curve


def _train_cubic(arch_text: str, activation: str, seed: int, st: dict):
    arch = Architecture.parse(arch_text, activation)
    if arch.input_dim != 1 or arch.output_dim != 1:
        raise ValueError(f"cubic sweeps need a 1-in 1-out architecture, got {arch}")
    cfg = TrainConfig(epochs=int(st["epochs"]), learning_rate=float(st["learning_rate"]),
                      n_samples=int(st["n_samples"]), seed=seed)
    init = InitStrategy(st["init"], float(st["gain"]), seed, bias=st["bias"])
    X = sample_points(cfg, 1)
    result = train(init_params(arch, init), arch, X, X[:, 0] ** 3, cfg, context=f"{arch} seed {seed}")
    return arch, result


# --------------------------------------------------------------------------- cells

def _cell_init_sensitivity(cell, seed, st, ctx):
    arch = Architecture.parse(st["arch"], st["activation"])
    target = builtin_target(st["target"])
    cfg = TrainConfig(epochs=int(st["epochs"]), learning_rate=float(st["learning_rate"]), sampling="grid",
                      grid_size=int(st["grid_size"]), seed=seed)
    X = sample_points(cfg, arch.input_dim)
    init = InitStrategy(cell["init"], float(cell["gain"]), seed, bias=st["bias"])
    result = train(init_params(arch, init), arch, X, target(X), cfg, context=f"{cell} seed {seed}")
    Xt = GridSpec(((-1.0, 1.0), (-1.0, 1.0)), int(st["n_test"]), "linspace").points()
    row = _metrics_row(target(Xt), forward(result.params, arch, Xt)[:, 0])
    row["final_loss"] = result.history[-1]
    row["epochs_run"] = result.epochs_run
    curves = {curve_id("loss", cell["init"], f"g{cell['gain']}", f"s{seed}"):
              {"epoch": list(range(result.epochs_run)), "loss": list(result.history)}}
    return row, curves


def _cell_arch(cell, seed, st, ctx):
    arch, result = _train_cubic(cell["arch"], st["activation"], seed, st)
    X = _linspace_grid(st["test_domain"], st["n_test"])
    row, curve = _mapped_cubic_metrics(lambda xh: forward(result.params, arch, xh)[:, 0], X)
    row["n_params"] = arch.n_params
    row["final_loss"] = result.history[-1]
    return row, {curve_id("loss", cell["arch"], f"s{seed}"):
                 {"epoch": list(range(result.epochs_run)), "loss": list(result.history)}}


def _cell_activation_error(cell, seed, st, ctx):
    arch, result = _train_cubic(st["arch"], cell["activation"], seed, st)
    X = _linspace_grid(st["test_domain"], st["n_test"])
    row, _ = _mapped_cubic_metrics(lambda xh: forward(result.params, arch, xh)[:, 0], X)
    row["final_loss"] = result.history[-1]
    return row, {}


def _cell_activation_timing(cell, seed, st, ctx):
    rec = time_activation(cell["activation"], int(st["n_iters"]), int(st["batch_size"]), seed=seed)
    return {"forward_ns": rec["forward_ns"], "backward_ns": rec["backward_ns"],
            "total_ns": rec["forward_ns"] + rec["backward_ns"]}, {}


def _cell_basis_verify(cell, seed, st, ctx):
    library: BasisLibrary = ctx["library"]
    exps = tuple(int(e) for e in str(cell["exponents"]).split(","))
    net = library[exps]
    dom = st["verify_domain"]
    if library.dimension == 1:
        X = _linspace_grid(dom, st["n_test_1d"])
    else:
        X = GridSpec(((dom[0], dom[1]),) * 2, int(st["n_test_2d"]), "linspace").points()
    batch = map_domain(X, st["mode"])  # shared scaling: one exponent per row
    pred = unmap_basis_value(net(batch.x_hat), net.total_degree, batch.s[:, 0])
    true = monomial(X, exps)
    row = _metrics_row(true, pred)
    ref = GridSpec(((-1.0, 1.0),) * library.dimension, 2001 if library.dimension == 1 else 101, "midpoint").points()
    row["reference_mse"] = evaluate(monomial(ref, exps), net(ref)).mse
    row["train_mse"] = net.final_mse
    row["provenance"] = net.provenance
    cols = {f"x{c + 1}": X[:, c].tolist() for c in range(X.shape[1])}
    cols.update({"f": true.tolist(), "pred": pred.tolist()})
    return row, {curve_id("verify", format_exponents(exps)): cols}


def _cell_approx(cell, seed, st, ctx):
    target = builtin_target(cell["target"])
    library = ctx.get("library")
    source = st["source"]
    if source == "network" and library is None:
        raise ValueError("network basis source needs a basis library")
    K = int(cell.get("degree") or target.max_degree)
    grid = default_fit_grid(target.domain, target.dimension)
    grid = GridSpec(grid.domain, int(st["n_fit"] or grid.n), st["grid_kind"], seed)
    model = fit(library if source == "network" else None, K, target, target.domain, grid, st["mode"], source,
                st["coordinate_scaling"], name=target.name)
    test = GridSpec(target.domain, int(st["n_test"]), "midpoint")
    rep = evaluate_fit(model, library if source == "network" else None, target, test)
    row = {"degree": K, "domain": str(list(map(list, target.domain))), "mse": rep.mse, "r2": rep.r_squared,
           "rel_l2": rep.relative_l2, "fit_mse": model.metrics.mse, "condition": model.condition_estimate,
           "rank": model.rank, "ill_conditioned": model.ill_conditioned,
           "table_mse": target.ref_mse, "table_r2": target.ref_r2}
    X = test.points()
    cols = {f"x{c + 1}": X[:, c].tolist() for c in range(X.shape[1])}
    cols.update({"f": target(X).tolist(),
                 "pf": predict(model, library if source == "network" else None, X).tolist()})
    return row, {curve_id("approx", target.name): cols}


def _cell_extrapolation(cell, seed, st, ctx):
    arm = cell["arm"]
    if arm == "naive":
        arch = Architecture.parse(st["naive_arch"], st["activation"])
        lo, hi = st["naive_train_domain"]
        cfg = TrainConfig(epochs=int(st["naive_epochs"]), learning_rate=float(st["naive_learning_rate"]),
                          n_samples=int(st["n_samples"]), domain=((lo, hi),), seed=seed)
        X = sample_points(cfg, 1)
        init = InitStrategy("kaiming", 1.0, seed, bias="fan_in")
        result = train(init_params(arch, init), arch, X, X[:, 0] ** 3, cfg, context=f"naive seed {seed}")
        dom = st["naive_test_domain"]
        Xt = _linspace_grid(dom, st["n_test"])
        pred = forward(result.params, arch, Xt)[:, 0]
        true = Xt[:, 0] ** 3
        row = _metrics_row(true, pred)
        row["train_domain_mse"] = evaluate(X[:, 0] ** 3, forward(result.params, arch, X)[:, 0]).mse
    elif arm == "mapped":
        library = ctx.get("library")
        if library is not None and (3,) in library:
            net = library[(3,)]
        else:
            net = train_basis((3,), default_train_config(1, seed=seed),
                              default_architecture(1, st["activation"], int(st["reference_width"])),
                              init=InitStrategy(seed=seed))
        dom = st["mapped_test_domain"]
        Xt = _linspace_grid(dom, st["n_test"])
        batch = map_domain(Xt, "pointwise")
        pred = unmap_basis_value(net(batch.x_hat), 3, batch.s[:, 0])
        true = Xt[:, 0] ** 3
        row = _metrics_row(true, pred)
    else:
        raise ValueError(f"unknown arm {arm!r}; expected naive or mapped")
    half_width = max(abs(dom[0]), abs(dom[1]))
    # MSE of the same problem rescaled to [-1, 1]: a cubic scales by width^3, its MSE by width^6
    row["mse_normalized"] = row["mse"] / half_width ** 6
    row["test_domain"] = str(list(dom))
    return row, {curve_id("extrapolation", arm, f"s{seed}"):
                 {"x": Xt[:, 0].tolist(), "f": true.tolist(), "pred": pred.tolist()}}


def _progressive_setup(st: dict, seed: int):
    arch = default_architecture(1, st["activation"], int(st["width"]))
    cfg = TrainConfig(epochs=int(st["epochs"]), learning_rate=float(st["learning_rate"]),
                      n_samples=int(st["n_samples"]), seed=seed)
    init = InitStrategy("kaiming", 1.0, seed, bias=st["bias"])
    return arch, cfg, init


def _progressive_chain(st: dict, seed: int, up_to: int) -> dict[int, Any]:
    """Predecessor parameters per degree: the chain trained exactly as pretraining does it."""
    arch, cfg, init = _progressive_setup(st, seed)
    chain = {}
    params = init_params(arch, init)
    base = default_train_config(1, epochs=cfg.epochs, learning_rate=cfg.learning_rate, n_samples=cfg.n_samples,
                                seed=seed)
    for k in range(up_to):
        X = sample_points(base, 1)
        params = train(params, arch, X, X[:, 0] ** k, base, context=f"chain x^{k}").params
        chain[k] = params
    return chain


def _cell_progressive(cell, seed, st, ctx):
    k = int(cell["degree"])
    if k < 1:
        raise ValueError("degree must be >= 1 (degree 0 has no predecessor)")
    arch, cfg, init = _progressive_setup(st, seed)
    cfg = cfg.with_(mse_threshold=float(st["threshold"]))
    X = sample_points(cfg, 1)
    y = X[:, 0] ** k
    start = ctx["chains"][seed][k - 1]
    inherited = train(start, arch, X, y, cfg, context=f"inherited x^{k}")
    random_init = InitStrategy(init.kind, init.gain, seed + 1000 + k, bias=init.bias)
    fresh = train(init_params(arch, random_init), arch, X, y, cfg, context=f"random x^{k}")
    thr = float(st["threshold"])
    e_inh = inherited.first_epoch_below(thr)
    e_rnd = fresh.first_epoch_below(thr)
    row = {
        "epochs_inherited": e_inh,
        "epochs_random": e_rnd,
        "final_inherited": inherited.history[-1],
        "final_random": fresh.history[-1],
        "inherited_faster": e_inh is not None and (e_rnd is None or e_inh < e_rnd),
    }
    return row, {curve_id("loss", f"x{k}", f"s{seed}"): {
        "epoch": list(range(cfg.epochs)),
        "inherited": inherited.history + [None] * (cfg.epochs - len(inherited.history)),
        "random": fresh.history + [None] * (cfg.epochs - len(fresh.history)),
    }}


_CELLS = {
    "init-sensitivity": _cell_init_sensitivity,
    "width-sweep": _cell_arch,
    "depth-sweep": _cell_arch,
    "mixed-arch-sweep": _cell_arch,
    "activation-error": _cell_activation_error,
    "activation-timing": _cell_activation_timing,
    "basis-verify": _cell_basis_verify,
    "approx-1d": _cell_approx,
    "approx-2d": _cell_approx,
    "extrapolation-demo": _cell_extrapolation,
    "progressive-benefit": _cell_progressive,
}


def _run_cell(kind: str, cell: dict, seed: int, settings: dict, ctx: dict):
    head = {**cell, "seed": seed}
    try:
        row, curves = _CELLS[kind](cell, seed, settings, ctx)
    except Exception as exc:  # recorded per cell; the run continues
        log.warning("%s cell %s seed %d failed: %s", kind, cell, seed, exc)
        log.debug("%s", traceback.format_exc())
        return {**head, "status": "failed", "error": f"{type(exc).__name__}: {exc}"}, {}
    return {**head, "status": "ok", "error": None, **row}, curves


# --------------------------------------------------------------------------- driver

def run_experiment(spec: ExperimentSpec, library: BasisLibrary | None = None, jobs: int = 1,
                   progress: Callable[[dict], None] | None = None) -> ExperimentReport:
    """Run every cell of ``spec`` for every seed and assemble the report.

    ``library`` is needed by basis-verify, the approximation suites with the
    network basis source, and (optionally) the mapped extrapolation arm.
    ``jobs > 1`` runs cells in a process pool; rows keep grid order.
    """
    kind = spec.kind
    settings = {**DEFAULT_SETTINGS[kind], **spec.settings}
    grid = copy.deepcopy(spec.grid)
    ctx: dict[str, Any] = {"library": library}
    if library is not None:
        settings["library_digest"] = library.digest()
    if kind == "basis-verify":
        if library is None:
            raise ValueError("basis-verify needs a basis library")
        if grid.get("exponents") == ["all"]:
            grid["exponents"] = [",".join(map(str, e)) for e in library.nets]
    if kind == "approx-2d" and library is not None and library.dimension != 2 and settings["source"] == "network":
        raise ValueError("approx-2d needs a 2-d basis library")
    if kind == "approx-1d" and library is not None and library.dimension != 1 and settings["source"] == "network":
        raise ValueError("approx-1d needs a 1-d basis library")
    if kind == "progressive-benefit":
        top = max(int(k) for k in grid["degree"])
        ctx["chains"] = {seed: _progressive_chain(settings, seed, top) for seed in spec.seeds}

    echo = ExperimentSpec(kind, grid, list(spec.seeds), settings, spec.out)
    tasks = [(cell, seed) for cell in echo.cells() for seed in echo.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, kind, cell, seed, settings, ctx) for cell, seed in tasks]
            results = [f.result() for f in futures]
    else:
        results = []
        for cell, seed in tasks:
            results.append(_run_cell(kind, cell, seed, settings, ctx))
            if progress is not None:
                progress(results[-1][0])
    rows = [r for r, _ in results]
    curves: dict[str, dict[str, list]] = {}
    for _, c in results:
        curves.update(c)
    return ExperimentReport(echo, rows, curves, environment_fingerprint(), list(CLAIMS.get(kind, [])))


def run_init_sensitivity(spec: ExperimentSpec | None = None, jobs: int = 1) -> ExperimentReport:
    return run_experiment(spec or default_spec("init-sensitivity"), jobs=jobs)


def run_arch_sweep(spec: ExperimentSpec | None = None, jobs: int = 1) -> ExperimentReport:
    spec = spec or default_spec("width-sweep")
    if spec.kind not in ("width-sweep", "depth-sweep", "mixed-arch-sweep"):
        raise ValueError(f"not an architecture sweep: {spec.kind}")
    return run_experiment(spec, jobs=jobs)


def run_activation_study(seeds: list[int] | None = None, jobs: int = 1, error_settings: dict | None = None,
                         timing_settings: dict | None = None) -> tuple[ExperimentReport, ExperimentReport]:
    """Error pass over all activations, then a separate timing pass."""
    err = run_experiment(default_spec("activation-error", seeds, **(error_settings or {})), jobs=jobs)
    # timing runs serially so that workers do not compete for the CPU
    tim = run_experiment(default_spec("activation-timing", seeds, **(timing_settings or {})), jobs=1)
    return err, tim


def run_approximation_suite(dimension: int, library: BasisLibrary | None = None, jobs: int = 1,
                            **settings) -> ExperimentReport:
    kind = {1: "approx-1d", 2: "approx-2d"}.get(dimension)
    if kind is None:
        raise ValueError(f"approximation suites exist for dimension 1 and 2, not {dimension}")
    return run_experiment(default_spec(kind, **settings), library=library, jobs=jobs)


def run_extrapolation_demo(library: BasisLibrary | None = None, seeds: list[int] | None = None,
                           jobs: int = 1, **settings) -> ExperimentReport:
    return run_experiment(default_spec("extrapolation-demo", seeds, **settings), library=library, jobs=jobs)


def median_of(report: ExperimentReport, column: str, **where) -> float:
    """Median of ``column`` over matching rows; failed cells count as +inf."""
    vals = [np.inf if (r["status"] != "ok" or r.get(column) is None) else float(r[column])
            for r in report.rows if all(r.get(k) == v for k, v in where.items())]
    if not vals:
        raise KeyError(f"no rows match {where}")
    return float(np.median(vals))
