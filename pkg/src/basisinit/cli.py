"""Command-line entry point: ``basisinit {pretrain,approx,predict,bench,inspect}``.

Exit status: 0 success, 1 usage error, 2 runtime failure.

Every subcommand accepts ``--config FILE``, a flat ``key = value`` file
(``#`` starts a comment; values are parsed as JSON when possible, else kept
as strings). Keys are TrainConfig fields for ``pretrain`` and experiment
settings for ``bench``; command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path

import numpy as np

from basisinit.basis import (
    ACCEPT_MSE,
    DEFAULT_MAX_DEGREE,
    DEFAULT_WIDTH,
    BasisLibrary,
    default_train_config,
    format_exponents,
    progressive_pretrain,
)
from basisinit.bench.experiments import DEFAULT_SETTINGS, default_spec, run_experiment
from basisinit.bench.report import KINDS, write_report
from basisinit.bench.targets import TARGETS, builtin_target
from basisinit.domain import MODES
from basisinit.libfile import load_library, save_library
from basisinit.nn import Architecture, InitStrategy, TrainConfig
from basisinit.projection import (
    SOURCES,
    FitModel,
    default_test_grid,
    evaluate_fit,
    fit,
    fit_samples,
    load_model,
    predict,
)

log = logging.getLogger("basisinit")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- parsing helpers

def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", key):
            raise UsageError(f"{path}:{lineno}: invalid key {key!r}")
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def parse_domain(text: str | None, dimension: int | None = None):
    if text is None:
        return None
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--domain expects numbers a,b[,c,d], got {text!r}") from None
    if len(vals) not in (2, 4):
        raise UsageError(f"--domain expects a,b or a,b,c,d, got {len(vals)} values")
    dom = tuple((vals[i], vals[i + 1]) for i in range(0, len(vals), 2))
    if any(lo >= hi for lo, hi in dom):
        raise UsageError(f"--domain bounds must satisfy lower < upper, got {text!r}")
    if dimension is not None and len(dom) != dimension:
        if len(dom) == 1:
            dom = dom * dimension
        else:
            raise UsageError(f"--domain has {len(dom)} intervals but the problem is {dimension}-d")
    return dom


def parse_seeds(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(s) for s in str(text).split(",")]
    except ValueError:
        raise UsageError(f"--seed expects an integer or a comma-separated list, got {text!r}") from None


def read_samples(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a sample file: a header line, then columns ``x[,y],f`` separated by commas or whitespace."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if len(lines) < 2:
        raise UsageError(f"{path}: sample file needs a header and at least one row")
    rows = []
    for i, ln in enumerate(lines[1:], 2):
        parts = [p for p in re.split(r"[,\s]+", ln.strip()) if p]
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise UsageError(f"{path}:{i}: non-numeric value in {ln!r}") from None
    widths = {len(r) for r in rows}
    if len(widths) != 1 or widths.pop() not in (2, 3):
        raise UsageError(f"{path}: every row must have 2 (x,f) or 3 (x,y,f) columns")
    data = np.array(rows, dtype=np.float64)
    return data[:, :-1], data[:, -1]


def read_points(path) -> np.ndarray:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    body = lines[1:] if lines and re.search(r"[A-Za-z]", lines[0]) else lines
    try:
        data = np.array([[float(p) for p in re.split(r"[,\s]+", ln.strip()) if p] for ln in body])
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return data.reshape(len(body), -1)


def _created() -> int:
    return int(os.environ.get("SOURCE_DATE_EPOCH", "0"))


# --------------------------------------------------------------------------- commands

_TRAIN_FLAGS = {"epochs": "epochs", "lr": "learning_rate", "seed": "seed"}


def cmd_pretrain(args) -> int:
    dim = args.dim
    file_cfg = read_config_file(args.config) if args.config else {}
    known = set(TrainConfig.__dataclass_fields__)
    extra = {k: v for k, v in file_cfg.items() if k not in known}
    unknown = set(extra) - {"activation", "arch", "width", "max_degree", "max_mse", "init", "gain", "bias"}
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    overrides = {k: v for k, v in file_cfg.items() if k in known}
    for flag, field in _TRAIN_FLAGS.items():
        if getattr(args, flag) is not None:
            overrides[field] = parse_seeds(args.seed)[0] if flag == "seed" else getattr(args, flag)
    if "domain" in overrides:
        overrides["domain"] = tuple(tuple(d) for d in overrides["domain"])
    config = default_train_config(dim, **overrides)

    activation = args.activation or extra.get("activation", "gelu")
    arch_text = args.arch or extra.get("arch")
    if arch_text:
        arch = Architecture.parse(str(arch_text), activation)
        if arch.input_dim != dim or arch.output_dim != 1:
            raise UsageError(f"--arch {arch_text} must start with {dim} and end with 1")
    else:
        arch = Architecture((dim, int(extra.get("width", DEFAULT_WIDTH)), 1), activation)
    M = args.max_degree if args.max_degree is not None else int(extra.get("max_degree", DEFAULT_MAX_DEGREE[dim]))
    if M < 0:
        raise UsageError("--max-degree must be >= 0")
    init = InitStrategy(extra.get("init", "kaiming"), float(extra.get("gain", 1.0)), config.seed,
                        bias=extra.get("bias", "zero"))

    def progress(net):
        if args.verbose:
            print(f"  {format_exponents(net.exponents):>10}  mse={net.final_mse:.3e}  ({net.provenance})",
                  file=sys.stderr, flush=True)

    max_mse = args.max_mse if args.max_mse is not None else extra.get("max_mse", ACCEPT_MSE)
    if isinstance(max_mse, str):
        max_mse = None if max_mse.lower() == "none" else float(max_mse)
    library = progressive_pretrain(dim, M, config, arch, init, max_mse=max_mse, created=_created(),
                                   progress=progress)
    out = Path(args.out or f"basis_{dim}d_M{M}.bin")
    save_library(library, out)
    _print_library_table(library)
    print(f"wrote {out} ({len(library)} nets, digest {library.digest()[:16]})")
    return EXIT_OK


def _print_library_table(library: BasisLibrary) -> None:
    print(f"{'basis':>10}  {'final_mse':>11}  {'epochs':>6}  provenance")
    for row in library.summary_rows():
        print(f"{row['exponents']:>10}  {row['final_mse']:11.3e}  {row['epochs']:6d}  {row['provenance']}")


def _load_library_arg(path) -> BasisLibrary:
    if path is None:
        raise UsageError("--library is required with the network basis source")
    if not Path(path).exists():
        raise FileNotFoundError(f"library file not found: {path}")
    return load_library(path)


def cmd_approx(args) -> int:
    if (args.target is None) == (args.samples is None):
        raise UsageError("give exactly one of --target NAME or --samples FILE")
    if args.degree is None:
        raise UsageError("--degree is required")
    library = _load_library_arg(args.library) if args.basis_source == "network" else None
    if args.target is not None:
        try:
            target = builtin_target(args.target)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
        dim = target.dimension
        domain = parse_domain(args.domain, dim) or target.domain
        if library is not None and library.dimension != dim:
            raise ValueError(f"target {target.name} is {dim}-d but the library is {library.dimension}-d")
        model = fit(library, args.degree, target, domain, None, args.mapping, args.basis_source, name=target.name)
        test = evaluate_fit(model, library, target, default_test_grid(domain, dim))
    else:
        X, y = read_samples(args.samples)
        dim = X.shape[1]
        if library is not None and library.dimension != dim:
            raise ValueError(f"sample file is {dim}-d but the library is {library.dimension}-d")
        domain = parse_domain(args.domain, dim)
        model = fit_samples(library, args.degree, X, y, args.mapping, args.basis_source, domain=domain,
                            target=str(args.samples))
        test = None

    out = Path(args.out or "model.json")
    doc = model.to_dict()
    doc["effective_config"] = {"degree": args.degree, "mapping": args.mapping, "basis_source": args.basis_source,
                               "domain": [list(d) for d in model.domain], "library": args.library,
                               "target": args.target, "samples": args.samples}
    if test is not None:
        doc["test_metrics"] = test.to_dict()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    shown = test or model.metrics
    label = "test" if test is not None else "fit"
    print(f"{label} MSE = {shown.mse:.6e}")
    print(f"{label} R2  = {shown.r_squared:.9f}" if shown.r_squared is not None else f"{label} R2  = undefined")
    if model.ill_conditioned:
        print(f"warning: design matrix is ill-conditioned (estimate {model.condition_estimate:.2e})",
              file=sys.stderr)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    library = _load_library_arg(args.library) if model.source == "network" else None
    if args.input is not None:
        X = read_points(args.input)
    elif args.x is not None:
        X = np.array([[float(v) for v in pt.split(",")] for pt in args.x])
    else:
        raise UsageError("give --input FILE or one or more --x values")
    if X.shape[1] != model.dimension:
        raise UsageError(f"model is {model.dimension}-d but points have {X.shape[1]} columns")
    y = predict(model, library, X)
    lines = [",".join([*(f"x{c + 1}" for c in range(X.shape[1])), "prediction"])]
    lines += [",".join([*(repr(float(v)) for v in row), repr(float(p))]) for row, p in zip(X, y)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


_BENCH_FLAGS = {"epochs": "epochs", "lr": "learning_rate", "activation": "activation", "arch": "arch"}


def cmd_bench(args) -> int:
    if args.kind not in KINDS:
        raise UsageError(f"unknown experiment kind {args.kind!r}; valid kinds: {', '.join(KINDS)}")
    settings = read_config_file(args.config) if args.config else {}
    for flag, key in _BENCH_FLAGS.items():
        if getattr(args, flag, None) is not None:
            settings[key] = getattr(args, flag)
    if args.kind.startswith("approx") and args.basis_source:
        settings["source"] = args.basis_source
    if args.kind.startswith("approx") and args.mapping:
        settings["mode"] = args.mapping
    allowed = set(DEFAULT_SETTINGS[args.kind])
    unknown = set(settings) - allowed
    if unknown:
        raise UsageError(f"settings not used by {args.kind}: {', '.join(sorted(unknown))}; "
                         f"known: {', '.join(sorted(allowed))}")
    spec = default_spec(args.kind, parse_seeds(args.seed), **settings)
    spec.out = str(args.out)
    library = None
    if args.library:
        library = load_library(args.library)
    elif args.kind == "basis-verify" or (args.kind.startswith("approx") and settings.get("source", "network")
                                         == "network"):
        raise UsageError(f"{args.kind} needs --library (or --basis-source oracle for the approximation suites)")
    report = run_experiment(spec, library=library, jobs=args.jobs)
    run_dir = write_report(report, args.out)
    failed = report.failures()
    print(f"{len(report.rows)} cells, {len(failed)} failed")
    print(f"report: {run_dir}")
    return EXIT_OK if not failed else EXIT_RUNTIME


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    head = path.read_bytes()[:8]
    if head == b"BASISLIB":
        lib = load_library(path)
        print(f"basis library: dimension {lib.dimension}, max degree {lib.max_degree}, {len(lib)} nets")
        print(f"architecture: {lib.arch}  activation: {lib.activation.value}")
        print(f"config digest: {lib.config_digest()}")
        print(f"library digest: {lib.digest()}")
        print(f"train config: {json.dumps(lib.config.to_dict(), sort_keys=True)}")
        _print_library_table(lib)
    else:
        try:
            model = FitModel.from_json(path.read_text())
        except (ValueError, KeyError, UnicodeDecodeError) as exc:
            raise ValueError(f"{path} is neither a basis library nor a fit model: {exc}") from None
        print(f"fit model: target {model.target or '-'}, dimension {model.dimension}, "
              f"degree {model.degree_set.max_degree}, {len(model.coefficients)} coefficients")
        print(f"mapping: {model.mode}  basis source: {model.source}  domain: {list(map(list, model.domain))}")
        print(f"fit MSE {model.metrics.mse:.6e}  R2 {model.metrics.r_squared}")
        print(f"condition estimate {model.condition_estimate:.3e}  rank {model.rank}")
        for label, c in zip(model.degree_set.labels(), model.coefficients):
            print(f"  {label:>10}  {c: .17e}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="basisinit", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", metavar="FILE", help="flat key = value config file; flags override it")
        sp.add_argument("--out", metavar="PATH", help="output file or directory")
        sp.add_argument("-v", "--verbose", action="store_true", help="progress output on stderr")

    sp = sub.add_parser("pretrain", help="train a basis library by progressive initialization")
    sp.add_argument("--dim", type=int, choices=(1, 2), default=1, help="input dimension (default 1)")
    sp.add_argument("--max-degree", type=int, help="highest total degree M (default 12 in 1-d, 6 in 2-d)")
    sp.add_argument("--seed", help="random seed (default 0)")
    sp.add_argument("--epochs", type=int, help="optimizer steps per basis net")
    sp.add_argument("--lr", type=float, help="Adam learning rate")
    sp.add_argument("--activation", help="activation function (default gelu)")
    sp.add_argument("--arch", help="layer widths, e.g. 1,1024,1")
    sp.add_argument("--max-mse", help="reject a net whose training MSE ends above this (default 1e-5; "
                                      "'none' disables the check)")
    common(sp)
    sp.set_defaults(func=cmd_pretrain)

    sp = sub.add_parser("approx", help="fit a target by least squares over the basis library")
    sp.add_argument("--library", metavar="FILE", help="basis library file (network basis source)")
    sp.add_argument("--target", help=f"builtin target: {', '.join(TARGETS)}")
    sp.add_argument("--samples", metavar="FILE", help="sample file: header, then columns x[,y],f")
    sp.add_argument("--degree", type=int, help="maximal total degree K of the projection")
    sp.add_argument("--domain", help="a,b (1-d) or a,b,c,d (2-d); default: the target's domain")
    sp.add_argument("--mapping", choices=MODES, default="pointwise", help="domain mapping mode")
    sp.add_argument("--basis-source", choices=SOURCES, default="network",
                    help="network: pretrained nets; oracle: exact monomials")
    common(sp)
    sp.set_defaults(func=cmd_approx)

    sp = sub.add_parser("predict", help="evaluate a fitted model at new points")
    sp.add_argument("--model", required=True, metavar="FILE", help="fit model written by approx")
    sp.add_argument("--library", metavar="FILE", help="basis library the model was fitted with")
    sp.add_argument("--input", metavar="FILE", help="points file, one point per line")
    sp.add_argument("--x", action="append", metavar="X[,Y]", help="a point; may be repeated")
    common(sp)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("bench", help="run a benchmark experiment and write its report tree")
    sp.add_argument("kind", help=f"experiment kind: {', '.join(KINDS)}")
    sp.add_argument("--library", metavar="FILE", help="basis library (basis-verify, approx suites, "
                                                      "extrapolation-demo)")
    sp.add_argument("--seed", help="seed list, e.g. 0,1,2,3,4")
    sp.add_argument("--epochs", type=int, help="training epochs override")
    sp.add_argument("--lr", type=float, help="learning rate override")
    sp.add_argument("--activation", help="activation override")
    sp.add_argument("--arch", help="architecture override")
    sp.add_argument("--mapping", choices=MODES, help="mapping mode (approximation suites)")
    sp.add_argument("--basis-source", choices=SOURCES, help="basis source (approximation suites)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for independent cells")
    common(sp)
    sp.set_defaults(func=cmd_bench, out=None)

    sp = sub.add_parser("inspect", help="print metadata of a library or fit model file")
    sp.add_argument("path", help="library (.bin) or model (.json) file")
    sp.add_argument("-v", "--verbose", action="store_true", help="log output on stderr")
    sp.set_defaults(func=cmd_inspect)
    p.subcommands = dict(sub.choices)
    return p


def _glue_values(argv: list[str]) -> list[str]:
    # "--domain -1,9" would read "-1,9" as an option; bind such values explicitly
    out, i = [], 0
    while i < len(argv):
        if argv[i] in ("--domain", "--x") and i + 1 < len(argv):
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_values(list(sys.argv[1:] if argv is None else argv)))
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bench" and args.out is None:
        args.out = "runs"
    try:
        return args.func(args)
    except UsageError as exc:
        parser.subcommands[args.command].print_usage(sys.stderr)
        print(f"basisinit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"basisinit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
