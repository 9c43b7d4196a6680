"""Experiment specs, reports and their on-disk layout.

A run is written to ``<out>/<experiment>/<timestamp>/``::

    report.csv       one row per grid cell x seed
    curves/<id>.csv  per-cell columnar series (loss curves, plot data)
    spec.json        the spec echo plus the claims the experiment checks
    env.json         environment fingerprint

CSV cells hold ints, floats (written with ``repr`` so they parse back
exactly), booleans (``true``/``false``), strings or empty (``None``).
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import platform
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from basisinit import __version__

KINDS = (
    "init-sensitivity",
    "width-sweep",
    "depth-sweep",
    "mixed-arch-sweep",
    "activation-error",
    "activation-timing",
    "basis-verify",
    "approx-1d",
    "approx-2d",
    "extrapolation-demo",
    "progressive-benefit",
)

_INT = re.compile(r"^[+-]?\d+$")
_NAME = re.compile(r"[^A-Za-z0-9_.-]+")


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    """What to run: a parameter grid (cartesian product), seeds and fixed settings."""

    kind: str
    grid: dict[str, list] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    settings: dict[str, Any] = field(default_factory=dict)
    out: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown experiment kind {self.kind!r}; valid kinds: {', '.join(KINDS)}")
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise SpecError(f"{self.kind}: parameter grid is empty")
        if len(self.seeds) < 1:
            raise SpecError(f"{self.kind}: at least one seed is required")
        self.grid = {k: list(v) for k, v in self.grid.items()}
        self.seeds = [int(s) for s in self.seeds]

    def cells(self) -> list[dict]:
        keys = list(self.grid)
        return [dict(zip(keys, combo)) for combo in itertools.product(*(self.grid[k] for k in keys))]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid, "seeds": self.seeds, "settings": self.settings,
                "out": self.out}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        return cls(d["kind"], d["grid"], d.get("seeds", [0]), d.get("settings", {}), d.get("out"))


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    rows: list[dict]
    curves: dict[str, dict[str, list]] = field(default_factory=dict)
    env: dict = field(default_factory=dict)
    claims: list[str] = field(default_factory=list)
    path: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        # every row carries every column so that a written report parses back equal
        columns: list[str] = []
        for r in self.rows:
            columns.extend(k for k in r if k not in columns)
        self.rows = [{c: r.get(c) for c in columns} for r in self.rows]

    def column(self, name: str, **where) -> list:
        return [r[name] for r in self.rows if all(r.get(k) == v for k, v in where.items())]

    def failures(self) -> list[dict]:
        return [r for r in self.rows if r.get("status") != "ok"]


def environment_fingerprint() -> dict:
    return {
        "package": "basisinit",
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpu_count": os.cpu_count(),
        "omp_num_threads": os.environ.get("OMP_NUM_THREADS"),
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse(s: str):
    if s == "":
        return None
    if s in ("true", "false"):
        return s == "true"
    if _INT.match(s):
        return int(s)
    try:
        return float(s)
    except ValueError:
        return s


def write_csv(path: Path, rows: list[dict]) -> None:
    columns: list[str] = []
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        rows = []
        for line in reader:
            rows.append({c: _parse(s) for c, s in zip(header, line)})
    return rows


def _columns_to_rows(cols: dict[str, list]) -> list[dict]:
    n = max((len(v) for v in cols.values()), default=0)
    return [{k: v[i] for k, v in cols.items() if i < len(v)} for i in range(n)]


def _rows_to_columns(rows: list[dict]) -> dict[str, list]:
    cols: dict[str, list] = {}
    for r in rows:
        for k, v in r.items():
            cols.setdefault(k, []).append(v)
    return cols


def curve_id(*parts) -> str:
    return _NAME.sub("_", "_".join(_fmt(p) for p in parts)).strip("_")


def _new_run_dir(root: Path) -> Path:
    stamp = time.strftime("%Y%m%dT%H%M%SZ", time.gmtime())
    candidate = root / stamp
    n = 1
    while True:
        try:
            candidate.mkdir(parents=True, exist_ok=False)
            return candidate
        except FileExistsError:
            candidate = root / f"{stamp}-{n}"
            n += 1


def write_report(report: ExperimentReport, out) -> Path:
    """Write ``report`` into a fresh run directory under ``out/<kind>/``.

    Existing run directories are never touched; a name collision gets a
    numeric suffix.
    """
    run = _new_run_dir(Path(out) / report.spec.kind)
    write_csv(run / "report.csv", report.rows)
    if report.curves:
        (run / "curves").mkdir()
        for name, cols in report.curves.items():
            write_csv(run / "curves" / f"{name}.csv", _columns_to_rows(cols))
    spec = {"spec": report.spec.to_dict(), "claims": report.claims, "curves": sorted(report.curves)}
    (run / "spec.json").write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n")
    env = dict(report.env)
    env.setdefault("written_at", time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()))
    (run / "env.json").write_text(json.dumps(env, indent=2, sort_keys=True) + "\n")
    report.path = run
    return run


def read_report(run_dir) -> ExperimentReport:
    run = Path(run_dir)
    meta = json.loads((run / "spec.json").read_text())
    env = json.loads((run / "env.json").read_text())
    env.pop("written_at", None)
    curves = {name: _rows_to_columns(read_csv(run / "curves" / f"{name}.csv")) for name in meta.get("curves", [])}
    return ExperimentReport(ExperimentSpec.from_dict(meta["spec"]), read_csv(run / "report.csv"), curves, env,
                            list(meta.get("claims", [])), run)
