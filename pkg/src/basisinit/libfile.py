"""Versioned binary container for basis libraries.

Layout (all integers little-endian)::

    magic           8 bytes   b"BASISLIB"
    format_version  u32
    header_len      u32
    header          header_len bytes, UTF-8 JSON (sorted keys)
    repeated n_nets times:
        record_len  u32
        record      record_len bytes, UTF-8 JSON (sorted keys)
        n_params    u64
        params      n_params float64 little-endian; layer order,
                    row-major weights then biases per layer
    checksum        32 bytes  SHA-256 of every preceding byte

The header holds format_version, dimension, max_degree, activation, arch,
config, init, config_digest, created and n_nets. Each record holds
exponents, final_mse (float.hex), epochs, seed and provenance. Floats inside
JSON are written with ``float.hex`` so the round trip is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from basisinit.basis import BasisLibrary, BasisNet
from basisinit.nn import Architecture, InitStrategy, Params, TrainConfig

MAGIC = b"BASISLIB"
FORMAT_VERSION = 1
_CHECKSUM_LEN = 32


class LibraryFileError(Exception):
    pass


class MalformedLibraryError(LibraryFileError):
    pass


class LibraryVersionError(LibraryFileError):
    def __init__(self, found: int, supported: int = FORMAT_VERSION):
        self.found = found
        self.supported = supported
        super().__init__(f"library file format version {found} is not supported (this build reads version {supported})")


class LibraryChecksumError(LibraryFileError):
    pass


def _json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _hexify_config(cfg: TrainConfig) -> dict:
    d = cfg.to_dict()
    for key in ("learning_rate", "mse_threshold", "lr_decay", "adam_eps", "lstsq_ridge"):
        if d.get(key) is not None:
            d[key] = float(d[key]).hex()
    d["domain"] = [[float(v).hex() for v in pair] for pair in d["domain"]]
    d["lr_milestones"] = [float(v).hex() for v in d["lr_milestones"]]
    d["adam_betas"] = [float(v).hex() for v in d["adam_betas"]]
    return d


def _unhexify_config(d: dict) -> TrainConfig:
    d = dict(d)
    for key in ("learning_rate", "mse_threshold", "lr_decay", "adam_eps", "lstsq_ridge"):
        if d.get(key) is not None:
            d[key] = float.fromhex(d[key])
    d["domain"] = tuple(tuple(float.fromhex(v) for v in pair) for pair in d["domain"])
    d["lr_milestones"] = tuple(float.fromhex(v) for v in d["lr_milestones"])
    d["adam_betas"] = tuple(float.fromhex(v) for v in d["adam_betas"])
    return TrainConfig(**d)


def to_bytes(library: BasisLibrary) -> bytes:
    header = {
        "format_version": FORMAT_VERSION,
        "dimension": library.dimension,
        "max_degree": library.max_degree,
        "activation": library.arch.activation.value,
        "arch": list(library.arch.layer_widths),
        "config": _hexify_config(library.config),
        "init": {"kind": library.init.kind.value, "gain": float(library.init.gain).hex(), "seed": library.init.seed,
                 "bias": library.init.bias},
        "config_digest": library.config_digest(),
        "created": int(library.created),
        "n_nets": len(library.nets),
    }
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    hb = _json(header)
    parts += [struct.pack("<I", len(hb)), hb]
    for e, net in library.nets.items():
        record = {
            "exponents": list(e),
            "final_mse": float(net.final_mse).hex(),
            "epochs": net.epochs,
            "seed": net.seed,
            "provenance": net.provenance,
        }
        rb = _json(record)
        blob = net.params.flat().astype("<f8").tobytes()
        parts += [struct.pack("<I", len(rb)), rb, struct.pack("<Q", len(blob) // 8), blob]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def save_library(library: BasisLibrary, path) -> Path:
    """Write atomically: a temp file in the target directory is renamed into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = to_bytes(library)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise MalformedLibraryError(f"file ends inside {what} (need {n} bytes at offset {self.pos}, size {len(self.data)})")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def json(self, n: int, what: str) -> dict:
        raw = self.take(n, what)
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedLibraryError(f"{what} is not valid JSON: {exc}") from None


def from_bytes(data: bytes) -> BasisLibrary:
    r = _Reader(data)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise MalformedLibraryError("not a basis library file (bad magic)")
    version = r.u32("format version")
    if version != FORMAT_VERSION:
        raise LibraryVersionError(version)
    header = r.json(r.u32("header length"), "header")
    try:
        arch = Architecture(tuple(header["arch"]), header["activation"])
        dimension = int(header["dimension"])
        max_degree = int(header["max_degree"])
        n_nets = int(header["n_nets"])
        config = _unhexify_config(header["config"])
        ih = header["init"]
        init = InitStrategy(ih["kind"], float.fromhex(ih["gain"]), int(ih["seed"]), bias=ih["bias"])
        created = int(header["created"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedLibraryError(f"bad header field: {exc}") from None

    nets = {}
    for i in range(n_nets):
        rec = r.json(r.u32(f"record {i} length"), f"record {i}")
        n_params = r.u64(f"record {i} parameter count")
        if n_params != arch.n_params:
            raise MalformedLibraryError(f"record {i} has {n_params} parameters, architecture needs {arch.n_params}")
        blob = r.take(8 * n_params, f"record {i} parameters")
        try:
            exps = tuple(int(v) for v in rec["exponents"])
            net = BasisNet(
                exps, arch, Params.from_flat(arch, np.frombuffer(blob, dtype="<f8").astype(np.float64)),
                float.fromhex(rec["final_mse"]), int(rec["epochs"]), int(rec["seed"]), str(rec["provenance"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedLibraryError(f"bad record {i}: {exc}") from None
        nets[exps] = net

    body_end = r.pos
    if len(data) - body_end != _CHECKSUM_LEN:
        raise MalformedLibraryError(
            f"expected {_CHECKSUM_LEN} checksum bytes after the last record, found {len(data) - body_end}")
    if hashlib.sha256(data[:body_end]).digest() != data[body_end:]:
        raise LibraryChecksumError("library checksum mismatch; file is corrupt")
    try:
        return BasisLibrary(dimension, max_degree, arch, config, nets, created, init)
    except ValueError as exc:
        raise MalformedLibraryError(str(exc)) from None


def load_library(path) -> BasisLibrary:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"basis library not found: {path}")
    return from_bytes(path.read_bytes())


def file_digest(path) -> str:
    """SHA-256 checksum stored at the end of a library file."""
    data = Path(path).read_bytes()
    return data[-_CHECKSUM_LEN:].hex()
