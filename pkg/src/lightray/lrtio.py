"""LRT1 files: one JSON header line, then raw little-endian float64 values.

The body stores the array in Fortran order (first index fastest).  Fields
have dims (nt, nx, ..., nx), so t varies fastest; sinograms have dims
(nz, ..., nz, ndir).  The header keys are written in a fixed order without
timestamps, so identical inputs give identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__

MAGIC = "LRT1"
KINDS = ("field", "sinogram")
_KEYS = ("magic", "kind", "n", "dims", "extents", "dtype", "meta")


class LrtError(ValueError):
    """Malformed LRT file; ``offset`` is the byte position of the failure."""

    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class LrtFile:
    kind: str
    n: int
    data: np.ndarray
    extents: list
    meta: dict = field(default_factory=dict)

    @property
    def dims(self):
        return list(self.data.shape)


def header_bytes(obj: LrtFile) -> bytes:
    head = {"magic": MAGIC, "kind": obj.kind, "n": int(obj.n), "dims": [int(d) for d in obj.dims],
            "extents": [float(e) for e in obj.extents], "dtype": "f64le", "meta": obj.meta}
    return (json.dumps(head, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def write_lrt(path, obj: LrtFile) -> None:
    if obj.kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    data = np.asarray(obj.data, dtype="<f8")
    body = data.tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(header_bytes(obj))
        fh.write(body)


def read_lrt(path) -> LrtFile:
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise LrtError("missing header terminator", len(raw))
    try:
        head = json.loads(raw[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise LrtError(f"header is not valid JSON: {exc}", pos) from None
    if not isinstance(head, dict):
        raise LrtError("header is not a JSON object", 0)
    if head.get("magic") != MAGIC:
        raise LrtError(f"bad magic {head.get('magic')!r}, expected {MAGIC!r}", 0)
    missing = [k for k in _KEYS if k not in head]
    if missing:
        raise LrtError(f"header lacks keys {missing}", nl)
    if head["kind"] not in KINDS:
        raise LrtError(f"unknown kind {head['kind']!r}", nl)
    if head["dtype"] != "f64le":
        raise LrtError(f"unsupported dtype {head['dtype']!r}", nl)
    dims = head["dims"]
    if not isinstance(dims, list) or not all(isinstance(d, int) and d > 0 for d in dims):
        raise LrtError("dims must be a list of positive integers", nl)
    count = int(np.prod(dims))
    start = nl + 1
    expected = 8 * count
    actual = len(raw) - start
    if actual != expected:
        what = "short" if actual < expected else "long"
        raise LrtError(f"body too {what}: expected {expected} bytes for dims {dims}, found {actual}",
                       start + min(actual, expected))
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=start).reshape(dims, order="F")
    bad = ~np.isfinite(data)
    if bad.any():
        k = int(np.flatnonzero(bad.ravel(order="F"))[0])
        raise LrtError("non-finite value in body", start + 8 * k)
    return LrtFile(head["kind"], int(head["n"]), data.astype(np.float64), list(head["extents"]),
                   head["meta"])


def provenance(argv=None, seed=None, **extra) -> dict:
    meta = {"argv": list(argv) if argv is not None else [], "seed": seed, "version": __version__}
    meta.update(extra)
    return meta
