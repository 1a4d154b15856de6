"""PAQG grid files: the portable on-disk format for scalar fields.

Layout (all little-endian):

    bytes 0-7    magic ASCII "PAQGRID\\0"
    bytes 8-11   unsigned 32-bit header length H
    bytes 12..   UTF-8 JSON header, H bytes:
                 {"version":1,"dims":[...],"spacing":[...],"origin":[...],
                  "dtype":"f64","order":"row-major"}
    then         product(dims) 64-bit IEEE floats, row-major

Writers always emit exactly this layout; readers reject unknown versions,
dtypes or orders, length mismatches, and non-finite payload values.  The
float payload survives a write/read round trip bit-exactly.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadHeader, BadMagic, NonFiniteValues, PayloadMismatch, ValidationError
from .fields import GridGeometry, ScalarField

MAGIC = b"PAQGRID\x00"
_HEADER_KEYS = ("version", "dims", "spacing", "origin", "dtype", "order")


def write_grid(path, field: ScalarField) -> None:
    """Write a field to ``path`` in PAQG layout (deterministic bytes)."""
    geom = field.geometry
    header = {
        "version": 1,
        "dims": list(geom.dims),
        "spacing": list(geom.spacing),
        "origin": list(geom.origin),
        "dtype": "f64",
        "order": "row-major",
    }
    head = json.dumps(header, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(payload)


def read_grid(path) -> ScalarField:
    """Read a PAQG file back into a :class:`ScalarField`."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a PAQG grid file")
    if len(raw) < 12:
        raise BadHeader(f"{path}: truncated before header length")
    (hlen,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + hlen:
        raise BadHeader(f"{path}: header truncated (declared {hlen} bytes)")
    try:
        header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadHeader(f"{path}: header is not valid JSON ({exc})") from exc
    if not isinstance(header, dict):
        raise BadHeader(f"{path}: header must be a JSON object")
    missing = [k for k in _HEADER_KEYS if k not in header]
    if missing:
        raise BadHeader(f"{path}: header missing keys {missing}")
    if header["version"] != 1:
        raise BadHeader(f"{path}: unsupported version {header['version']!r}")
    if header["dtype"] != "f64":
        raise BadHeader(f"{path}: unsupported dtype {header['dtype']!r}")
    if header["order"] != "row-major":
        raise BadHeader(f"{path}: unsupported order {header['order']!r}")
    try:
        geom = GridGeometry(tuple(header["dims"]), tuple(header["spacing"]),
                            tuple(header["origin"]))
    except (ValidationError, TypeError) as exc:
        raise BadHeader(f"{path}: invalid geometry in header ({exc})") from exc
    payload = raw[12 + hlen :]
    expected = 8 * geom.n_nodes
    if len(payload) != expected:
        raise PayloadMismatch(
            f"{path}: dims {geom.dims} need {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteValues(f"{path}: payload contains NaN or Inf samples")
    return ScalarField(geom, values.reshape(geom.shape))
