"""Coefficient snapshot files: packed binary plus a JSON text twin.

Layout of the binary format (little endian):

    bytes  0..7   magic "RSPHCOF1"
    bytes  8..11  format version (uint32)
    bytes 12..15  truncation degree lmax (uint32)
    byte  16      real-valued flag (uint8), 3 pad bytes
    bytes 20..27  time stamp (float64)
    then (lmax+1)^2 coefficient pairs (re, im) as float64, ordered by
    degree ascending and order from -l to l within each degree.

The JSON twin stores the same ordering as [re, im] pairs and is accepted
interchangeably on read.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .sht import SpectralField

MAGIC = b"RSPHCOF1"
VERSION = 1
_HEADER = struct.Struct("<8sIIBxxxd")


class SnapshotFormatError(ValueError):
    pass


def _flatten(field: SpectralField) -> np.ndarray:
    out = []
    L = field.lmax
    for l in range(L + 1):
        row = field.coeffs[l, L - l : L + l + 1]
        out.append(row)
    return np.concatenate(out)


def _unflatten(lmax: int, flat: np.ndarray, real_valued: bool) -> SpectralField:
    field = SpectralField.zeros(lmax, real_valued=real_valued)
    pos = 0
    for l in range(lmax + 1):
        n = 2 * l + 1
        field.coeffs[l, lmax - l : lmax + l + 1] = flat[pos : pos + n]
        pos += n
    return field


def write_snapshot(path: str | Path, field: SpectralField, time: float = 0.0) -> None:
    path = Path(path)
    if path.suffix == ".json":
        write_snapshot_json(path, field, time)
        return
    flat = _flatten(field)
    header = _HEADER.pack(MAGIC, VERSION, field.lmax, int(field.real_valued), float(time))
    data = np.empty(2 * flat.size, dtype="<f8")
    data[0::2] = flat.real
    data[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def write_snapshot_json(path: str | Path, field: SpectralField, time: float = 0.0) -> None:
    flat = _flatten(field)
    payload = {
        "format": MAGIC.decode(),
        "version": VERSION,
        "lmax": field.lmax,
        "real_valued": bool(field.real_valued),
        "time": float(time),
        "coefficients": [[z.real, z.imag] for z in flat],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def read_snapshot(path: str | Path) -> tuple[SpectralField, float]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:1] in (b"{", b" ") or path.suffix == ".json":
        payload = json.loads(blob.decode())
        if payload.get("format") != MAGIC.decode():
            raise SnapshotFormatError(f"{path}: not a coefficient snapshot")
        lmax = int(payload["lmax"])
        flat = np.array([complex(re, im) for re, im in payload["coefficients"]])
        if flat.size != (lmax + 1) ** 2:
            raise SnapshotFormatError(f"{path}: coefficient count does not match lmax")
        return _unflatten(lmax, flat, bool(payload["real_valued"])), float(payload["time"])
    if len(blob) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: truncated header")
    magic, version, lmax, real_flag, time = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {version}")
    count = (lmax + 1) ** 2
    expected = _HEADER.size + 16 * count
    if len(blob) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    flat = data[0::2] + 1j * data[1::2]
    return _unflatten(lmax, flat, bool(real_flag)), float(time)
