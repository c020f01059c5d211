"""Binary field snapshots, trajectory CSV and deterministic JSON/CSV writers."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .solver import FieldState

MAGIC = b"SNLS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIId")
TRAJECTORY_MODES = 8


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path, state: FieldState) -> Path:
    """magic, version u32, K u32, time f64, then Re/Im pairs of the K modes (little-endian)."""
    path = Path(path)
    modes = np.asarray(state.modes, dtype=complex)
    body = np.column_stack([modes.real, modes.imag]).astype("<f8").tobytes()
    path.write_bytes(_HEADER.pack(MAGIC, SNAPSHOT_VERSION, len(modes), float(state.time)) + body)
    return path


def read_snapshot(path) -> FieldState:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError("file shorter than the snapshot header")
    magic, version, K, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"unsupported snapshot version {version}")
    vals = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if len(vals) != 2 * K:
        raise SnapshotFormatError(f"expected {2 * K} values, found {len(vals)}")
    return FieldState(vals[0::2] + 1j * vals[1::2], t)


def write_trajectory_csv(path, states, n_modes: int = TRAJECTORY_MODES) -> Path:
    """Columns t, re0, im0, re1, im1, ... for the first n_modes modes."""
    path = Path(path)
    header = ["t"] + [f"{p}{k}" for k in range(n_modes) for p in ("re", "im")]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for s in states:
            m = np.zeros(n_modes, dtype=complex)
            n = min(n_modes, s.K)
            m[:n] = s.modes[:n]
            w.writerow([repr(float(s.time))]
                       + [repr(float(v)) for c in m for v in (c.real, c.imag)])
    return path


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """(times, modes) with modes of shape (n_times, n_modes), complex."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1::2] + 1j * arr[:, 2::2]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj) -> Path:
    """Sorted keys and fixed separators so equal content gives equal bytes."""
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path
