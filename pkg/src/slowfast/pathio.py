"""Path export: CSV series and a compact binary frame.

Binary frame layout (all little-endian):

    bytes 0-4   magic "SFAV1"
    uint32      state dimension
    uint32      noise dimension
    uint64      number of grid times (K)
    int64       stopped-at step index, -1 when the path never stopped
    float64[K]            grid times
    float64[K*state_dim]  states, row-major
    float64[(K-1)*noise_dim] noise increments, row-major
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .engine import SdePath
from .errors import DomainError

MAGIC = b"SFAV1"
_HEADER = struct.Struct("<5sIIQq")


def path_to_csv(path: SdePath, file) -> None:
    """Write (time, state components) rows; column names are generic."""

    def write(fh):
        w = csv.writer(fh)
        dim = path.states.shape[1]
        w.writerow(["time"] + [f"x{i}" for i in range(dim)])
        for t, row in zip(path.times, path.states):
            w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    if hasattr(file, "write"):
        write(file)
    else:
        with open(file, "w", newline="") as fh:
            write(fh)


def path_to_frame(path: SdePath) -> bytes:
    """Serialize a path into the SFAV1 binary frame."""
    k, dim = path.states.shape
    noise = np.asarray(path.noise_increments, dtype="<f8")
    wdim = noise.shape[1] if noise.ndim == 2 else 0
    header = _HEADER.pack(MAGIC, dim, wdim, k,
                          -1 if path.stopped_at is None else int(path.stopped_at))
    body = (np.asarray(path.times, dtype="<f8").tobytes()
            + np.asarray(path.states, dtype="<f8").tobytes()
            + noise.tobytes())
    return header + body


def frame_to_path(blob: bytes) -> SdePath:
    """Parse an SFAV1 frame back into a path."""
    if len(blob) < _HEADER.size:
        raise DomainError("frame too short")
    magic, dim, wdim, k, stopped = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DomainError(f"bad frame magic {magic!r}")
    off = _HEADER.size
    times = np.frombuffer(blob, "<f8", count=k, offset=off).copy()
    off += 8 * k
    states = np.frombuffer(blob, "<f8", count=k * dim, offset=off).reshape(k, dim).copy()
    off += 8 * k * dim
    noise = np.frombuffer(blob, "<f8", count=(k - 1) * wdim, offset=off)
    noise = noise.reshape(k - 1, wdim).copy()
    return SdePath(times, states, noise, None if stopped < 0 else int(stopped))


def save_frame(path: SdePath, filename) -> None:
    with open(filename, "wb") as fh:
        fh.write(path_to_frame(path))


def load_frame(filename) -> SdePath:
    with open(filename, "rb") as fh:
        return frame_to_path(fh.read())
