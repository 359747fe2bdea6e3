"""Counter-based noise streams for reproducible parallel simulation.

Each trajectory owns a Philox stream keyed by (seed, trajectory_id), so the
Wiener increments of path i are a pure function of (seed, i, n_steps, dim)
and never depend on scheduling or batch composition.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def path_generator(seed: int, trajectory_id: int) -> np.random.Generator:
    """Philox generator keyed by (seed, trajectory_id)."""
    key = (int(seed) & _MASK64, int(trajectory_id) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def wiener_increments(seed: int, trajectory_id: int, n_steps: int, dim: int,
                      h: float) -> np.ndarray:
    """N(0, h) increments of shape (n_steps, dim) for one path."""
    g = path_generator(seed, trajectory_id)
    return g.standard_normal((n_steps, dim)) * np.sqrt(h)


def ensemble_increments(seed: int, trajectory_ids, n_steps: int, dim: int,
                        h: float) -> np.ndarray:
    """Stack per-path increments into (n_paths, n_steps, dim).

    Row i is bitwise identical to wiener_increments(seed, ids[i], ...).
    """
    ids = list(trajectory_ids)
    out = np.empty((len(ids), n_steps, dim))
    for row, tid in enumerate(ids):
        out[row] = wiener_increments(seed, tid, n_steps, dim, h)
    return out
