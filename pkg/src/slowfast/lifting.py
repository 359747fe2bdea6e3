"""Rotation-lifted companion process and path-level occupation diagnostics.

The companion tracks one planar block of a stored Cartesian path through a
rotated frame: away from the locus of small actions it integrates the
rotated perturbation (reusing the stored increments), so its drift stays
bounded uniformly in eps; near the locus it is glued to the original block
by a frozen rotation.  Block norms agree with the original path at every
grid time by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .engine import (EnsembleResult, IntegratorConfig, PathEnsemble, SdePath,
                     StoppingRule, birkhoff_rotated, simulate_birkhoff_ensemble,
                     simulate_effective_ensemble)
from .effective import EffectiveModel
from .errors import DomainError
from .models import BirkhoffSystem, CartesianState, actions_of, as_blocks, eps_value, planar_aligner


@dataclass(frozen=True)
class LiftedCompanion:
    """Companion block trajectory with its gluing schedule."""

    delta: float
    block: int
    states: np.ndarray        # (M+1, 2)
    tau_minus: np.ndarray     # times entering the glued segments
    tau_plus: np.ndarray      # times leaving them
    lambda_steps: np.ndarray  # (M,) True where the step integrated the rotated equation

    def norm_mismatch(self, path: SdePath) -> float:
        """Max relative gap between companion and original block norms."""
        vk = as_blocks(path.states)[:, self.block, :]
        n_orig = np.hypot(vk[:, 0], vk[:, 1])
        n_bar = np.hypot(self.states[:, 0], self.states[:, 1])
        return float(np.max(np.abs(n_bar - n_orig)) / max(np.max(n_orig), 1e-300))


def _schedule(path_states: np.ndarray, delta: float) -> np.ndarray:
    """Per-grid-time flag: True while glued to the original path.

    Entry when some block norm drops to delta or the full norm reaches
    1/delta; exit once every block norm clears 2*delta and the full norm is
    back under 1/(2*delta).
    """
    blocks = as_blocks(path_states)
    min_block = np.min(np.hypot(blocks[..., 0], blocks[..., 1]), axis=-1)
    full = np.linalg.norm(path_states, axis=-1)
    bad = (min_block <= delta) | (full >= 1.0 / delta)
    good = (min_block >= 2.0 * delta) & (full <= 0.5 / delta)
    flags = np.empty(path_states.shape[0], dtype=bool)
    inside = bool(bad[0])
    for t in range(path_states.shape[0]):
        if not inside and bad[t]:
            inside = True
        elif inside and good[t]:
            inside = False
        flags[t] = inside
    return flags


def lifted_companion(system: BirkhoffSystem, eps, path: SdePath, k: int,
                     delta: float) -> LiftedCompanion:
    """Build the rotated companion of block k along a stored path.

    Requires the path's noise increments (the companion reuses the stored
    per-step perturbation); `path` must come from the Cartesian integrator
    with the splitting scheme.
    """
    e = eps_value(eps)
    if path.noise_increments is None or path.noise_increments.size == 0:
        raise DomainError("lifted_companion needs a path with retained noise increments")
    if not (0.0 < delta < 0.5):
        raise DomainError("delta must lie in (0, 1/2)")
    states = np.asarray(path.states, dtype=float)
    n_blocks = states.shape[1] // 2
    if not (0 <= k < n_blocks):
        raise DomainError(f"block index {k} out of range")
    h = path.step
    M = states.shape[0] - 1

    flags = _schedule(states, delta)
    vk = as_blocks(states)[:, k, :]

    bar = np.empty_like(vk)
    bar[0] = vk[0]
    lambda_steps = np.zeros(M, dtype=bool)
    tau_minus: List[float] = []
    tau_plus: List[float] = []
    glue: Optional[np.ndarray] = None

    if flags[0]:
        tau_minus.append(0.0)
        glue = np.eye(2)

    for t in range(M):
        if flags[t]:
            bar[t + 1] = glue @ vk[t + 1]
        else:
            lambda_steps[t] = True
            v_star = birkhoff_rotated(system, e, h, states[t][None, :])[0]
            vk_star = as_blocks(v_star[None, :])[0, k, :]
            incr = vk[t + 1] - vk_star
            if np.hypot(*vk_star) > 0 and np.hypot(*bar[t]) > 0:
                U = planar_aligner(bar[t], vk_star)
            else:
                U = np.eye(2)
            bar[t + 1] = bar[t] + U @ incr
        # segment transitions, recorded at grid times
        if t + 1 <= M and flags[t + 1] != flags[t]:
            time = (t + 1) * h
            if flags[t + 1]:
                tau_minus.append(time)
                if np.hypot(*vk[t + 1]) > 0 and np.hypot(*bar[t + 1]) > 0:
                    glue = planar_aligner(bar[t + 1], vk[t + 1])
                else:
                    glue = np.eye(2)
            else:
                tau_plus.append(time)

    return LiftedCompanion(delta, k, bar, np.asarray(tau_minus),
                           np.asarray(tau_plus), lambda_steps)


def companion_drift_magnitudes(system: BirkhoffSystem, eps, path: SdePath,
                               companion: LiftedCompanion) -> np.ndarray:
    """Per-step drift magnitude of the companion on its integrated segments.

    The rotated drift has the same norm as P_k at the evaluation state, so
    these magnitudes are bounded by sup ||P_k|| independently of eps.
    """
    e = eps_value(eps)
    states = np.asarray(path.states, dtype=float)
    idx = np.nonzero(companion.lambda_steps)[0]
    out = np.empty(idx.size)
    for j, t in enumerate(idx):
        v_star = birkhoff_rotated(system, e, path.step, states[t][None, :])[0]
        p = np.asarray(system.P(v_star[None, :]), dtype=float)[0]
        pk = as_blocks(p[None, :])[0, companion.block, :]
        out[j] = np.hypot(pk[0], pk[1])
    return out


@dataclass(frozen=True)
class OccupationEstimate:
    value: float
    half_width: float
    n_paths: int


def occupation_fraction(ensemble: Union[EnsembleResult, PathEnsemble],
                        region: Callable[[np.ndarray], np.ndarray]) -> OccupationEstimate:
    """Expected time spent in a region, averaged over the ensemble.

    `region` maps states (..., dim) to booleans.  The time integral uses the
    left-endpoint rule on the stored grid, so a region containing every state
    scores exactly the horizon.  The half-width is a normal-approximation
    95% interval across paths.
    """
    if isinstance(ensemble, PathEnsemble):
        states = np.stack([p.states for p in ensemble.paths])
        times = ensemble.times
    else:
        states = ensemble.states
        times = ensemble.times
    dt = np.diff(times)
    ind = np.asarray(region(states), dtype=float)      # (B, K)
    per_path = np.einsum("bk,k->b", ind[:, :-1], dt, optimize=False)
    value = float(per_path.mean())
    hw = 1.96 * float(per_path.std(ddof=1)) / np.sqrt(len(per_path)) if len(per_path) > 1 else 0.0
    return OccupationEstimate(value, hw, len(per_path))


@dataclass(frozen=True)
class ExitLawEntry:
    eps: float
    exit_times: np.ndarray    # (B,) grid exit times, horizon if no exit
    actions: np.ndarray       # (B, K, n) stopped action paths at stored times


@dataclass(frozen=True)
class ExitTimeResult:
    times: np.ndarray
    radius: float
    per_eps: List[ExitLawEntry]
    reference: ExitLawEntry   # eps field holds 0.0


def _exit_entry(res: EnsembleResult, eps: float, step: float,
                horizon: float) -> ExitLawEntry:
    # stopped_at counts integrator steps even when the stored grid is coarser
    times = np.where(res.stopped_at >= 0, res.stopped_at * step, horizon)
    return ExitLawEntry(eps, times, actions_of(res.states))


def exit_time_experiment(system: BirkhoffSystem, eps_list: Sequence[float],
                         init: CartesianState, R: float, cfg: IntegratorConfig,
                         n_paths: int, quadrature=None, base_seed: int = 0,
                         n_checkpoints: int = 33, parallelism: int = 1) -> ExitTimeResult:
    """Per-eps law of (exit time, stopped action path) against the stopped
    effective reference.

    Paths stop when |I| reaches the ball radius; the reference integrates
    the effective equation with an independent seed and the same rule.
    """
    I0 = actions_of(init.v)
    if np.linalg.norm(I0) >= R:
        raise DomainError("initial actions must lie inside the exit ball")
    stop = StoppingRule.exit_action_ball(R)
    n_steps = cfg.n_steps
    store = np.unique(np.linspace(0, n_steps, n_checkpoints).astype(int))

    entries = []
    for eps in eps_list:
        cfg_e = IntegratorConfig(cfg.step, cfg.horizon, cfg.scheme,
                                 cfg.boundary_policy, base_seed, 0)
        res = simulate_birkhoff_ensemble(system, eps, init, cfg_e, n_paths,
                                         stop, store, parallelism)
        entries.append(_exit_entry(res, float(eps), cfg.step, cfg.horizon))

    if quadrature is None:
        from .averaging import default_quadrature
        quadrature = default_quadrature(system.n)
    model = EffectiveModel(system, quadrature)
    cfg_ref = IntegratorConfig(cfg.step, cfg.horizon, "euler-maruyama",
                               cfg.boundary_policy, base_seed + 7_654_321, 0)
    ref = simulate_effective_ensemble(model, init, cfg_ref, n_paths, stop,
                                      store, parallelism)
    times = np.asarray(store, dtype=float) * cfg.step
    return ExitTimeResult(times, R, entries,
                          _exit_entry(ref, 0.0, cfg.step, cfg.horizon))
