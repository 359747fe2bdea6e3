"""SDE time stepping for perturbed, effective, and averaged equations.

The fast rotation is handled by an exact rotation substep (Lie splitting):
per step the angles advance by theta(I) h / eps (resp. each planar block is
rotated by W_k(I) h / eps, which conserves every action exactly), then one
Euler-Maruyama substep applies the order-one drift and dispersion with the
coefficients evaluated at the post-rotation state.  The angle equation of a
Cartesian system is never integrated directly; angles are always read off
Cartesian paths, which avoids the coordinate singularity at vanishing
actions.

All integrators run on an internal batch-over-paths layout.  Every
reduction inside a step is an `einsum` over within-row axes only, so each
path's arithmetic is independent of batch composition; together with the
per-path keyed noise streams this makes results bitwise reproducible for
any parallelism degree.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .averaging import AveragedModel
from .effective import AveragedActionModel, EffectiveModel
from .errors import DomainError, IntegrationError
from .models import (ActionAngleState, BirkhoffSystem, CartesianState,
                     TorusSystem, TWO_PI, actions_of, eps_value,
                     planar_aligner, rotate_blocks)
from .noise import ensemble_increments

SCHEMES = ("rotation-split-em", "euler-maruyama")
BOUNDARY_POLICIES = ("clamp-at-zero", "reflect-at-zero")


@dataclass(frozen=True)
class IntegratorConfig:
    step: float
    horizon: float
    scheme: str = "rotation-split-em"
    boundary_policy: str = "clamp-at-zero"
    seed: int = 0
    trajectory_id: int = 0

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError("step must be positive")
        if self.horizon < 0:
            raise DomainError("horizon must be nonnegative")
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {self.scheme!r}")
        if self.boundary_policy not in BOUNDARY_POLICIES:
            raise DomainError(f"unknown boundary policy {self.boundary_policy!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))


@dataclass(frozen=True)
class StoppingRule:
    """Grid-time stopping condition; `none` never stops."""

    kind: str = "none"
    threshold: float = np.inf

    KINDS = ("none", "exit-action-ball", "exit-norm-ball", "action-floor")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(f"unknown stopping rule {self.kind!r}")
        if self.kind != "none" and not self.threshold > 0:
            raise DomainError("stopping threshold must be positive")

    @classmethod
    def none(cls) -> "StoppingRule":
        return cls()

    @classmethod
    def exit_action_ball(cls, R: float) -> "StoppingRule":
        return cls("exit-action-ball", R)

    @classmethod
    def exit_norm_ball(cls, R: float) -> "StoppingRule":
        return cls("exit-norm-ball", R)

    @classmethod
    def action_floor(cls, delta: float) -> "StoppingRule":
        return cls("action-floor", delta)

    def hit(self, actions: np.ndarray, norms: Optional[np.ndarray] = None) -> np.ndarray:
        """Boolean mask over the batch from per-path actions (B, n)."""
        if self.kind == "none":
            return np.zeros(actions.shape[0], dtype=bool)
        if self.kind == "exit-action-ball":
            return np.linalg.norm(actions, axis=-1) >= self.threshold
        if self.kind == "exit-norm-ball":
            if norms is None:
                norms = np.sqrt(2.0 * np.sum(actions, axis=-1))
            return norms >= self.threshold
        return np.min(actions, axis=-1) <= self.threshold


@dataclass(frozen=True)
class SdePath:
    """One discretized trajectory with its driving increments retained."""

    times: np.ndarray             # (M+1,)
    states: np.ndarray            # (M+1, dim)
    noise_increments: np.ndarray  # (M, wdim)
    stopped_at: Optional[int] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise DomainError("path times must be strictly increasing")
        if self.states.shape[0] != t.shape[0]:
            raise DomainError("states and times length mismatch")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])


@dataclass(frozen=True)
class EnsembleResult:
    """Batched trajectories on a shared time grid."""

    times: np.ndarray             # (K,)
    states: np.ndarray            # (B, K, dim)
    stopped_at: np.ndarray        # (B,) step index of first hit, -1 if none
    trajectory_ids: np.ndarray    # (B,)

    def final_states(self) -> np.ndarray:
        return self.states[:, -1, :]


@dataclass
class PathEnsemble:
    """Ordered collection of independently integrated paths."""

    paths: List[SdePath]

    def final_states(self) -> np.ndarray:
        return np.stack([p.final_state for p in self.paths])

    def states_at(self, index: int) -> np.ndarray:
        return np.stack([p.states[index] for p in self.paths])

    @property
    def times(self) -> np.ndarray:
        return self.paths[0].times

    def __len__(self) -> int:
        return len(self.paths)


def _resolve_store(store, n_steps: int) -> np.ndarray:
    """Indices (into 0..n_steps) of grid times to keep."""
    if store is None or (isinstance(store, str) and store == "all"):
        return np.arange(n_steps + 1)
    if isinstance(store, str) and store == "last":
        return np.array([0, n_steps]) if n_steps > 0 else np.array([0])
    if isinstance(store, str):
        raise DomainError(f"unknown store policy {store!r}")
    idx = np.unique(np.asarray(store, dtype=int))
    if idx.size == 0 or idx[0] < 0 or idx[-1] > n_steps:
        raise DomainError("store indices out of range")
    return idx


def _check_finite(state: np.ndarray, step: int):
    if not np.all(np.isfinite(state)):
        raise IntegrationError("non-finite state", step)


def _run_batch(step_fn: Callable, state0: np.ndarray, noise: np.ndarray,
               h: float, stop: StoppingRule, actions_fn: Callable,
               norms_fn: Optional[Callable], store) -> tuple:
    """Generic batched loop.  Stopped paths are frozen at the hit state.

    Returns (times, stored_states, stopped_at).
    """
    B, n_steps = noise.shape[0], noise.shape[1]
    keep = _resolve_store(store, n_steps)
    keep_set = {int(k): j for j, k in enumerate(keep)}
    out = np.empty((B, keep.size, state0.shape[1]))
    state = state0.copy()
    stopped = np.full(B, -1, dtype=np.int64)
    alive = np.ones(B, dtype=bool)

    if 0 in keep_set:
        out[:, keep_set[0], :] = state
    hit0 = stop.hit(actions_fn(state), norms_fn(state) if norms_fn else None)
    stopped[hit0] = 0
    alive &= ~hit0

    for m in range(n_steps):
        if np.any(alive):
            with np.errstate(over="ignore", invalid="ignore"):
                new = step_fn(state, noise[:, m, :], h)
            _check_finite(new[alive], m)
            state = np.where(alive[:, None], new, state)
            hit = alive & stop.hit(actions_fn(state), norms_fn(state) if norms_fn else None)
            stopped[hit] = m + 1
            alive &= ~hit
        if (m + 1) in keep_set:
            out[:, keep_set[m + 1], :] = state
    times = np.asarray(keep, dtype=float) * h
    return times, out, stopped


# ---------------------------------------------------------------------------
# steppers


def _torus_stepper(system: TorusSystem, eps: float, scheme: str) -> Callable:
    d = system.d

    def step(state, dw, h):
        I, phi = state[:, :d], state[:, d:]
        if scheme == "rotation-split-em":
            th = np.asarray(system.theta(I), dtype=float)
            phi_star = np.mod(phi + th * (h / eps), TWO_PI)
            drift_phi = np.asarray(system.driftPhi(I, phi_star), dtype=float)
        else:
            th = np.asarray(system.theta(I), dtype=float)
            phi_star = phi
            drift_phi = th / eps + np.asarray(system.driftPhi(I, phi), dtype=float)
        drift_i = np.asarray(system.driftI(I, phi_star), dtype=float)
        psi_i = np.asarray(system.dispI(I, phi_star), dtype=float)
        psi_phi = np.asarray(system.dispPhi(I, phi_star), dtype=float)
        I_new = I + drift_i * h + (psi_i @ dw[:, :, None])[:, :, 0]
        phi_new = np.mod(phi_star + drift_phi * h
                         + (psi_phi @ dw[:, :, None])[:, :, 0], TWO_PI)
        return np.concatenate([I_new, phi_new], axis=1)

    return step


def birkhoff_rotated(system: BirkhoffSystem, eps: float, h: float,
                     v: np.ndarray) -> np.ndarray:
    """Exact fast-rotation substep used by the splitting scheme."""
    I = actions_of(v)
    w = np.asarray(system.W(I), dtype=float)
    return rotate_blocks(v, w * (h / eps))


def _birkhoff_stepper(system: BirkhoffSystem, eps: float, scheme: str) -> Callable:
    def step(v, dw, h):
        if scheme == "rotation-split-em":
            v_star = birkhoff_rotated(system, eps, h, v)
            extra = 0.0
        else:
            v_star = v
            I = actions_of(v)
            w = np.asarray(system.W(I), dtype=float)
            perp = rotate_blocks(v, np.full_like(w, 0.5 * np.pi)) * w.repeat(2, axis=-1)
            extra = perp / eps
        drift = np.asarray(system.P(v_star), dtype=float) + extra
        b = np.asarray(system.B(v_star), dtype=float)
        return v_star + drift * h + (b @ dw[:, :, None])[:, :, 0]

    return step


def _effective_stepper(model: EffectiveModel) -> Callable:
    def step(v, dw, h):
        drift = np.asarray(model.drift(v), dtype=float)
        disp = np.asarray(model.dispersion(v), dtype=float)
        return v + drift * h + (disp @ dw[:, :, None])[:, :, 0]

    return step


def _averaged_action_stepper(model, boundary_policy: Optional[str]) -> Callable:
    def step(I, dw, h):
        drift = np.asarray(model.drift(I), dtype=float)
        disp = np.asarray(model.dispersion(I), dtype=float)
        new = I + drift * h + (disp @ dw[:, :, None])[:, :, 0]
        if boundary_policy == "clamp-at-zero":
            new = np.maximum(new, 0.0)
        elif boundary_policy == "reflect-at-zero":
            new = np.abs(new)
        return new

    return step


# ---------------------------------------------------------------------------
# public ensemble simulators (batch layout) and single-path wrappers


def _chunked(B: int, parallelism: int):
    parallelism = max(1, int(parallelism))
    bounds = np.linspace(0, B, min(parallelism, B) + 1).astype(int)
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def _simulate(step_fn, inits: np.ndarray, cfg: IntegratorConfig, wdim: int,
              stop: StoppingRule, actions_fn, norms_fn, trajectory_ids,
              store, parallelism: int) -> EnsembleResult:
    B = inits.shape[0]
    ids = np.asarray(list(trajectory_ids), dtype=np.int64)
    if ids.shape[0] != B:
        raise DomainError("trajectory id count must match batch size")
    n_steps = cfg.n_steps
    noise = ensemble_increments(cfg.seed, ids, n_steps, wdim, cfg.step)

    chunks = _chunked(B, parallelism)

    def run(chunk):
        a, b = chunk
        return _run_batch(step_fn, inits[a:b], noise[a:b], cfg.step, stop,
                          actions_fn, norms_fn, store)

    if len(chunks) == 1:
        times, states, stopped = run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
        times = parts[0][0]
        states = np.concatenate([p[1] for p in parts], axis=0)
        stopped = np.concatenate([p[2] for p in parts], axis=0)
    return EnsembleResult(times, states, stopped, ids)


def simulate_torus_ensemble(system: TorusSystem, eps, init: ActionAngleState,
                            cfg: IntegratorConfig, n_paths: int,
                            stop: Optional[StoppingRule] = None,
                            store="all", parallelism: int = 1,
                            trajectory_ids: Optional[Sequence[int]] = None) -> EnsembleResult:
    """Batched trajectories of a perturbed torus system from one initial point."""
    e = eps_value(eps)
    stop = stop or StoppingRule.none()
    d = system.d
    state0 = np.tile(np.concatenate([init.I, init.phi])[None, :], (n_paths, 1))
    ids = trajectory_ids if trajectory_ids is not None else range(n_paths)
    return _simulate(_torus_stepper(system, e, cfg.scheme), state0, cfg,
                     system.d1, stop, lambda s: s[:, :d], None, ids, store,
                     parallelism)


def simulate_birkhoff_ensemble(system: BirkhoffSystem, eps, init: CartesianState,
                               cfg: IntegratorConfig, n_paths: int,
                               stop: Optional[StoppingRule] = None,
                               store="all", parallelism: int = 1,
                               trajectory_ids: Optional[Sequence[int]] = None) -> EnsembleResult:
    """Batched trajectories of a perturbed Cartesian system."""
    e = eps_value(eps)
    stop = stop or StoppingRule.none()
    state0 = np.tile(init.v[None, :], (n_paths, 1))
    ids = trajectory_ids if trajectory_ids is not None else range(n_paths)
    return _simulate(_birkhoff_stepper(system, e, cfg.scheme), state0, cfg,
                     2 * system.n1, stop, actions_of,
                     lambda s: np.linalg.norm(s, axis=-1), ids, store, parallelism)


def simulate_effective_ensemble(model: EffectiveModel, init: CartesianState,
                                cfg: IntegratorConfig, n_paths: int,
                                stop: Optional[StoppingRule] = None,
                                store="all", parallelism: int = 1,
                                trajectory_ids: Optional[Sequence[int]] = None) -> EnsembleResult:
    """Batched trajectories of the effective v-equation."""
    stop = stop or StoppingRule.none()
    state0 = np.tile(init.v[None, :], (n_paths, 1))
    ids = trajectory_ids if trajectory_ids is not None else range(n_paths)
    return _simulate(_effective_stepper(model), state0, cfg, 2 * model.source.n,
                     stop, actions_of, lambda s: np.linalg.norm(s, axis=-1),
                     ids, store, parallelism)


def simulate_averaged_ensemble(model: Union[AveragedActionModel, AveragedModel],
                               init: np.ndarray, cfg: IntegratorConfig, n_paths: int,
                               stop: Optional[StoppingRule] = None,
                               store="all", parallelism: int = 1,
                               trajectory_ids: Optional[Sequence[int]] = None) -> EnsembleResult:
    """Batched trajectories of an averaged action equation.

    The boundary policy applies only to action models on R_+^n; averaged
    torus systems evolve unconstrained.
    """
    stop = stop or StoppingRule.none()
    init = np.atleast_1d(np.asarray(init, dtype=float))
    nonneg = isinstance(model, AveragedActionModel)
    if nonneg and np.any(init < 0):
        raise DomainError("averaged action initial condition must be nonnegative")
    policy = cfg.boundary_policy if nonneg else None
    dim = model.source.n if nonneg else model.source.d
    state0 = np.tile(init[None, :], (n_paths, 1))
    ids = trajectory_ids if trajectory_ids is not None else range(n_paths)
    return _simulate(_averaged_action_stepper(model, policy), state0, cfg, dim,
                     stop, lambda s: s, None, ids, store, parallelism)


def _single(result: EnsembleResult, wdim: int, cfg: IntegratorConfig) -> SdePath:
    from .noise import wiener_increments
    noise = wiener_increments(cfg.seed, cfg.trajectory_id, cfg.n_steps, wdim, cfg.step)
    sa = int(result.stopped_at[0])
    return SdePath(result.times, result.states[0],
                   noise, None if sa < 0 else sa)


def integrate_torus_system(system: TorusSystem, eps, init: ActionAngleState,
                           cfg: IntegratorConfig,
                           stop: Optional[StoppingRule] = None) -> SdePath:
    """One path of the perturbed torus system; state rows are (I, phi)."""
    res = simulate_torus_ensemble(system, eps, init, cfg, 1, stop, "all", 1,
                                  [cfg.trajectory_id])
    return _single(res, system.d1, cfg)


def integrate_birkhoff_system(system: BirkhoffSystem, eps, init: CartesianState,
                              cfg: IntegratorConfig,
                              stop: Optional[StoppingRule] = None) -> SdePath:
    """One path of the perturbed Cartesian system."""
    res = simulate_birkhoff_ensemble(system, eps, init, cfg, 1, stop, "all", 1,
                                     [cfg.trajectory_id])
    return _single(res, 2 * system.n1, cfg)


def integrate_effective(model: EffectiveModel, init: CartesianState,
                        cfg: IntegratorConfig,
                        stop: Optional[StoppingRule] = None) -> SdePath:
    """One path of the effective v-equation."""
    res = simulate_effective_ensemble(model, init, cfg, 1, stop, "all", 1,
                                      [cfg.trajectory_id])
    return _single(res, 2 * model.source.n, cfg)


def integrate_averaged_actions(model, init, cfg: IntegratorConfig,
                               stop: Optional[StoppingRule] = None) -> SdePath:
    """One path of an averaged action equation."""
    res = simulate_averaged_ensemble(model, init, cfg, 1, stop, "all", 1,
                                     [cfg.trajectory_id])
    nonneg = isinstance(model, AveragedActionModel)
    dim = model.source.n if nonneg else model.source.d
    return _single(res, dim, cfg)


def run_ensemble(task: Callable[[int, int], SdePath], n_paths: int,
                 base_seed: int, parallelism: int = 1) -> PathEnsemble:
    """Integrate task(base_seed, i) for i in 0..n_paths-1.

    Path i draws its noise from the stream keyed by (base_seed, i), so the
    result is bitwise independent of the parallelism degree.
    """
    if n_paths < 1:
        raise DomainError("need n_paths >= 1")
    ids = list(range(n_paths))
    if parallelism <= 1:
        paths = [task(base_seed, i) for i in ids]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            paths = list(pool.map(lambda i: task(base_seed, i), ids))
    return PathEnsemble(paths)
