"""Effective-equation coefficients by torus-action averaging.

For a Birkhoff-type system the fast rotation is removed and drift/Gram
matrix are averaged over the block-diagonal torus action.  The resulting
drift R(v) is equivariant under the action and the dispersion is the
principal square root of the averaged Gram matrix X(v).  The induced action
process has coefficients F(I), S(I), K(I) depending on the actions alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .averaging import TorusQuadrature, principal_sqrt
from .errors import DomainError, InternalError
from .models import (BirkhoffSystem, actions_of, cartesian_from_aa,
                     rotate_blocks, rotate_blocks_cs)


def _rotation_stack(nodes: np.ndarray) -> np.ndarray:
    """Dense block-diagonal rotation matrices Phi_theta for each node.

    nodes: (M, n) angles -> (M, 2n, 2n).
    """
    M, n = nodes.shape
    c, s = np.cos(nodes), np.sin(nodes)
    out = np.zeros((M, 2 * n, 2 * n))
    idx = np.arange(n)
    out[:, 2 * idx, 2 * idx] = c
    out[:, 2 * idx, 2 * idx + 1] = -s
    out[:, 2 * idx + 1, 2 * idx] = s
    out[:, 2 * idx + 1, 2 * idx + 1] = c
    return out


def _node_cs(quadrature: TorusQuadrature):
    return np.cos(quadrature.nodes), np.sin(quadrature.nodes)


def effective_drift(system: BirkhoffSystem, v: np.ndarray,
                    quadrature: TorusQuadrature, node_cs=None) -> np.ndarray:
    """Group-averaged drift R(v) = <Phi_{-theta} P(Phi_theta v)>."""
    v = np.asarray(v, dtype=float)
    c, s = _node_cs(quadrature) if node_cs is None else node_cs
    vb = rotate_blocks_cs(v[..., None, :], c, s)   # (..., M, 2n)
    pv = np.asarray(system.P(vb), dtype=float)
    back = rotate_blocks_cs(pv, c, -s)
    return (back * quadrature.weights[:, None]).sum(axis=-2)



def effective_gram(system: BirkhoffSystem, v: np.ndarray, quadrature: TorusQuadrature,
                   sym_tol: float = 1e-10, node_cs=None) -> np.ndarray:
    """Averaged Gram matrix X(v) = <Phi_{-theta} B B^t(Phi_theta v) Phi_theta>."""
    v = np.asarray(v, dtype=float)
    c, s = _node_cs(quadrature) if node_cs is None else node_cs
    vb = rotate_blocks_cs(v[..., None, :], c, s)                  # (..., M, 2n)
    b = np.asarray(system.B(vb), dtype=float)                     # (..., M, 2n, 2n1)
    top, bot = b[..., 0::2, :], b[..., 1::2, :]
    cc, ss = c[..., :, None], s[..., :, None]
    rb = np.empty(np.broadcast_shapes(b.shape[:-2], c.shape[:-1]) + b.shape[-2:])
    rb[..., 0::2, :] = cc * top + ss * bot                        # Phi^t B rows
    rb[..., 1::2, :] = -ss * top + cc * bot
    y = rb * np.sqrt(quadrature.weights)[:, None, None]
    y = np.swapaxes(y, -3, -2)                                    # (..., 2n, M, 2n1)
    y = np.ascontiguousarray(y).reshape(y.shape[:-2] + (-1,))
    x = y @ np.swapaxes(y, -1, -2)
    asym = float(np.max(np.abs(x - np.swapaxes(x, -1, -2))))
    if asym > sym_tol * max(1.0, float(np.max(np.abs(x)))):
        raise InternalError(f"effective Gram asymmetric by {asym:.3e}")
    return 0.5 * (x + np.swapaxes(x, -1, -2))


def effective_dispersion(system: BirkhoffSystem, v: np.ndarray,
                         quadrature: TorusQuadrature,
                         node_cs=None) -> np.ndarray:
    """Principal square root of the averaged Gram matrix."""
    return principal_sqrt(effective_gram(system, v, quadrature,
                                         node_cs=node_cs))


def _states_on_orbit(I: np.ndarray, quadrature: TorusQuadrature) -> np.ndarray:
    """Cartesian states with actions I at every quadrature angle node."""
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise DomainError("actions must be nonnegative")
    nodes = quadrature.nodes                                      # (M, n)
    Ib = np.broadcast_to(I[..., None, :], I.shape[:-1] + nodes.shape[:1] + I.shape[-1:])
    phib = np.broadcast_to(nodes, I.shape[:-1] + nodes.shape)
    return cartesian_from_aa(Ib, phib)                            # (..., M, 2n)


def averaged_action_drift(system: BirkhoffSystem, I: np.ndarray,
                          quadrature: TorusQuadrature) -> np.ndarray:
    """Action drift F_k(I) = <v_k . P_k>(I) + (1/2) <sum_j ||B_kj||_HS^2>(I)."""
    vb = _states_on_orbit(I, quadrature)
    pv = np.asarray(system.P(vb), dtype=float)
    dot = vb * pv
    work = dot[..., 0::2] + dot[..., 1::2]                        # (..., M, n)
    b = np.asarray(system.B(vb), dtype=float)                     # (..., M, 2n, 2n1)
    sq = np.sum(b * b, axis=-1)                                   # (..., M, 2n)
    hs = sq[..., 0::2] + sq[..., 1::2]                            # (..., M, n)
    w = quadrature.weights[:, None]
    term1 = (work * w).sum(axis=-2)
    term2 = (hs * w).sum(axis=-2)
    return term1 + 0.5 * term2


def _row_contraction(v: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Y[k, c] = v_k . B[rows of block k, c] for (..., 2n) v, (..., 2n, C) B."""
    contracted = v[..., :, None] * b                              # (..., 2n, C)
    return contracted[..., 0::2, :] + contracted[..., 1::2, :]    # (..., n, C)


def averaged_action_diffusion(system: BirkhoffSystem, I: np.ndarray,
                              quadrature: TorusQuadrature):
    """Action diffusion S_km(I) = <sum_j v_k . B_kj B_mj^t v_m>(I) and its
    principal square root K(I).  Rows and columns vanish with the actions.
    """
    vb = _states_on_orbit(I, quadrature)
    b = np.asarray(system.B(vb), dtype=float)
    y = _row_contraction(vb, b)                                   # (..., M, n, 2n1)
    y = y * np.sqrt(quadrature.weights)[:, None, None]
    y = np.swapaxes(y, -3, -2)                                    # (..., n, M, 2n1)
    y = np.ascontiguousarray(y).reshape(y.shape[:-2] + (-1,))
    s = y @ np.swapaxes(y, -1, -2)
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    return s, principal_sqrt(s)


@dataclass(frozen=True)
class EffectiveModel:
    """Evaluators for the averaged v-equation of a Birkhoff system."""

    source: BirkhoffSystem
    quadrature: TorusQuadrature

    def __post_init__(self):
        object.__setattr__(self, "_node_cs", _node_cs(self.quadrature))

    def drift(self, v: np.ndarray) -> np.ndarray:
        return effective_drift(self.source, v, self.quadrature,
                               node_cs=self._node_cs)

    def gram(self, v: np.ndarray) -> np.ndarray:
        return effective_gram(self.source, v, self.quadrature,
                              node_cs=self._node_cs)

    def dispersion(self, v: np.ndarray) -> np.ndarray:
        return effective_dispersion(self.source, v, self.quadrature,
                                    node_cs=self._node_cs)

    def self_check(self, v: np.ndarray) -> float:
        x = self.gram(v)
        k = principal_sqrt(x)
        kk = np.einsum("...ij,...kj->...ik", k, k, optimize=False)
        return float(np.max(np.abs(kk - x)) / max(1.0, np.max(np.abs(x))))


@dataclass(frozen=True)
class AveragedActionModel:
    """Evaluators for the averaged action equation of a Birkhoff system."""

    source: BirkhoffSystem
    quadrature: TorusQuadrature

    def drift(self, I: np.ndarray) -> np.ndarray:
        return averaged_action_drift(self.source, I, self.quadrature)

    def diffusion(self, I: np.ndarray) -> np.ndarray:
        return averaged_action_diffusion(self.source, I, self.quadrature)[0]

    def dispersion(self, I: np.ndarray) -> np.ndarray:
        return averaged_action_diffusion(self.source, I, self.quadrature)[1]

    def self_check(self, I: np.ndarray) -> float:
        s, k = averaged_action_diffusion(self.source, I, self.quadrature)
        kk = np.einsum("...ij,...kj->...ik", k, k, optimize=False)
        return float(np.max(np.abs(kk - s)) / max(1.0, np.max(np.abs(s))))


@dataclass(frozen=True)
class EquivarianceReport:
    drift_defect: float
    dispersion_defect: float
    trials: int
    points_per_dim: int


def _sample_states(rng: np.random.Generator, n: int, trials: int,
                   norm_range=(0.6, 2.0)) -> np.ndarray:
    """Random Cartesian states with block norms in a fixed annulus."""
    g = rng.standard_normal((trials, n, 2))
    g /= np.maximum(np.linalg.norm(g, axis=-1, keepdims=True), 1e-300)
    radii = rng.uniform(norm_range[0], norm_range[1], size=(trials, n, 1))
    return (g * radii).reshape(trials, 2 * n)


def check_equivariance(system: BirkhoffSystem, quadrature: TorusQuadrature,
                       trials: int = 32, seed: int = 0,
                       norm_range=(0.6, 2.0)) -> EquivarianceReport:
    """Max violation of the rotation covariance of R and the dispersion.

    For random (v, theta): compares R(Phi_theta v) with Phi_theta R(v) and
    the dispersion at Phi_theta v with its conjugated counterpart.
    """
    if trials < 1:
        raise DomainError("need trials >= 1")
    rng = np.random.default_rng(np.random.Philox(key=(seed, 0xef0)))
    n = system.n
    v = _sample_states(rng, n, trials, norm_range)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(trials, n))

    r_plain = effective_drift(system, v, quadrature)
    r_rot = effective_drift(system, rotate_blocks(v, theta), quadrature)
    drift_defect = float(np.max(np.abs(r_rot - rotate_blocks(r_plain, theta))))

    d_plain = effective_dispersion(system, v, quadrature)
    d_rot = effective_dispersion(system, rotate_blocks(v, theta), quadrature)
    phi = np.stack([_rotation_stack(theta[i:i + 1])[0] for i in range(trials)])
    conj = np.einsum("tij,tjk,tlk->til", phi, d_plain, phi, optimize=False)
    disp_defect = float(np.max(np.abs(d_rot - conj)))

    ppd = int(round(quadrature.size ** (1.0 / max(1, quadrature.dim))))
    return EquivarianceReport(drift_defect, disp_defect, trials, ppd)


@dataclass(frozen=True)
class ActionConsistencyReport:
    drift_mismatch: float
    gram_mismatch: float
    trials: int


def check_action_consistency(system: BirkhoffSystem, quadrature: TorusQuadrature,
                             trials: int = 32, seed: int = 0,
                             min_act: float = 0.01) -> ActionConsistencyReport:
    """Check that the action process of the effective equation has the
    averaged-action coefficients.

    Drift route: v_k . R_k(v) + (1/2) <sum_j ||B_kj(Phi_theta v)||_HS^2>
    against F_k(I(v)); Gram route: the Gram of the contracted dispersion rows
    against S(I(v)).
    """
    rng = np.random.default_rng(np.random.Philox(key=(seed, 0xac7)))
    n = system.n
    lo = np.sqrt(2.0 * max(min_act, 1e-6))
    v = _sample_states(rng, n, trials, (max(lo, 0.3), 2.0))
    I = actions_of(v)

    # drift route via the effective coefficients
    r = effective_drift(system, v, quadrature)
    dot = v * r
    term1 = dot[..., 0::2] + dot[..., 1::2]
    vb = rotate_blocks(v[..., None, :], quadrature.nodes)
    b = np.asarray(system.B(vb), dtype=float)
    sq = np.sum(b * b, axis=-1)
    hs = sq[..., 0::2] + sq[..., 1::2]
    term2 = (hs * quadrature.weights[:, None]).sum(axis=-2)
    drift_eff = term1 + 0.5 * term2
    drift_avg = averaged_action_drift(system, I, quadrature)
    drift_mismatch = float(np.max(np.abs(drift_eff - drift_avg)))

    # Gram route via the effective dispersion
    d = effective_dispersion(system, v, quadrature)                # (t, 2n, 2n)
    y = _row_contraction(v, d)                                     # (t, n, 2n)
    gram_eff = np.einsum("...kc,...mc->...km", y, y, optimize=False)
    s_avg, _ = averaged_action_diffusion(system, I, quadrature)
    gram_mismatch = float(np.max(np.abs(gram_eff - s_avg)))

    return ActionConsistencyReport(drift_mismatch, gram_mismatch, trials)
