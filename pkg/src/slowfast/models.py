"""Domain types for slow-fast systems and the coordinate maps between them.

States live either in action-angle variables (I, phi) on R^d x T^n or as
Cartesian vectors v in R^{2n} viewed as n planar blocks.  Coefficient
bundles (`TorusSystem`, `BirkhoffSystem`) hold user-supplied callables; all
callables are expected to be numpy-vectorized over leading batch axes (see
README, "coefficient conventions") and must be safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi


def wrap_angles(phi: np.ndarray) -> np.ndarray:
    """Reduce angles into [0, 2*pi)."""
    return np.mod(phi, TWO_PI)


def as_blocks(v: np.ndarray) -> np.ndarray:
    """View a (..., 2n) Cartesian vector as (..., n, 2) planar blocks."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] % 2 != 0:
        raise DomainError(f"Cartesian vector length {v.shape[-1]} is odd")
    return v.reshape(v.shape[:-1] + (v.shape[-1] // 2, 2))


def from_blocks(blocks: np.ndarray) -> np.ndarray:
    """Inverse of :func:`as_blocks`."""
    blocks = np.asarray(blocks, dtype=float)
    return blocks.reshape(blocks.shape[:-2] + (blocks.shape[-2] * 2,))


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ActionAngleState:
    """Point (I, phi) with angles stored reduced mod 2*pi."""

    I: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        I = _frozen(np.atleast_1d(self.I))
        phi = _frozen(wrap_angles(np.atleast_1d(self.phi)))
        if I.ndim != 1 or phi.ndim != 1:
            raise DomainError("ActionAngleState expects 1-D action and angle vectors")
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class CartesianState:
    """Vector v in R^{2n}, read as n planar blocks (v_k, v_{-k})."""

    v: np.ndarray

    def __post_init__(self):
        v = _frozen(np.atleast_1d(self.v))
        if v.ndim != 1 or v.shape[0] % 2 != 0:
            raise DomainError("CartesianState expects a 1-D vector of even length")
        if not np.all(np.isfinite(v)):
            raise DomainError("CartesianState entries must be finite")
        object.__setattr__(self, "v", v)

    @property
    def n_blocks(self) -> int:
        return self.v.shape[0] // 2


@dataclass(frozen=True)
class Epsilon:
    """Perturbation size, constrained to (0, 1]."""

    value: float

    def __post_init__(self):
        if not (0.0 < float(self.value) <= 1.0):
            raise DomainError(f"epsilon must lie in (0, 1], got {self.value}")

    def __float__(self) -> float:
        return float(self.value)


def eps_value(eps) -> float:
    """Accept a bare float or an :class:`Epsilon` and validate it."""
    x = float(eps)
    if not (0.0 < x <= 1.0):
        raise DomainError(f"epsilon must lie in (0, 1], got {x}")
    return x


@dataclass(frozen=True)
class TorusSystem:
    """Perturbed rotator on R^d x T^n.

    Slow-time dynamics:

        dI   = driftI(I, phi) dtau + dispI(I, phi) dW
        dphi = [theta(I)/eps + driftPhi(I, phi)] dtau + dispPhi(I, phi) dW

    with a single d1-dimensional Wiener process W shared by both lines.
    Shapes: theta (...,d)->(...,n), driftI -> (...,d), driftPhi -> (...,n),
    dispI -> (...,d,d1), dispPhi -> (...,n,d1).
    """

    d: int
    n: int
    d1: int
    theta: Callable
    driftI: Callable
    driftPhi: Callable
    dispI: Callable
    dispPhi: Callable
    growth_q: float = 1.0


@dataclass(frozen=True)
class BirkhoffSystem:
    """Perturbed integrable system in R^{2n}.

    Slow-time dynamics per block k:

        dv_k = [W_k(I) v_k^perp / eps + P_k(v)] dtau + sum_j B_kj(v) dbeta_j

    with n1 independent planar Wiener processes beta_j.  Shapes:
    W (...,n)->(...,n), P (...,2n)->(...,2n), B (...,2n)->(...,2n,2*n1).
    """

    n: int
    n1: int
    W: Callable
    P: Callable
    B: Callable


def actions_of(v: np.ndarray) -> np.ndarray:
    """Per-block actions I_k = ||v_k||^2 / 2 for (..., 2n) vectors."""
    b = as_blocks(v)
    return 0.5 * (b[..., 0] ** 2 + b[..., 1] ** 2)


def angles_of(v: np.ndarray) -> np.ndarray:
    """Per-block angles, zero on blocks where v_k = 0."""
    b = as_blocks(v)
    phi = wrap_angles(np.arctan2(b[..., 1], b[..., 0]))
    zero = (b[..., 0] == 0.0) & (b[..., 1] == 0.0)
    return np.where(zero, 0.0, phi)


def action_angle_of(v: CartesianState) -> ActionAngleState:
    """Action-angle coordinates of a Cartesian state.

    The angle is chosen so that v_k = sqrt(2 I_k) (cos phi_k, sin phi_k)
    holds exactly; phi_k = 0 on zero blocks.
    """
    return ActionAngleState(I=actions_of(v.v), phi=angles_of(v.v))


def cartesian_of(s: ActionAngleState) -> CartesianState:
    """Cartesian state with the prescribed actions and angles."""
    if np.any(s.I < 0):
        raise DomainError("actions must be nonnegative to build a Cartesian state")
    return CartesianState(v=cartesian_from_aa(s.I, s.phi))


def cartesian_from_aa(I: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Array version of :func:`cartesian_of` for (..., n) inputs."""
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise DomainError("actions must be nonnegative")
    r = np.sqrt(2.0 * I)
    return from_blocks(np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1))


def rotate_blocks(v: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Apply the block-diagonal torus rotation by angles theta to v.

    Block k is rotated by the planar matrix [[c,-s],[s,c]] with
    c=cos(theta_k), s=sin(theta_k).  Broadcasts over leading axes.
    """
    theta = np.asarray(theta, dtype=float)
    return rotate_blocks_cs(v, np.cos(theta), np.sin(theta))


def rotate_blocks_cs(v: np.ndarray, c: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Rotation with precomputed per-block cosines and sines."""
    v = np.asarray(v, dtype=float)
    x, y = v[..., 0::2], v[..., 1::2]
    shape = np.broadcast_shapes(x.shape, np.asarray(c).shape)
    out = np.empty(shape[:-1] + (2 * shape[-1],))
    out[..., 0::2] = c * x - s * y
    out[..., 1::2] = s * x + c * y
    return out


def torus_rotate(theta: np.ndarray, v: CartesianState) -> CartesianState:
    """Rotate each planar block of v by the corresponding angle."""
    return CartesianState(v=rotate_blocks(v.v, np.atleast_1d(theta)))


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def planar_aligner(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
    """The unique rotation of R^2 mapping z2/|z2| to z1/|z1|."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    n1, n2 = np.hypot(z1[0], z1[1]), np.hypot(z2[0], z2[1])
    if n1 == 0.0 or n2 == 0.0:
        raise DomainError("planar_aligner requires nonzero vectors")
    # relative angle via the cross/dot pair, stable for nearly parallel inputs
    cross = z2[0] * z1[1] - z2[1] * z1[0]
    dot = z1[0] * z2[0] + z1[1] * z2[1]
    ang = np.arctan2(cross, dot)
    return rotation_matrix(ang)


def min_action(I: np.ndarray) -> float:
    """Smallest action component."""
    return float(np.min(np.atleast_1d(I)))


@dataclass(frozen=True)
class EllipticityProbe:
    """Sampled spectral bounds of a diffusion matrix field."""

    min_eig: float
    max_eig: float
    n_points: int

    def two_sided(self, lam: float, rtol: float = 1e-9) -> bool:
        return self.min_eig >= lam * (1 - rtol) and self.max_eig <= (1.0 / lam) * (1 + rtol)


def _spd_bounds(mats: np.ndarray) -> EllipticityProbe:
    eigs = np.linalg.eigvalsh(mats)
    return EllipticityProbe(float(eigs.min()), float(eigs.max()), mats.shape[0])


def probe_torus_ellipticity(system: TorusSystem, rng: np.random.Generator,
                            n_points: int = 64, radius: float = 3.0) -> EllipticityProbe:
    """Sample dispI * dispI^t on random (I, phi) and report eigenvalue bounds."""
    I = rng.uniform(-radius, radius, size=(n_points, system.d))
    phi = rng.uniform(0.0, TWO_PI, size=(n_points, system.n))
    psi = np.asarray(system.dispI(I, phi), dtype=float)
    a = np.einsum("pij,pkj->pik", psi, psi, optimize=False)
    return _spd_bounds(a)


def probe_birkhoff_ellipticity(system: BirkhoffSystem, rng: np.random.Generator,
                               n_points: int = 64, radius: float = 3.0) -> EllipticityProbe:
    """Sample B * B^t on random v and report eigenvalue bounds."""
    v = rng.uniform(-radius, radius, size=(n_points, 2 * system.n))
    b = np.asarray(system.B(v), dtype=float)
    s = np.einsum("pij,pkj->pik", b, b, optimize=False)
    return _spd_bounds(s)
