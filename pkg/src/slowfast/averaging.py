"""Quadrature over the torus, averaged coefficients, and resonance diagnostics.

Averages are normalized: <f> = (2 pi)^{-n} integral of f over T^n, realized
as an equal-weight node sum.  Tensor-product trapezoid rules are spectrally
accurate for smooth periodic integrands and exact for trigonometric
polynomials of per-axis degree below the node count; rank-1 lattices keep the
node count tame for n >= 4.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, InternalError
from .models import TWO_PI, TorusSystem

# Korobov generators a for z = (1, a, a^2, ...) mod M, chosen once per size.
_KOROBOV_A = {4096: 1571, 2048: 619, 1024: 419, 512: 149}


@dataclass(frozen=True)
class TorusQuadrature:
    """Equal-weight node set on [0, 2 pi)^n with weights summing to one."""

    kind: str
    nodes: np.ndarray      # (M, n)
    weights: np.ndarray    # (M,)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 2 or weights.shape != (nodes.shape[0],):
            raise DomainError("quadrature nodes must be (M, n) with matching weights")
        if abs(weights.sum() - 1.0) > 1e-14:
            raise DomainError("quadrature weights must sum to 1 within 1e-14")
        if np.any(nodes < 0.0) or np.any(nodes >= TWO_PI):
            raise DomainError("quadrature nodes must lie in [0, 2 pi)")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]


def tensor_trapezoid(n: int, points_per_dim: int = 64) -> TorusQuadrature:
    """Tensor-product trapezoid rule with `points_per_dim` nodes per angle."""
    if n < 1 or points_per_dim < 1:
        raise DomainError("need n >= 1 and points_per_dim >= 1")
    axis = np.arange(points_per_dim) * (TWO_PI / points_per_dim)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    m = nodes.shape[0]
    return TorusQuadrature("tensor-trapezoid", nodes, np.full(m, 1.0 / m))


def rank1_lattice(n: int, size: int = 4096, generator: Optional[np.ndarray] = None) -> TorusQuadrature:
    """Rank-1 lattice rule: node_j = 2 pi * frac(j * z / M)."""
    if n < 1 or size < 2:
        raise DomainError("need n >= 1 and size >= 2")
    if generator is None:
        a = _KOROBOV_A.get(size, 1571)
        generator = np.array([pow(a, k, size) for k in range(n)], dtype=np.int64)
    z = np.asarray(generator, dtype=np.int64) % size
    j = np.arange(size, dtype=np.int64)[:, None]
    frac = (j * z[None, :] % size) / float(size)
    return TorusQuadrature("rank1-lattice", TWO_PI * frac, np.full(size, 1.0 / size))


def default_quadrature(n: int, points_per_dim: int = 64, lattice_size: int = 4096) -> TorusQuadrature:
    """Tensor trapezoid for n <= 3, rank-1 lattice for higher dimension."""
    if n <= 3:
        return tensor_trapezoid(n, points_per_dim)
    return rank1_lattice(n, lattice_size)


def average_over_torus(f: Callable, quadrature: TorusQuadrature) -> np.ndarray:
    """Weighted node sum of f over the torus.

    `f` is called once with the (M, n) node array and should return (M, ...)
    values; a per-node python fallback is used when it does not vectorize.
    """
    nodes = quadrature.nodes
    try:
        vals = np.asarray(f(nodes), dtype=float)
        if vals.shape[:1] != (quadrature.size,):
            raise ValueError
    except Exception:
        vals = np.stack([np.asarray(f(x), dtype=float) for x in nodes])
    return np.einsum("q,q...->...", quadrature.weights, vals, optimize=False)


def _broadcast_nodes(I: np.ndarray, quadrature: TorusQuadrature):
    """Pair each action vector with every quadrature node.

    Returns (I_b, phi_b) of shapes (..., M, d) and (..., M, n).
    """
    I = np.asarray(I, dtype=float)
    nodes = quadrature.nodes
    Ib = np.broadcast_to(I[..., None, :], I.shape[:-1] + (quadrature.size, I.shape[-1]))
    phib = np.broadcast_to(nodes, I.shape[:-1] + nodes.shape)
    return Ib, phib


def averaged_drift(system: TorusSystem, I: np.ndarray, quadrature: TorusQuadrature) -> np.ndarray:
    """Angle average of the slow drift at fixed actions."""
    Ib, phib = _broadcast_nodes(I, quadrature)
    vals = np.asarray(system.driftI(Ib, phib), dtype=float)
    return (vals * quadrature.weights[:, None]).sum(axis=-2)


def averaged_diffusion(system: TorusSystem, I: np.ndarray, quadrature: TorusQuadrature,
                       sym_tol: float = 1e-10) -> np.ndarray:
    """Angle average of dispI * dispI^t, symmetrized and checked."""
    Ib, phib = _broadcast_nodes(I, quadrature)
    psi = np.asarray(system.dispI(Ib, phib), dtype=float)
    y = psi * np.sqrt(quadrature.weights)[:, None, None]
    y = np.swapaxes(y, -3, -2)                     # (..., d, M, d1)
    y = y.reshape(y.shape[:-2] + (-1,))            # (..., d, M*d1)
    a = y @ np.swapaxes(y, -1, -2)
    asym = np.max(np.abs(a - np.swapaxes(a, -1, -2)))
    scale = max(1.0, float(np.max(np.abs(a))))
    if asym > sym_tol * scale:
        raise InternalError(f"averaged diffusion asymmetric by {asym:.3e}")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def principal_sqrt(A: np.ndarray, sym_tol: float = 1e-10, neg_tol: float = 1e-12) -> np.ndarray:
    """Principal (symmetric PSD) square root via eigendecomposition.

    Eigenvalues in [-neg_tol*scale, 0) are clamped to zero; asymmetry or
    indefiniteness beyond tolerance raises :class:`DomainError`.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[-1] != A.shape[-2]:
        raise DomainError("principal_sqrt expects square matrices")
    scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
    asym = float(np.max(np.abs(A - np.swapaxes(A, -1, -2)))) if A.size else 0.0
    if asym > sym_tol * scale:
        raise DomainError(f"matrix asymmetric by {asym:.3e}, beyond tolerance")
    As = 0.5 * (A + np.swapaxes(A, -1, -2))
    w, V = np.linalg.eigh(As)
    if np.any(w < -neg_tol * scale):
        raise DomainError(f"matrix indefinite: min eigenvalue {w.min():.3e}")
    w = np.clip(w, 0.0, None)
    root = (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (root + np.swapaxes(root, -1, -2))


@dataclass(frozen=True)
class AveragedModel:
    """Angle-averaged drift and dispersion evaluators for a torus system.

    The dispersion is the principal square root of the averaged diffusion,
    so dispersion(I) @ dispersion(I)^t reproduces diffusion(I).
    """

    source: TorusSystem
    quadrature: TorusQuadrature

    def drift(self, I: np.ndarray) -> np.ndarray:
        return averaged_drift(self.source, I, self.quadrature)

    def diffusion(self, I: np.ndarray) -> np.ndarray:
        return averaged_diffusion(self.source, I, self.quadrature)

    def dispersion(self, I: np.ndarray) -> np.ndarray:
        return principal_sqrt(self.diffusion(I))

    def self_check(self, I: np.ndarray, rtol: float = 1e-10) -> float:
        """Relative defect of dispersion(I)^2 against diffusion(I)."""
        a = self.diffusion(I)
        k = principal_sqrt(a)
        k2 = np.einsum("...ij,...jk->...ik", k, k, optimize=False)
        return float(np.max(np.abs(k2 - a)) / max(1.0, np.max(np.abs(a))))


# 5-point Gauss-Legendre nodes/weights on [-1, 1]
_GL_X = np.array([-0.9061798459386640, -0.5384693101056831, 0.0,
                  0.5384693101056831, 0.9061798459386640])
_GL_W = np.array([0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                  0.4786286704993665, 0.2369268850561891])


def flow_time_average(system: TorusSystem, I: np.ndarray, phi0: np.ndarray, N: float,
                      panels_per_unit: Optional[float] = None) -> np.ndarray:
    """Time average (1/N) int_0^N driftI(I, phi0 + t*theta(I)) dt.

    Composite 5-point Gauss-Legendre in t; panel density follows the fastest
    phase so the oscillatory integrand stays resolved.
    """
    if N <= 0:
        raise DomainError("averaging window N must be positive")
    I = np.asarray(I, dtype=float)
    phi0 = np.asarray(phi0, dtype=float)
    th = np.atleast_1d(np.asarray(system.theta(I), dtype=float))
    if panels_per_unit is None:
        panels_per_unit = max(1.0, float(np.max(np.abs(th)))) / 2.0
    n_panels = int(min(400_000, max(16, np.ceil(N * panels_per_unit))))
    edges = np.linspace(0.0, N, n_panels + 1)
    half = 0.5 * (edges[1] - edges[0])
    mids = 0.5 * (edges[:-1] + edges[1:])
    t = (mids[:, None] + half * _GL_X[None, :]).ravel()           # (P*5,)
    phi = np.mod(phi0[None, :] + t[:, None] * th[None, :], TWO_PI)
    Ib = np.broadcast_to(I, (t.shape[0],) + I.shape)
    vals = np.asarray(system.driftI(Ib, phi), dtype=float)        # (P*5, d)
    w = (np.broadcast_to(_GL_W, (n_panels, 5)) * half).ravel() / N
    return np.einsum("q,qd->d", w, vals, optimize=False)


@dataclass(frozen=True)
class ResonanceDiagnostic:
    """Monte Carlo estimate of the measure of poorly-averaging actions."""

    N: float
    delta: float
    R: float
    estimate: float
    half_width: float
    samples: int
    hit_fraction: float


def ball_volume(d: int, R: float) -> float:
    from math import gamma, pi
    return pi ** (d / 2.0) / gamma(d / 2.0 + 1.0) * R ** d


def resonant_set_measure(system: TorusSystem, N: float, delta: float, R: float,
                         samples: int, seed: int = 0, phi_grid: int = 8,
                         quadrature: Optional[TorusQuadrature] = None) -> ResonanceDiagnostic:
    """Estimate the Lebesgue measure of actions whose finite-window flow
    average deviates from the torus average by more than delta.

    Actions are sampled uniformly in the d-ball of radius R; the sup over
    starting angles is approximated by a max over a finite angle grid.
    """
    if samples < 1:
        raise DomainError("need samples >= 1")
    rng = np.random.default_rng(np.random.Philox(key=(seed, 0x5e50)))
    d, n = system.d, system.n
    if quadrature is None:
        quadrature = default_quadrature(n)
    # uniform in the d-ball: Gaussian direction, radius ~ R * U^(1/d)
    g = rng.standard_normal((samples, d))
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    radii = R * rng.uniform(0.0, 1.0, size=samples) ** (1.0 / d)
    points = g * radii[:, None]

    starts = tensor_trapezoid(n, phi_grid).nodes
    hits = 0
    for I in points:
        base = averaged_drift(system, I, quadrature)
        dev = 0.0
        for phi0 in starts:
            avg = flow_time_average(system, I, phi0, N)
            dev = max(dev, float(np.linalg.norm(avg - base)))
            if dev > delta:
                break
        hits += dev > delta
    p = hits / samples
    vol = ball_volume(d, R)
    hw = vol * 1.96 * np.sqrt(max(p * (1.0 - p), 1.0 / samples) / samples)
    return ResonanceDiagnostic(N, delta, R, vol * p, hw, samples, p)


def anosov_probe(freq: Callable, dim: int, draws: int = 100_000, k_max: int = 5,
                 radius: float = 3.0, tol: float = 1e-9, seed: int = 0,
                 nonneg: bool = False) -> int:
    """Count sampled actions where some integer combination of frequencies
    vanishes (|k . W(I)| < tol, 0 < |k|_inf <= k_max).  Zero hits is the
    expected outcome for a nondegenerate frequency map.
    """
    rng = np.random.default_rng(np.random.Philox(key=(seed, 0xa105)))
    lo = 0.0 if nonneg else -radius
    I = rng.uniform(lo, radius, size=(int(draws), dim))
    w = np.asarray(freq(I), dtype=float)
    ks = np.stack(np.meshgrid(*([np.arange(-k_max, k_max + 1)] * w.shape[1]),
                              indexing="ij"), axis=-1).reshape(-1, w.shape[1])
    ks = ks[np.any(ks != 0, axis=1)].astype(float)
    dots = np.abs(w @ ks.T)
    return int(np.sum(np.any(dots < tol, axis=1)))
