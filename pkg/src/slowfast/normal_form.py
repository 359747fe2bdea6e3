"""Numerical action-angle construction for one-degree-of-freedom Hamiltonians.

For H with a nondegenerate minimum at the origin and closed level loops, the
action of a level is the enclosed area over 2*pi.  Loops are traced by a
radial sweep from the minimum (assuming starlike level sets, true for all
shipped Hamiltonians) with a dense marching fallback.  Angles are flight
times along the Hamiltonian flow from the positive x-axis crossing,
normalized by the period; with this convention the harmonic oscillator
reduces exactly to the polar transform and the flow runs counterclockwise.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError
from .models import TWO_PI, BirkhoffSystem


@dataclass(frozen=True)
class Hamiltonian1D:
    """Energy function on the plane with optional analytic gradient.

    `H` maps coordinate arrays (x, y) to energies; the declared energy
    range (a_min, a_max] must exclude the minimum value H(0, 0).
    """

    H: Callable
    grad: Optional[Callable] = None
    a_min: float = 0.0
    a_max: float = np.inf

    def __post_init__(self):
        h0 = float(self.H(np.array(0.0), np.array(0.0)))
        if not self.a_min > h0 - 1e-15:
            raise DomainError("energy range must sit above the minimum value")

    def gradient(self, x, y):
        if self.grad is not None:
            return self.grad(x, y)
        s = 1e-6 * (1.0 + np.abs(x) + np.abs(y))
        gx = (self.H(x + s, y) - self.H(x - s, y)) / (2 * s)
        gy = (self.H(x, y + s) - self.H(x, y - s)) / (2 * s)
        return gx, gy

    def check_range(self, a: float):
        if not (self.a_min <= a <= self.a_max):
            raise DomainError(f"level {a} outside declared energy range "
                              f"({self.a_min}, {self.a_max}]")


def _radial_solve(ham: Hamiltonian1D, a: float, psi: np.ndarray) -> np.ndarray:
    """Radii r(psi) with H(r cos psi, r sin psi) = a, by vectorized bisection."""
    c, s = np.cos(psi), np.sin(psi)
    hi = np.full_like(psi, max(1.0, np.sqrt(2.0 * max(a, 1e-9))))
    for _ in range(80):
        vals = ham.H(hi * c, hi * s)
        outside = vals < a
        if not np.any(outside):
            break
        hi = np.where(outside, 2.0 * hi, hi)
    else:
        raise DomainError("level loop not bounded along some ray")
    lo = np.zeros_like(psi)
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        inside = ham.H(mid * c, mid * s) < a
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    r = 0.5 * (lo + hi)
    # Newton polish with the radial derivative
    for _ in range(3):
        gx, gy = ham.gradient(r * c, r * s)
        dr = gx * c + gy * s
        step = (ham.H(r * c, r * s) - a) / np.where(np.abs(dr) > 1e-300, dr, 1.0)
        r = np.maximum(r - np.where(np.abs(dr) > 1e-300, step, 0.0), 0.0)
    return r


class LevelLoop:
    """One traced level set with its action, period and flight-time table."""

    def __init__(self, ham: Hamiltonian1D, a: float, n_psi: int = 512):
        self.a = float(a)
        psi = np.arange(n_psi) * (TWO_PI / n_psi)
        r = _radial_solve(ham, a, psi)
        if np.any(r <= 0):
            raise DomainError(f"level loop at a={a} collapses to the origin")
        # starlike probe: slightly inside the traced radius must be sub-level
        probe = ham.H(0.995 * r * np.cos(psi), 0.995 * r * np.sin(psi))
        if np.any(probe >= a):
            raise DomainError(f"level set at a={a} is not starlike about the origin")
        c, s = np.cos(psi), np.sin(psi)
        gx, gy = ham.gradient(r * c, r * s)
        grad_r = gx * c + gy * s
        grad_t = -gx * s + gy * c
        if np.any(np.abs(grad_r) < 1e-300):
            raise DomainError("gradient vanishes along the traced loop")
        r_prime = -r * grad_t / grad_r
        speed = np.hypot(gx, gy)
        arc = np.sqrt(r_prime ** 2 + r ** 2)
        dwell = arc / speed                      # dt/dpsi along the flow

        self.n_psi = n_psi
        self.psi = psi
        self.r = r
        self.action = float(np.mean(r ** 2) / 2.0)
        # cumulative flight time on the closed grid, trapezoid in psi
        g_closed = np.concatenate([dwell, dwell[:1]])
        psi_closed = np.concatenate([psi, [TWO_PI]])
        seg = 0.5 * (g_closed[1:] + g_closed[:-1]) * np.diff(psi_closed)
        cumt = np.concatenate([[0.0], np.cumsum(seg)])
        self.period = float(cumt[-1])
        self._time_spline = PchipInterpolator(psi_closed, cumt)

    def time_at(self, psi: float) -> float:
        return float(self._time_spline(np.mod(psi, TWO_PI)))

    def psi_at_time(self, t: float) -> float:
        t = float(np.mod(t, self.period))
        if t <= 0.0:
            return 0.0
        f = lambda p: float(self._time_spline(p)) - t
        return float(brentq(f, 0.0, TWO_PI, xtol=1e-14, rtol=1e-15))


def _march_area(ham: Hamiltonian1D, a: float, max_steps: int = 200_000) -> float:
    """Dense contour marching fallback: predictor-corrector around the loop."""
    r0 = float(_radial_solve(ham, a, np.array([0.0]))[0])
    p = np.array([r0, 0.0])
    start = p.copy()
    scale = max(r0, 1e-3)
    step = 2e-3 * scale
    area2 = 0.0
    prev = p.copy()
    for k in range(max_steps):
        gx, gy = ham.gradient(p[0], p[1])
        norm = np.hypot(gx, gy)
        if norm < 1e-300:
            raise DomainError("gradient vanished during contour marching")
        tangent = np.array([-gy, gx]) / norm
        q = p + step * tangent
        for _ in range(3):
            gx, gy = ham.gradient(q[0], q[1])
            n2 = gx * gx + gy * gy
            q = q - (float(ham.H(q[0], q[1])) - a) / max(n2, 1e-300) * np.array([gx, gy])
        area2 += prev[0] * q[1] - prev[1] * q[0]
        prev = q
        p = q
        if k > 10 and np.hypot(*(p - start)) < step:
            area2 += prev[0] * start[1] - prev[1] * start[0]
            return abs(area2) / 2.0
    raise DomainError(f"contour at a={a} failed to close while marching")


def action_of_level(ham: Hamiltonian1D, a: float, n_psi: int = 512) -> float:
    """Action of the level loop: enclosed area over 2*pi."""
    ham.check_range(a)
    try:
        return LevelLoop(ham, a, n_psi).action
    except DomainError:
        return _march_area(ham, a) / TWO_PI


@dataclass(frozen=True)
class ActionProfile:
    """Tabulated normal form: I(a), its monotone inverse h, frequencies and
    periods, cross-checkable through omega(I) * T = 2*pi."""

    levels: np.ndarray
    actions: np.ndarray
    periods: np.ndarray

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        ac = np.asarray(self.actions, dtype=float)
        pd = np.asarray(self.periods, dtype=float)
        if lv.size < 8:
            raise DomainError("need at least 8 levels in the profile grid")
        if np.any(np.diff(ac) <= 0):
            raise DomainError("actions must be strictly increasing in the level")
        for arr in (lv, ac, pd):
            arr.setflags(write=False)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "actions", ac)
        object.__setattr__(self, "periods", pd)
        object.__setattr__(self, "_h", PchipInterpolator(ac, lv))
        object.__setattr__(self, "_h_prime", PchipInterpolator(ac, lv).derivative())
        object.__setattr__(self, "_action_interp", PchipInterpolator(lv, ac))

    def action_at_level(self, a):
        return self._action_interp(a)

    def h(self, I):
        """Energy as a function of the action (monotone cubic)."""
        return self._h(I)

    def omega(self, I):
        """Frequency d h / d I."""
        return self._h_prime(I)

    def omega_from_period(self, I):
        """Independent frequency route through the period table."""
        period = PchipInterpolator(self.actions, self.periods)(I)
        return TWO_PI / period

    def to_json(self) -> str:
        return json.dumps({"levels": self.levels.tolist(),
                           "actions": self.actions.tolist(),
                           "periods": self.periods.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ActionProfile":
        data = json.loads(text)
        return cls(np.asarray(data["levels"]), np.asarray(data["actions"]),
                   np.asarray(data["periods"]))


def build_action_profile(ham: Hamiltonian1D, level_grid: Sequence[float],
                         n_psi: int = 512) -> ActionProfile:
    """Trace every level of the grid and assemble the profile tables."""
    levels = np.asarray(sorted(level_grid), dtype=float)
    if levels.size < 8:
        raise DomainError("need at least 8 levels")
    for a in (levels[0], levels[-1]):
        ham.check_range(float(a))
    actions = np.empty(levels.size)
    periods = np.empty(levels.size)
    for i, a in enumerate(levels):
        loop = LevelLoop(ham, float(a), n_psi)
        actions[i] = loop.action
        periods[i] = loop.period
    return ActionProfile(levels, actions, periods)


class ActionAngleMap1D:
    """Forward/inverse action-angle transform built on traced level loops."""

    def __init__(self, ham: Hamiltonian1D, profile: ActionProfile,
                 n_psi: int = 512, cache_size: int = 256):
        self.ham = ham
        self.profile = profile
        self.n_psi = n_psi
        self._cache: OrderedDict[float, LevelLoop] = OrderedDict()
        self._cache_size = cache_size

    def _loop(self, a: float) -> LevelLoop:
        key = float(a)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        loop = LevelLoop(self.ham, key, self.n_psi)
        self._cache[key] = loop
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return loop

    def forward(self, xy) -> tuple:
        x, y = float(xy[0]), float(xy[1])
        if x == 0.0 and y == 0.0:
            return 0.0, 0.0
        a = float(self.ham.H(np.array(x), np.array(y)))
        self.ham.check_range(a)
        loop = self._loop(a)
        psi = float(np.mod(np.arctan2(y, x), TWO_PI))
        phi = TWO_PI * loop.time_at(psi) / loop.period
        return loop.action, float(np.mod(phi, TWO_PI))

    def _level_of_action(self, I: float) -> float:
        a = float(self.profile.h(I))
        a = min(max(a, self.ham.a_min), self.ham.a_max)
        for _ in range(12):
            loop = self._loop(a)
            err = loop.action - I
            if abs(err) <= 1e-13 * max(1.0, abs(I)):
                return a
            a = a - err * (TWO_PI / loop.period)   # dI/da = 1/omega
            a = min(max(a, self.ham.a_min), self.ham.a_max)
        return a

    def inverse(self, I: float, phi: float):
        if I < 0:
            raise DomainError("action must be nonnegative")
        if I == 0.0:
            return np.array([0.0, 0.0])
        a = self._level_of_action(float(I))
        loop = self._loop(a)
        t = float(np.mod(phi, TWO_PI)) / TWO_PI * loop.period
        psi = loop.psi_at_time(t)
        r = float(_radial_solve(self.ham, a, np.array([psi]))[0])
        return np.array([r * np.cos(psi), r * np.sin(psi)])


def aa_transform_1dof(ham: Hamiltonian1D, profile: ActionProfile, xy,
                      n_psi: int = 512) -> tuple:
    """One-shot forward transform (I, phi) of a plane point."""
    return ActionAngleMap1D(ham, profile, n_psi).forward(xy)


def aa_inverse_1dof(ham: Hamiltonian1D, profile: ActionProfile, I, phi,
                    n_psi: int = 512) -> np.ndarray:
    """One-shot inverse transform of action-angle coordinates."""
    return ActionAngleMap1D(ham, profile, n_psi).inverse(I, phi)


# ---------------------------------------------------------------------------
# shipped Hamiltonians


def harmonic() -> Hamiltonian1D:
    return Hamiltonian1D(
        H=lambda x, y: 0.5 * (x ** 2 + y ** 2),
        grad=lambda x, y: (x, y),
        a_min=1e-8, a_max=1e6)


def quartic_radial() -> Hamiltonian1D:
    def H(x, y):
        r2 = x ** 2 + y ** 2
        return 0.5 * r2 + 0.25 * r2 ** 2

    def grad(x, y):
        r2 = x ** 2 + y ** 2
        return (x * (1.0 + r2), y * (1.0 + r2))

    return Hamiltonian1D(H=H, grad=grad, a_min=1e-8, a_max=1e6)


def duffing() -> Hamiltonian1D:
    """Hardening oscillator energy y^2/2 + x^2/2 + x^4/4."""
    return Hamiltonian1D(
        H=lambda x, y: 0.5 * y ** 2 + 0.5 * x ** 2 + 0.25 * x ** 4,
        grad=lambda x, y: (x + x ** 3, y),
        a_min=1e-8, a_max=1e6)


SHIPPED_HAMILTONIANS = {
    "harmonic": harmonic,
    "quartic-radial": quartic_radial,
    "duffing": duffing,
}


def build_oscillator_chain(profile: ActionProfile, n: int, coupling: Callable,
                           noise, probe_seed: int = 0) -> BirkhoffSystem:
    """Assemble a nearest-neighbour chain with per-block frequency omega(I_k).

    `coupling(left, mid, right)` maps planar blocks (..., 2) to the force on
    the middle block; missing neighbours are zero blocks.  `noise` is either
    a constant (2n, 2n1) matrix or a callable v -> (..., 2n, 2n1); degenerate
    noise is rejected at probe points.
    """
    if n < 1:
        raise DomainError("need at least one oscillator")
    I_max = float(profile.actions[-1])

    def W(I):
        return np.asarray(profile.omega(np.clip(I, 0.0, I_max)), dtype=float)

    def P(v):
        v = np.asarray(v, dtype=float)
        blocks = v.reshape(v.shape[:-1] + (n, 2))
        zero = np.zeros_like(blocks[..., 0, :])
        out = np.empty_like(blocks)
        for k in range(n):
            left = blocks[..., k - 1, :] if k > 0 else zero
            right = blocks[..., k + 1, :] if k < n - 1 else zero
            out[..., k, :] = coupling(left, blocks[..., k, :], right)
        return out.reshape(v.shape)

    if callable(noise):
        B = noise
        n1 = np.asarray(noise(np.zeros(2 * n)), dtype=float).shape[-1] // 2
    else:
        mat = np.asarray(noise, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != 2 * n or mat.shape[1] % 2 != 0:
            raise DomainError("constant noise must be a (2n, 2*n1) matrix")
        n1 = mat.shape[1] // 2

        def B(v):
            v = np.asarray(v, dtype=float)
            return np.broadcast_to(mat, v.shape[:-1] + mat.shape).copy()

    system = BirkhoffSystem(n=n, n1=n1, W=W, P=P, B=B)
    rng = np.random.default_rng(np.random.Philox(key=(probe_seed, 0xc4a1)))
    from .models import probe_birkhoff_ellipticity
    probe = probe_birkhoff_ellipticity(system, rng, n_points=32, radius=2.0)
    if probe.min_eig < 1e-8:
        raise DomainError(f"degenerate noise: min probed eigenvalue {probe.min_eig:.3e}")
    return system
