"""Catalog of built-in benchmark systems.

Every coefficient callable broadcasts over leading batch axes.  The catalog
carries the declared ellipticity constant and whether the drift satisfies
the coercivity bound (P(v), v) <= -a1 ||v|| + a2, which guarantees moment
bounds and mixing of the effective dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .models import BirkhoffSystem, TorusSystem, as_blocks, from_blocks


@dataclass(frozen=True)
class BuiltinSpec:
    name: str
    kind: str                 # "torus" | "birkhoff"
    description: str
    factory: Callable
    defaults: dict
    ellipticity: float
    coercive: bool


def make_rotator(base: float = 2.0, amp: float = 1.0, theta0: float = 1.0,
                 disp: float = 1.0, angle_disp: float = 0.5) -> TorusSystem:
    """Scalar rotator with angle-dependent contraction of the action."""

    def theta(I):
        return theta0 + I ** 2

    def driftI(I, phi):
        return -(base + amp * np.cos(phi) ** 2) * I

    def driftPhi(I, phi):
        return 0.3 * np.cos(phi)

    def dispI(I, phi):
        return np.broadcast_to(np.array([[disp]]), I.shape + (1,)).copy()

    def dispPhi(I, phi):
        return np.broadcast_to(np.array([[angle_disp]]), phi.shape + (1,)).copy()

    return TorusSystem(d=1, n=1, d1=1, theta=theta, driftI=driftI,
                       driftPhi=driftPhi, dispI=dispI, dispPhi=dispPhi,
                       growth_q=3.0)


def _identity_noise(n: int, n1: int, scale: float = 1.0) -> Callable:
    base = np.zeros((2 * n, 2 * n1))
    for k in range(min(n, n1)):
        base[2 * k, 2 * k] = scale
        base[2 * k + 1, 2 * k + 1] = scale

    def B(v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(base, v.shape[:-1] + base.shape).copy()

    return B


def _default_W(n: int) -> Callable:
    offsets = 1.0 + 0.2 * np.arange(n)

    def W(I):
        I = np.asarray(I, dtype=float)
        return offsets + 0.5 * I / (1.0 + np.abs(I))

    return W


def make_ou(n: int = 1, w0: float = 1.0, rate: float = 1.0,
            noise_scale: float = 1.0) -> BirkhoffSystem:
    """Rotation-equivariant contraction: every action law is eps-free."""

    def W(I):
        I = np.asarray(I, dtype=float)
        return np.broadcast_to(np.full(n, w0), I.shape).copy()

    def P(v):
        return -rate * np.asarray(v, dtype=float)

    return BirkhoffSystem(n=n, n1=n, W=W, P=P, B=_identity_noise(n, n, noise_scale))


def make_ou_tilted(n: int = 1, rate: float = 1.0, tilt: float = 0.6,
                   noise_scale: float = 1.0) -> BirkhoffSystem:
    """Coercive contraction with a genuinely angle-dependent drift."""
    if not 0.0 <= tilt < 1.0:
        raise ConfigError("tilt must lie in [0, 1) to keep the drift coercive")

    def P(v):
        v = np.asarray(v, dtype=float)
        b = as_blocks(v)
        factor = 1.0 + tilt * np.sin(b[..., 0])
        return from_blocks(-rate * factor[..., None] * b)

    return BirkhoffSystem(n=n, n1=n, W=_default_W(n), P=P,
                          B=_identity_noise(n, n, noise_scale))


def make_drift_shift(n: int = 1, shift=(0.8, -0.5),
                     noise_scale: float = 1.0) -> BirkhoffSystem:
    """Constant drift: its rotation average vanishes identically."""
    block = np.asarray(shift, dtype=float)
    if block.shape != (2,):
        raise ConfigError("shift must be a planar vector")
    const = np.tile(block, n)

    def P(v):
        v = np.asarray(v, dtype=float)
        return np.broadcast_to(const, v.shape).copy()

    return BirkhoffSystem(n=n, n1=n, W=_default_W(n), P=P,
                          B=_identity_noise(n, n, noise_scale))


def make_radial_noise(n: int = 2, rate: float = 1.0, bump: float = 0.5) -> BirkhoffSystem:
    """Block-radial dispersion: the rotation average leaves it untouched."""

    def P(v):
        return -rate * np.asarray(v, dtype=float)

    def B(v):
        v = np.asarray(v, dtype=float)
        blocks = as_blocks(v)
        I = 0.5 * (blocks[..., 0] ** 2 + blocks[..., 1] ** 2)   # (..., n)
        amp = 1.0 + bump / (1.0 + 2.0 * I)
        out = np.zeros(v.shape[:-1] + (2 * n, 2 * n))
        for k in range(n):
            out[..., 2 * k, 2 * k] = amp[..., k]
            out[..., 2 * k + 1, 2 * k + 1] = amp[..., k]
        return out

    return BirkhoffSystem(n=n, n1=n, W=_default_W(n), P=P, B=B)


def make_spectral_probe(n: int = 1, pole: float = 1.22, drift_gain: float = 0.35,
                        noise_gain: float = 0.22, wavenumber: float = 1.3) -> BirkhoffSystem:
    """Smooth system whose angular harmonics decay slowly but geometrically.

    The rational composition 1/(pole + sin(wavenumber * .)) keeps an
    infinite angular spectrum, so torus-quadrature errors of its averages
    are measurable above the double-precision floor and shrink by large
    factors when the node count doubles.  `pole` > 1 keeps everything
    finite and elliptic.
    """
    if pole <= 1.0:
        raise ConfigError("pole must exceed 1")

    def wave(t):
        return 1.0 / (pole + np.sin(wavenumber * t))

    def P(v):
        v = np.asarray(v, dtype=float)
        b = as_blocks(v)
        kick = drift_gain * wave(b[..., 0])
        out = -b.copy()
        out[..., 0] = out[..., 0] + kick
        return from_blocks(out)

    def B(v):
        v = np.asarray(v, dtype=float)
        blocks = as_blocks(v)
        amp = 1.0 + noise_gain * wave(blocks[..., 0])
        out = np.zeros(v.shape[:-1] + (2 * n, 2 * n))
        for k in range(n):
            out[..., 2 * k, 2 * k] = amp[..., k]
            out[..., 2 * k + 1, 2 * k + 1] = amp[..., k]
        return out

    return BirkhoffSystem(n=n, n1=n, W=_default_W(n), P=P, B=B)


def make_duffing_chain(profile=None, n: int = 2, kappa: float = 0.3,
                       damping: float = 0.6, noise_scale: float = 1.0):
    """Chain of hardening oscillators with nearest-neighbour coupling.

    Needs a prebuilt action profile (object, JSON text, or path to a JSON
    file produced by the normal-form-build scenario).
    """
    from .normal_form import ActionProfile, build_oscillator_chain

    if profile is None:
        raise ConfigError("duffing-chain requires a prebuilt action profile; "
                          "run the normal-form-build scenario first and pass "
                          "profile=<path to its JSON output>")
    if isinstance(profile, (str, bytes)):
        text = str(profile)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        profile = ActionProfile.from_json(text)

    def coupling(left, mid, right):
        return kappa * (left + right - 2.0 * mid) - damping * mid

    noise = np.zeros((2 * n, 2 * n))
    np.fill_diagonal(noise, noise_scale)
    return build_oscillator_chain(profile, n, coupling, noise)


CATALOG: Dict[str, BuiltinSpec] = {
    "rotator": BuiltinSpec(
        "rotator", "torus",
        "scalar rotator; angle-modulated contraction, unit action noise",
        make_rotator, {"base": 2.0, "amp": 1.0, "theta0": 1.0}, 1.0, True),
    "ou": BuiltinSpec(
        "ou", "birkhoff",
        "rotation-equivariant contraction with identity noise",
        make_ou, {"n": 1, "w0": 1.0, "rate": 1.0}, 1.0, True),
    "ou-tilted": BuiltinSpec(
        "ou-tilted", "birkhoff",
        "coercive contraction with angle-dependent rate",
        make_ou_tilted, {"n": 1, "rate": 1.0, "tilt": 0.6}, 1.0, True),
    "drift-shift": BuiltinSpec(
        "drift-shift", "birkhoff",
        "constant drift whose rotation average vanishes",
        make_drift_shift, {"n": 1, "shift": (0.8, -0.5)}, 1.0, False),
    "radial-noise": BuiltinSpec(
        "radial-noise", "birkhoff",
        "contraction with block-radial, action-dependent noise",
        make_radial_noise, {"n": 2, "rate": 1.0, "bump": 0.5}, 1.0, True),
    "spectral-probe": BuiltinSpec(
        "spectral-probe", "birkhoff",
        "slowly decaying angular harmonics for quadrature-refinement checks",
        make_spectral_probe, {"n": 1, "pole": 1.22}, 0.5, True),
    "duffing-chain": BuiltinSpec(
        "duffing-chain", "birkhoff",
        "hardening-oscillator chain from a prebuilt action profile",
        make_duffing_chain, {"n": 2, "kappa": 0.3, "damping": 0.6}, 0.5, True),
}


def build_system(name: str, params: Optional[dict] = None):
    if name not in CATALOG:
        raise ConfigError(f"unknown builtin system {name!r}; "
                          f"known: {', '.join(sorted(CATALOG))}")
    spec = CATALOG[name]
    kwargs = dict(spec.defaults)
    kwargs.update(params or {})
    try:
        return spec.factory(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {name}: {exc}") from exc


def list_builtins() -> Dict[str, str]:
    """Name -> one-line description of every registered system."""
    return {name: f"[{spec.kind}] {spec.description}"
            for name, spec in sorted(CATALOG.items())}
