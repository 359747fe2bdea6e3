import json

import numpy as np
import pytest

from slowfast.engine import IntegratorConfig, simulate_birkhoff_ensemble
from slowfast.errors import DomainError
from slowfast.measures import EmpiricalMeasure, bl_distance_sliced
from slowfast.models import BirkhoffSystem, CartesianState, actions_of
from slowfast.normal_form import (ActionAngleMap1D, ActionProfile,
                                  Hamiltonian1D, _march_area, action_of_level,
                                  aa_inverse_1dof, aa_transform_1dof,
                                  build_action_profile, build_oscillator_chain,
                                  duffing, harmonic, quartic_radial)


def graded_grid(a_lo=0.02, a_hi=3.0, n=160, power=2.2):
    u = np.linspace(0.0, 1.0, n)
    return a_lo + (a_hi - a_lo) * u ** power


@pytest.fixture(scope="module")
def profiles():
    return {
        "harmonic": build_action_profile(harmonic(), graded_grid()),
        "quartic": build_action_profile(quartic_radial(), graded_grid()),
        "duffing": build_action_profile(duffing(), graded_grid()),
    }


def test_harmonic_action_is_identity():
    h = harmonic()
    for a in (0.25, 1.0, 2.7):
        assert action_of_level(h, a) == pytest.approx(a, abs=1e-8)


def test_quartic_action_solves_quadratic():
    q = quartic_radial()
    for a in (0.4, 1.0, 2.5):
        I_true = (-1.0 + np.sqrt(1.0 + 4.0 * a)) / 2.0   # inverts a = I + I^2
        assert action_of_level(q, a) == pytest.approx(I_true, abs=1e-10)


def test_duffing_action_against_marching_fallback():
    d = duffing()
    a = 1.0
    radial = action_of_level(d, a)
    marched = _march_area(d, a) / (2 * np.pi)
    assert marched == pytest.approx(radial, rel=2e-3)


def test_profile_monotone_and_frequency_crosscheck(profiles):
    for name, prof in profiles.items():
        assert np.all(np.diff(prof.actions) > 0)
        Is = np.linspace(prof.actions[2], prof.actions[-3], 50)
        cross = prof.omega(Is) * (2 * np.pi / prof.omega_from_period(Is)) / (2 * np.pi)
        assert np.max(np.abs(cross - 1.0)) <= 1e-4, name


def test_harmonic_and_quartic_frequencies(profiles):
    Is = np.linspace(0.1, 1.2, 25)
    assert np.max(np.abs(profiles["harmonic"].omega(Is) - 1.0)) <= 1e-6
    rel = np.abs(profiles["quartic"].omega(Is) - (1 + 2 * Is)) / (1 + 2 * Is)
    assert np.max(rel) <= 1e-4


def test_duffing_frequency_hardens(profiles):
    om = profiles["duffing"].omega(np.linspace(0.05, 1.5, 30))
    assert np.all(np.diff(om) > 0)


def test_profile_json_round_trip(profiles):
    prof = profiles["duffing"]
    back = ActionProfile.from_json(prof.to_json())
    assert np.array_equal(back.levels, prof.levels)
    assert np.array_equal(back.actions, prof.actions)
    assert np.array_equal(back.periods, prof.periods)
    Is = np.linspace(0.1, 1.0, 7)
    assert np.allclose(back.omega(Is), prof.omega(Is))


def test_profile_validation():
    with pytest.raises(DomainError):
        ActionProfile(np.linspace(0.1, 1, 5), np.linspace(0.1, 1, 5), np.ones(5))
    with pytest.raises(DomainError):
        ActionProfile(np.linspace(0.1, 1, 10), np.ones(10), np.ones(10))
    with pytest.raises(DomainError):
        build_action_profile(harmonic(), [0.1, 0.2, 0.3])


def test_harmonic_transform_reduces_to_polar(profiles):
    m = ActionAngleMap1D(harmonic(), profiles["harmonic"])
    rng = np.random.default_rng(5)
    for _ in range(10):
        xy = rng.uniform(-1.5, 1.5, 2)
        if np.hypot(*xy) < 0.3:
            continue
        I, phi = m.forward(xy)
        assert I == pytest.approx(0.5 * (xy[0] ** 2 + xy[1] ** 2), rel=1e-10)
        assert phi == pytest.approx(np.mod(np.arctan2(xy[1], xy[0]), 2 * np.pi),
                                    abs=1e-10)


def test_origin_conventions(profiles):
    m = ActionAngleMap1D(duffing(), profiles["duffing"])
    assert m.forward((0.0, 0.0)) == (0.0, 0.0)
    assert np.allclose(m.inverse(0.0, 1.3), [0.0, 0.0])
    with pytest.raises(DomainError):
        m.inverse(-0.5, 0.0)


def test_round_trip_duffing(profiles):
    m = ActionAngleMap1D(duffing(), profiles["duffing"])
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(60):
        xy = rng.uniform(-1.3, 1.3, 2)
        if np.hypot(*xy) < 0.25:
            continue
        I, phi = m.forward(xy)
        back = m.inverse(I, phi)
        worst = max(worst, float(np.max(np.abs(back - xy))))
    assert worst <= 1e-6


def test_one_shot_wrappers(profiles):
    prof = profiles["quartic"]
    I, phi = aa_transform_1dof(quartic_radial(), prof, (0.9, 0.4))
    xy = aa_inverse_1dof(quartic_radial(), prof, I, phi)
    assert np.allclose(xy, [0.9, 0.4], atol=1e-7)


def test_transform_is_canonical(profiles):
    # finite-difference Jacobian determinant of (x,y) -> (I, phi) is one
    m = ActionAngleMap1D(duffing(), profiles["duffing"], n_psi=768)
    rng = np.random.default_rng(3)
    h = 2e-5
    dets = []
    for _ in range(12):
        x, y = rng.uniform(-1.1, 1.1, 2)
        if np.hypot(x, y) < 0.4:
            continue

        def f(a, b):
            I, phi = m.forward((a, b))
            return np.array([I, phi])

        fx = (f(x + h, y) - f(x - h, y)) / (2 * h)
        fy = (f(x, y + h) - f(x, y - h)) / (2 * h)
        # guard against branch jumps in the angle derivative
        for g in (fx, fy):
            if abs(g[1]) > 100:
                g[1] = np.nan
        det = fx[0] * fy[1] - fx[1] * fy[0]
        if np.isfinite(det):
            dets.append(det)
    assert len(dets) >= 8
    assert np.max(np.abs(np.array(dets) - 1.0)) <= 1e-4


def test_energy_range_checks():
    h = harmonic()
    with pytest.raises(DomainError):
        action_of_level(h, 1e8 * 2)
    with pytest.raises(DomainError):
        Hamiltonian1D(H=lambda x, y: x ** 2 + y ** 2, a_min=-1.0)


def test_chain_assembly_and_conservation(profiles):
    prof = profiles["quartic"]
    chain = build_oscillator_chain(
        prof, 2,
        coupling=lambda l, m_, r: 0.2 * (l + r - 2 * m_) - 0.5 * m_,
        noise=np.eye(4))
    assert chain.n == 2 and chain.n1 == 2
    I = np.array([[0.3, 0.8]])
    w = chain.W(I)
    assert np.allclose(w, prof.omega(I), atol=1e-12)

    # zero-perturbation variant of the same frequency map conserves actions
    free = BirkhoffSystem(n=2, n1=2, W=chain.W,
                          P=lambda v: np.zeros_like(np.asarray(v, dtype=float)),
                          B=lambda v: np.zeros(np.asarray(v).shape[:-1] + (4, 4)))
    init = CartesianState(np.array([0.9, 0.0, 0.4, 0.7]))
    cfg = IntegratorConfig(step=1e-3, horizon=10.0, seed=0)
    res = simulate_birkhoff_ensemble(free, 1e-2, init, cfg, 1, store="last")
    drift = np.abs(actions_of(res.final_states()[0]) - actions_of(init.v))
    assert np.max(drift) <= 1e-8


def test_chain_rejects_degenerate_noise(profiles):
    with pytest.raises(DomainError, match="degenerate"):
        build_oscillator_chain(profiles["quartic"], 2,
                               coupling=lambda l, m_, r: -m_,
                               noise=np.zeros((4, 4)))
    with pytest.raises(DomainError):
        build_oscillator_chain(profiles["quartic"], 0,
                               coupling=lambda l, m_, r: -m_, noise=np.eye(0))


def test_uncoupled_chain_blocks_are_independent(profiles):
    chain = build_oscillator_chain(
        profiles["quartic"], 2,
        coupling=lambda l, m_, r: -m_,     # no neighbour terms
        noise=np.eye(4))
    init = CartesianState(np.array([1.2, 0.0, 1.2, 0.0]))
    cfg = IntegratorConfig(step=2e-3, horizon=1.0, seed=6)
    res = simulate_birkhoff_ensemble(chain, 5e-2, init, cfg, 1500, store="last")
    acts = actions_of(res.final_states())          # (B, 2)
    shuffled = acts.copy()
    rng = np.random.default_rng(0)
    shuffled[:, 1] = shuffled[rng.permutation(acts.shape[0]), 1]
    joint = EmpiricalMeasure.from_samples(acts)
    product = EmpiricalMeasure.from_samples(shuffled)
    rep = bl_distance_sliced(joint, product, n_slices=24, seed=1)
    # joint law ~ product of marginals: distance at resampling-noise level
    assert rep.value <= 0.05


def test_anosov_probe_for_chain_frequencies(profiles):
    from slowfast.averaging import anosov_probe
    prof = profiles["quartic"]
    I_max = float(prof.actions[-1])
    freq = lambda I: prof.omega(np.clip(I, 0.0, I_max))
    hits = anosov_probe(freq, 2, draws=100_000, k_max=5, radius=I_max,
                        seed=2, nonneg=True)
    assert hits == 0
