import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
import hypothesis.strategies as st

from slowfast.averaging import (AveragedModel, anosov_probe, average_over_torus,
                                averaged_diffusion, averaged_drift, ball_volume,
                                default_quadrature, flow_time_average,
                                principal_sqrt, rank1_lattice,
                                resonant_set_measure, tensor_trapezoid)
from slowfast.builtins import make_rotator
from slowfast.errors import DomainError
from slowfast.models import TorusSystem
from tests.conftest import random_spd


def constant_theta(values):
    arr = np.asarray(values, dtype=float)

    def theta(I):
        I = np.asarray(I, dtype=float)
        return np.broadcast_to(arr, I.shape[:-1] + arr.shape).copy()

    return theta


def simple_torus(theta, driftI, d=1, n=1):
    zero_mat = lambda shape_src, rows: (
        lambda I, phi: np.zeros(np.asarray(I).shape[:-1] + (rows, 1)))
    return TorusSystem(
        d=d, n=n, d1=1, theta=theta, driftI=driftI,
        driftPhi=lambda I, phi: np.zeros_like(np.asarray(phi, dtype=float)),
        dispI=lambda I, phi: np.broadcast_to(np.eye(d, 1),
                                             np.asarray(I).shape + (1,)).copy(),
        dispPhi=lambda I, phi: np.zeros(np.asarray(phi).shape + (1,)))


# ---------------------------------------------------------------------------
# quadrature


def test_weights_sum_and_node_range():
    for q in (tensor_trapezoid(2, 9), rank1_lattice(3, 512), default_quadrature(5)):
        assert abs(q.weights.sum() - 1.0) <= 1e-14
        assert q.nodes.min() >= 0.0 and q.nodes.max() < 2 * np.pi
    assert default_quadrature(2).kind == "tensor-trapezoid"
    assert default_quadrature(4).kind == "rank1-lattice"


@given(st.integers(1, 31), st.floats(0, 6.0))
@settings(max_examples=30, deadline=None)
def test_trapezoid_kills_pure_harmonics(k, shift):
    q = tensor_trapezoid(1, 32)
    val = average_over_torus(lambda phi: np.cos(k * phi[:, 0] + shift), q)
    assert abs(val) <= 1e-12


def test_trapezoid_exactness_in_two_dims():
    q = tensor_trapezoid(2, 8)
    val = average_over_torus(
        lambda phi: np.sin(3 * phi[:, 0]) * np.cos(5 * phi[:, 1]) + 2.0, q)
    assert val == pytest.approx(2.0, abs=1e-13)


def test_average_examples():
    q = tensor_trapezoid(1, 64)
    assert abs(average_over_torus(lambda p: np.sin(p[:, 0]), q)) <= 1e-14
    assert average_over_torus(lambda p: np.full(p.shape[0], 3.25), q) == pytest.approx(3.25)
    got = average_over_torus(lambda p: 2.0 + np.cos(p[:, 0]) ** 2, q)
    assert got == pytest.approx(2.5, abs=1e-13)


def test_average_scalar_fallback():
    q = tensor_trapezoid(1, 16)

    def integrand(p):
        # non-vectorized: only accepts a single angle vector
        if np.asarray(p).ndim != 1:
            raise TypeError("scalar integrand")
        return float(np.cos(p[0]) ** 2)

    assert average_over_torus(integrand, q) == pytest.approx(0.5, abs=1e-13)


def test_lattice_integrates_smooth_functions():
    q = rank1_lattice(4, 4096)
    val = average_over_torus(
        lambda p: np.cos(p[:, 0]) * np.cos(p[:, 1]) + np.sin(p[:, 2] + p[:, 3]), q)
    assert abs(val) < 5e-3


# ---------------------------------------------------------------------------
# averaged coefficients


def test_averaged_drift_examples():
    q = tensor_trapezoid(1, 64)
    sys_id = simple_torus(constant_theta([1.0]),
                          lambda I, phi: np.asarray(I, dtype=float))
    I = np.array([1.7])
    assert averaged_drift(sys_id, I, q) == pytest.approx([1.7])

    sys_odd = simple_torus(constant_theta([1.0]),
                           lambda I, phi: np.sin(phi) * (1 + I ** 2))
    assert abs(averaged_drift(sys_odd, I, q)[0]) <= 1e-14

    sys_mix = simple_torus(constant_theta([1.0]),
                           lambda I, phi: (2.0 + np.cos(phi) ** 2) * I)
    assert averaged_drift(sys_mix, I, q)[0] == pytest.approx(2.5 * 1.7, abs=1e-12)


def test_averaged_diffusion_examples():
    q = tensor_trapezoid(1, 64)

    def disp_id(I, phi):
        I = np.asarray(I, dtype=float)
        out = np.zeros(I.shape[:-1] + (2, 1))
        out[..., 0, 0] = 1.0
        out[..., 1, 0] = 1.0
        return out

    # 2x2 diagonal with angle-modulated first entry
    def disp_mod(I, phi):
        I = np.asarray(I, dtype=float)
        out = np.zeros(I.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0 + 0.5 * np.sin(phi[..., 0])
        out[..., 1, 1] = 1.0
        return out

    sys2 = TorusSystem(d=2, n=1, d1=2, theta=constant_theta([1.0]),
                       driftI=lambda I, phi: np.zeros_like(np.asarray(I, dtype=float)),
                       driftPhi=lambda I, phi: np.zeros_like(np.asarray(phi, dtype=float)),
                       dispI=disp_mod,
                       dispPhi=lambda I, phi: np.zeros(np.asarray(phi).shape + (2,)))
    a = averaged_diffusion(sys2, np.array([0.5, 0.5]), q)
    assert np.allclose(a, np.diag([1.125, 1.0]), atol=1e-12)

    sys1 = simple_torus(constant_theta([1.0]), lambda I, phi: np.zeros_like(I))
    sys1 = TorusSystem(d=1, n=1, d1=1, theta=constant_theta([1.0]),
                       driftI=sys1.driftI, driftPhi=sys1.driftPhi,
                       dispI=lambda I, phi: np.full(np.asarray(I).shape + (1,), 0.7),
                       dispPhi=sys1.dispPhi)
    a1 = averaged_diffusion(sys1, np.array([1.0]), q)
    assert a1[0, 0] == pytest.approx(0.49, abs=1e-13)


def test_rotation_consistency_of_averages():
    # shifting the angle argument leaves torus averages unchanged
    q = tensor_trapezoid(1, 64)
    shift = 1.234

    def drift_a(I, phi):
        return (2.0 + np.cos(phi) ** 2) * I

    def drift_b(I, phi):
        return (2.0 + np.cos(phi + shift) ** 2) * I

    I = np.array([0.9])
    a = averaged_drift(simple_torus(constant_theta([1.0]), drift_a), I, q)
    b = averaged_drift(simple_torus(constant_theta([1.0]), drift_b), I, q)
    assert a[0] == pytest.approx(b[0], abs=1e-12)


# ---------------------------------------------------------------------------
# principal square root


def test_principal_sqrt_examples():
    assert np.allclose(principal_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(principal_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


@given(st.integers(1, 8), st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_principal_sqrt_against_schur_oracle(dim, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, dim)
    K = principal_sqrt(A)
    assert np.max(np.abs(K - K.T)) <= 1e-12 * max(1.0, np.max(np.abs(K)))
    assert np.max(np.abs(K @ K - A)) <= 1e-10 * max(1.0, np.max(np.abs(A)))
    oracle = np.real(scipy.linalg.sqrtm(A))
    assert np.max(np.abs(K - oracle)) <= 1e-8 * max(1.0, np.max(np.abs(oracle)))


def test_principal_sqrt_errors():
    with pytest.raises(DomainError):
        principal_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(DomainError):
        principal_sqrt(np.diag([1.0, -0.5]))
    # slightly negative eigenvalues are clamped to zero
    val = principal_sqrt(np.diag([1.0, -1e-14]))
    assert val[1, 1] == 0.0


def test_averaged_model_root_identity():
    rot = make_rotator()
    model = AveragedModel(rot, tensor_trapezoid(1, 32))
    assert model.self_check(np.array([0.8])) <= 1e-10
    k = model.dispersion(np.array([0.8]))
    assert np.allclose(k @ k, model.diffusion(np.array([0.8])), atol=1e-12)


# ---------------------------------------------------------------------------
# flow-time averages and resonance diagnostics


def test_flow_average_constant_drift():
    sys_c = simple_torus(constant_theta([1.3]),
                         lambda I, phi: np.full_like(np.asarray(I, dtype=float), 0.77))
    for N in (1.0, 17.0):
        v = flow_time_average(sys_c, np.array([0.4]), np.array([0.2]), N)
        assert v[0] == pytest.approx(0.77, abs=1e-12)


def test_flow_average_antiderivative_bound():
    th = np.sqrt(2.0)
    sys_cos = simple_torus(constant_theta([th]),
                           lambda I, phi: np.cos(phi))
    for N in (25.0, 100.0, 400.0):
        v = flow_time_average(sys_cos, np.array([1.0]), np.array([0.3]), N)
        assert abs(v[0]) <= 2.0 / (N * th) + 1e-12


def test_flow_average_converges_to_torus_average():
    # two-angle rotator with irrational frequency ratio
    def drift(I, phi):
        return (2.0 + np.sin(phi[..., :1]) * np.cos(phi[..., 1:2])) * I

    sys2 = TorusSystem(d=1, n=2, d1=1, theta=constant_theta([1.0, np.sqrt(2.0)]),
                       driftI=drift,
                       driftPhi=lambda I, phi: np.zeros_like(np.asarray(phi, dtype=float)),
                       dispI=lambda I, phi: np.ones(np.asarray(I).shape + (1,)),
                       dispPhi=lambda I, phi: np.zeros(np.asarray(phi).shape + (1,)))
    I = np.array([1.0])
    target = averaged_drift(sys2, I, tensor_trapezoid(2, 48))
    errs = []
    for N in (10.0, 1000.0):
        v = flow_time_average(sys2, I, np.array([0.4, 2.0]), N)
        errs.append(abs(v[0] - target[0]))
    assert errs[1] < 1e-2
    assert errs[1] < errs[0]


def test_resonant_set_fully_resonant_case():
    sys_frozen = simple_torus(constant_theta([0.0]), lambda I, phi: np.cos(phi))
    diag = resonant_set_measure(sys_frozen, N=50.0, delta=0.5, R=1.5,
                                samples=60, seed=4)
    assert diag.estimate == pytest.approx(ball_volume(1, 1.5), rel=1e-12)
    assert diag.hit_fraction == 1.0


def test_resonant_set_nonresonant_decay():
    sys_good = simple_torus(constant_theta([np.sqrt(2.0)]), lambda I, phi: np.cos(phi))
    small_N = resonant_set_measure(sys_good, N=5.0, delta=0.05, R=1.5,
                                   samples=40, seed=4)
    large_N = resonant_set_measure(sys_good, N=500.0, delta=0.05, R=1.5,
                                   samples=40, seed=4)
    assert large_N.estimate == 0.0
    assert large_N.estimate <= small_N.estimate + small_N.half_width


def test_resonance_requires_samples():
    sys_good = simple_torus(constant_theta([1.0]), lambda I, phi: np.cos(phi))
    with pytest.raises(DomainError):
        resonant_set_measure(sys_good, 10.0, 0.1, 1.0, samples=0)


def test_anosov_probe_on_builtin_frequencies():
    rot = make_rotator()
    hits = anosov_probe(rot.theta, 1, draws=20_000, k_max=5, seed=1)
    assert hits == 0
