import json

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from slowfast.errors import DomainError, SupportCapError
from slowfast.measures import (DistanceReport, EmpiricalMeasure, _bl_line,
                               _line_flow_value, _merge_line, _scan_alpha,
                               bl_distance, bl_distance_exact,
                               bl_distance_sliced, bl_inner_value_lp,
                               convergence_curve, kantorovich_1d,
                               load_samples_csv, report_to_json,
                               save_samples_csv, uniform_in_time_sup)


def delta(x):
    return EmpiricalMeasure.from_samples(np.array([[float(x)]]))


def lp_oracle_bl(points, c):
    """Full-scan dual-Lipschitz value with the dense LP as the inner solver."""
    return _scan_alpha(lambda a: bl_inner_value_lp(points, c, a))


# ---------------------------------------------------------------------------
# the exact 1-D inner solve against the dense LP


@given(st.integers(1, 12), st.integers(0, 10_000),
       st.floats(0.01, 0.99), st.booleans())
@settings(max_examples=80, deadline=None)
def test_inner_solve_matches_lp(m, seed, alpha, balanced):
    rng = np.random.default_rng(seed)
    xs = np.unique(np.round(np.sort(rng.uniform(-3, 3, m)), 4))
    cs = rng.uniform(-1, 1, xs.size)
    if balanced and xs.size > 1:
        cs -= cs.mean()
    v_dp = _line_flow_value(xs, cs, alpha, 1.0 - alpha)
    v_lp = bl_inner_value_lp(xs, cs, alpha)
    assert abs(v_dp - v_lp) <= 1e-8 * max(1.0, abs(v_lp))


def test_inner_solve_budget_endpoints():
    xs = np.array([0.0, 1.0, 2.5])
    cs = np.array([0.5, -1.0, 0.5])
    assert _line_flow_value(xs, cs, 0.0, 1.0) == 0.0          # constant f only
    assert _line_flow_value(xs, cs, 1.0, 0.0) == 0.0          # zero box


def test_point_mass_closed_form():
    for x in (0.5, 2.0, 6.0, 11.0):
        rep = bl_distance_exact(delta(0.0), delta(x))
        assert rep.value == pytest.approx(2 * x / (x + 2), abs=1e-9)
        assert rep.method == "chain-1d" and rep.bound_kind == "exact"


def test_identical_measures_are_at_zero_distance(rng):
    pts = rng.standard_normal((40, 1))
    mu = EmpiricalMeasure.from_samples(pts)
    assert bl_distance_exact(mu, mu).value <= 1e-12
    w = rng.uniform(0.5, 1.0, 40)
    muw = EmpiricalMeasure.from_samples(pts, w)
    assert bl_distance_exact(muw, muw).value <= 1e-12


@given(st.integers(0, 5_000))
@settings(max_examples=25, deadline=None)
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    mus = [EmpiricalMeasure.from_samples(rng.standard_normal((rng.integers(2, 10), 1)))
           for _ in range(3)]
    d01 = bl_distance_exact(mus[0], mus[1]).value
    d10 = bl_distance_exact(mus[1], mus[0]).value
    assert abs(d01 - d10) <= 1e-12
    d02 = bl_distance_exact(mus[0], mus[2]).value
    d12 = bl_distance_exact(mus[1], mus[2]).value
    assert d02 <= d01 + d12 + 1e-9
    assert d01 >= 0.0


def test_distinct_supports_have_positive_distance():
    assert bl_distance_exact(delta(0.0), delta(1e-3)).value > 1e-5


@given(st.integers(0, 5_000))
@settings(max_examples=25, deadline=None)
def test_bl_below_kantorovich_and_two(seed):
    rng = np.random.default_rng(seed)
    mu = EmpiricalMeasure.from_samples(rng.standard_normal((8, 1)) * rng.uniform(0.5, 4))
    nu = EmpiricalMeasure.from_samples(rng.standard_normal((6, 1)) + rng.uniform(-4, 4))
    bl = bl_distance_exact(mu, nu).value
    w1 = kantorovich_1d(mu, nu)
    assert bl <= min(w1, 2.0) + 1e-9


def test_kantorovich_examples():
    assert kantorovich_1d(delta(0.0), delta(3.5)) == pytest.approx(3.5)
    mu = EmpiricalMeasure.from_samples(np.array([[0.0], [1.0]]))
    nu = EmpiricalMeasure.from_samples(np.array([[0.0], [2.0]]))
    assert kantorovich_1d(mu, nu) == pytest.approx(0.5)
    assert kantorovich_1d(mu, mu) == 0.0
    with pytest.raises(DomainError):
        kantorovich_1d(EmpiricalMeasure.from_samples(np.zeros((3, 2))), mu)


def test_sliced_equals_exact_in_one_dimension(rng):
    mu = EmpiricalMeasure.from_samples(rng.standard_normal((50, 1)))
    nu = EmpiricalMeasure.from_samples(rng.standard_normal((50, 1)) + 0.7)
    exact = bl_distance_exact(mu, nu)
    sliced = bl_distance_sliced(mu, nu, n_slices=32, seed=5)
    assert sliced.value == pytest.approx(exact.value, abs=1e-12)
    assert sliced.n_slices == 1 and sliced.bound_kind == "lower-estimate"


def test_sliced_lower_bounds_exact_in_2d(rng):
    mu = EmpiricalMeasure.from_samples(rng.standard_normal((32, 2)))
    nu = EmpiricalMeasure.from_samples(rng.standard_normal((32, 2)) + [0.8, 0.0])
    exact = bl_distance_exact(mu, nu)
    assert exact.method == "exact-lp"
    sliced = bl_distance_sliced(mu, nu, n_slices=48, seed=2)
    assert sliced.value <= exact.value + 1e-9
    assert sliced.value >= 0.5 * exact.value   # measured gap stays moderate
    assert sliced.ci_half_width > 0.0


def test_support_cap_error(rng):
    mu = EmpiricalMeasure.from_samples(rng.standard_normal((60, 2)))
    nu = EmpiricalMeasure.from_samples(rng.standard_normal((60, 2)))
    with pytest.raises(SupportCapError, match="sliced"):
        bl_distance_exact(mu, nu, support_cap=100)
    rep = bl_distance(mu, nu, support_cap=100, n_slices=8, seed=0)
    assert rep.method == "sliced"


def test_dimension_mismatch():
    with pytest.raises(DomainError):
        bl_distance_exact(delta(0.0), EmpiricalMeasure.from_samples(np.zeros((2, 2))))


def test_merge_line_accumulates_duplicates():
    xs, cs = _merge_line(np.array([1.0, 0.0, 1.0]), np.array([0.25, 0.5, 0.25]))
    assert np.allclose(xs, [0.0, 1.0])
    assert np.allclose(cs, [0.5, 0.5])


def test_weighted_distance_matches_replicated_samples(rng):
    # integer-weighted atoms against the same cloud written as repeats
    xs = rng.standard_normal(5)
    mu_w = EmpiricalMeasure.from_samples(xs.reshape(-1, 1),
                                         np.array([1, 2, 1, 3, 1], dtype=float))
    mu_rep = EmpiricalMeasure.from_samples(np.repeat(xs, [1, 2, 1, 3, 1]).reshape(-1, 1))
    nu = EmpiricalMeasure.from_samples(rng.standard_normal((6, 1)))
    a = bl_distance_exact(mu_w, nu).value
    b = bl_distance_exact(mu_rep, nu).value
    assert a == pytest.approx(b, abs=1e-12)


def test_measure_validation():
    with pytest.raises(DomainError):
        EmpiricalMeasure.from_samples(np.array([[np.inf]]))
    with pytest.raises(DomainError):
        EmpiricalMeasure.from_samples(np.zeros((2, 1)), np.array([-0.5, 1.5]))
    m = EmpiricalMeasure.from_samples(np.zeros((4, 1)), np.array([1.0, 1.0, 1.0, 1.0]))
    assert m.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_report_bounds_and_json():
    rep = bl_distance_exact(delta(0.0), delta(100.0))
    assert 0.0 <= rep.value <= 2.0
    data = json.loads(report_to_json(rep))
    assert data["method"] == "chain-1d"


def test_csv_round_trip(tmp_path, rng):
    m = EmpiricalMeasure.from_samples(rng.standard_normal((12, 3)),
                                      rng.uniform(0.1, 1.0, 12))
    p = tmp_path / "cloud.csv"
    save_samples_csv(p, m, with_weights=True)
    back = load_samples_csv(p, weight_column=True)
    assert np.allclose(back.samples, m.samples)
    assert np.allclose(back.weights, m.weights)
    save_samples_csv(tmp_path / "plain.csv", m)
    plain = load_samples_csv(tmp_path / "plain.csv")
    assert plain.dim == 3 and np.allclose(plain.weights, 1.0 / 12)


def test_convergence_curve_reference_against_itself(rng):
    ref = EmpiricalMeasure.from_samples(rng.standard_normal((200, 1)))
    fam = {0.1: ref, 0.01: ref}
    pts = convergence_curve(fam, ref, support_cap=1000)
    assert [p.eps for p in pts] == [0.1, 0.01]
    assert all(p.report.value <= 1e-12 for p in pts)


def test_uniform_in_time_sup_and_grid_mismatch(rng):
    ref = {0.5: EmpiricalMeasure.from_samples(rng.standard_normal((50, 1))),
           1.0: EmpiricalMeasure.from_samples(rng.standard_normal((50, 1)))}
    laws = {(t, e): EmpiricalMeasure.from_samples(rng.standard_normal((50, 1)) + e)
            for t in (0.5, 1.0) for e in (0.1, 0.01)}
    out = uniform_in_time_sup(laws, ref, support_cap=500)
    assert [e.eps for e in out] == [0.1, 0.01]
    for entry in out:
        assert entry.sup_value == pytest.approx(max(r.value for _, r in entry.rows))
    with pytest.raises(DomainError):
        uniform_in_time_sup({(0.5, 0.1): ref[0.5]}, ref)


def test_1d_lp_oracle_full_scan_agreement(rng):
    # independent oracle: identical alpha scan, dense-LP inner solve
    for _ in range(4):
        m1, m2 = rng.integers(3, 12, 2)
        mu = EmpiricalMeasure.from_samples(rng.standard_normal((m1, 1)))
        nu = EmpiricalMeasure.from_samples(rng.standard_normal((m2, 1)) + 0.5)
        xs, cs = _merge_line(np.concatenate([mu.samples[:, 0], nu.samples[:, 0]]),
                             np.concatenate([mu.weights, -nu.weights]))
        assert _bl_line(xs, cs) == pytest.approx(lp_oracle_bl(xs, cs), abs=1e-8)
