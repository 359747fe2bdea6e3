"""Scenario configuration, experiment drivers, and report emission.

Each experiment simulates perturbed systems across an eps grid, builds the
matching averaged or effective reference with an independent seed on the
same time grid, and reports empirical-law distances with their estimator
metadata.  Output files are bitwise reproducible for a fixed config and
seed; wall-clock timing is therefore reported on stdout only.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .averaging import AveragedModel, default_quadrature, resonant_set_measure, tensor_trapezoid
from .builtins import CATALOG, build_system, list_builtins
from .effective import EffectiveModel
from .engine import (IntegratorConfig, StoppingRule, simulate_averaged_ensemble,
                     simulate_birkhoff_ensemble, simulate_effective_ensemble,
                     simulate_torus_ensemble)
from .errors import ConfigError, DomainError, IntegrationError
from .lifting import (companion_drift_magnitudes, exit_time_experiment,
                      lifted_companion, occupation_fraction)
from .measures import DistanceReport, EmpiricalMeasure, bl_distance
from .models import (ActionAngleState, CartesianState, actions_of,
                     cartesian_from_aa, eps_value)

EXPERIMENTS = ("averaging-convergence", "stationary-mixing", "uniform-in-time",
               "exit-time", "lifting-diagnostic", "resonance-scan",
               "normal-form-build")

_REF_SEED_OFFSET = 10_000_019


@dataclass
class ScenarioConfig:
    experiment: str
    system: str
    system_params: dict = field(default_factory=dict)
    eps_grid: List[float] = field(default_factory=lambda: [1e-1, 1e-2, 1e-3])
    horizon: float = 1.0
    n_paths: int = 1000
    step: float = 1e-3
    seed: int = 0
    out_dir: str = "out"
    quadrature_points: int = 64
    boundary_policy: str = "clamp-at-zero"
    init_actions: List[float] = field(default_factory=lambda: [1.0])
    init_angles: Optional[List[float]] = None
    n_slices: int = 128
    support_cap: int = 512
    parallelism: int = 1
    extra: dict = field(default_factory=dict)

    def validate(self) -> "ScenarioConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"known: {', '.join(EXPERIMENTS)}")
        if self.experiment == "normal-form-build":
            from .normal_form import SHIPPED_HAMILTONIANS
            name = self.extra.get("hamiltonian", self.system)
            if name not in SHIPPED_HAMILTONIANS:
                raise ConfigError(f"unknown hamiltonian {name!r}")
        elif self.system not in CATALOG:
            raise ConfigError(f"unknown builtin system {self.system!r}; "
                              f"known: {', '.join(sorted(CATALOG))}")
        if not self.eps_grid or any(not (0 < e <= 1) for e in self.eps_grid):
            raise ConfigError("eps_grid entries must lie in (0, 1]")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.step <= 0 or self.horizon < 0:
            raise ConfigError("step must be positive and horizon nonnegative")
        if self.quadrature_points < 2:
            raise ConfigError("need at least 2 quadrature points per angle")
        return self

    def to_dict(self) -> dict:
        # parallelism is an execution knob: outputs are bitwise identical for
        # any worker count, so it stays out of the echoed config and its hash
        data = asdict(self)
        data.pop("parallelism", None)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    @classmethod
    def from_toml(cls, path: str) -> "ScenarioConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class ExperimentReport:
    scenario: dict
    config_hash: str
    rows: List[dict]
    series: Dict[str, List[dict]]
    n_paths: int
    wall_clock_s: float
    outputs: List[str]


def config_hash(cfg: ScenarioConfig) -> str:
    text = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# shared helpers


def _integrator(cfg: ScenarioConfig, seed: int,
                scheme: str = "rotation-split-em") -> IntegratorConfig:
    return IntegratorConfig(step=cfg.step, horizon=cfg.horizon, scheme=scheme,
                            boundary_policy=cfg.boundary_policy, seed=seed)


def _system_and_kind(cfg: ScenarioConfig):
    spec = CATALOG[cfg.system]
    return build_system(cfg.system, cfg.system_params), spec.kind


def _init_state(cfg: ScenarioConfig, kind: str, dim_act: int, dim_ang: int):
    I0 = np.asarray(cfg.init_actions, dtype=float)
    if I0.size == 1 and dim_act > 1:
        I0 = np.full(dim_act, float(I0[0]))
    if I0.shape != (dim_act,):
        raise ConfigError(f"init_actions must have {dim_act} entries")
    phi0 = np.zeros(dim_ang) if cfg.init_angles is None else np.asarray(cfg.init_angles, dtype=float)
    if phi0.shape != (dim_ang,):
        raise ConfigError(f"init_angles must have {dim_ang} entries")
    if kind == "torus":
        return ActionAngleState(I0, phi0)
    return CartesianState(cartesian_from_aa(I0, phi0))


def _checkpoints(cfg: ScenarioConfig, count: int) -> np.ndarray:
    n_steps = int(round(cfg.horizon / cfg.step))
    return np.unique(np.linspace(0, n_steps, count + 1).astype(int))[1:]


def _action_samples(kind: str, states: np.ndarray, d: int) -> np.ndarray:
    """Action marginals of perturbed-system states."""
    if kind == "torus":
        return states[..., :d]
    return actions_of(states)


def _ref_action_samples(kind: str, states: np.ndarray) -> np.ndarray:
    """Action marginals of reference (averaged/effective) states."""
    if kind == "torus":
        return states          # averaged model evolves the actions directly
    return actions_of(states)


def _measure(samples: np.ndarray) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_samples(samples)


def _distance(cfg: ScenarioConfig, a: EmpiricalMeasure, b: EmpiricalMeasure) -> DistanceReport:
    return bl_distance(a, b, support_cap=cfg.support_cap,
                       n_slices=cfg.n_slices, seed=cfg.seed + 97)


def _simulate_eps(cfg: ScenarioConfig, system, kind, init, eps, store, stop=None):
    icfg = _integrator(cfg, cfg.seed)
    if kind == "torus":
        return simulate_torus_ensemble(system, eps, init, icfg, cfg.n_paths,
                                       stop, store, cfg.parallelism)
    return simulate_birkhoff_ensemble(system, eps, init, icfg, cfg.n_paths,
                                      stop, store, cfg.parallelism)


def _simulate_reference(cfg: ScenarioConfig, system, kind, init, store, stop=None):
    quad = tensor_trapezoid(system.n, cfg.quadrature_points)
    icfg = _integrator(cfg, cfg.seed + _REF_SEED_OFFSET, scheme="euler-maruyama")
    if kind == "torus":
        model = AveragedModel(system, quad)
        I0 = init.I
        return simulate_averaged_ensemble(model, I0, icfg, cfg.n_paths, stop,
                                          store, cfg.parallelism)
    model = EffectiveModel(system, quad)
    return simulate_effective_ensemble(model, init, icfg, cfg.n_paths, stop,
                                       store, cfg.parallelism)


# ---------------------------------------------------------------------------
# experiments


def _run_averaging_convergence(cfg: ScenarioConfig):
    system, kind = _system_and_kind(cfg)
    d = system.d if kind == "torus" else system.n
    init = _init_state(cfg, kind, d, system.n)
    marks = _checkpoints(cfg, int(cfg.extra.get("checkpoints", 4)))
    store = np.concatenate([[0], marks])

    ref = _simulate_reference(cfg, system, kind, init, store)
    ref_actions = [_ref_action_samples(kind, ref.states[:, j, :])
                   for j in range(1, store.size)]

    rows, series = [], {"distance_vs_tau": []}
    for eps in sorted(cfg.eps_grid, reverse=True):
        res = _simulate_eps(cfg, system, kind, init, eps, store)
        for j in range(1, store.size):
            tau = float(store[j] * cfg.step)
            law = _measure(_action_samples(kind, res.states[:, j, :], d))
            rep = _distance(cfg, law, _measure(ref_actions[j - 1]))
            row = {"eps": eps, "tau": tau, **rep.to_dict()}
            series["distance_vs_tau"].append(row)
            if j == store.size - 1:
                rows.append(row)
    return rows, series


def _run_stationary_mixing(cfg: ScenarioConfig):
    system, kind = _system_and_kind(cfg)
    d = system.d if kind == "torus" else system.n
    init = _init_state(cfg, kind, d, system.n)
    marks = _checkpoints(cfg, int(cfg.extra.get("checkpoints", 8)))
    store = np.concatenate([[0], marks])
    deltas = cfg.extra.get("locus_deltas", [0.4, 0.2, 0.1, 0.05])

    ref = _simulate_reference(cfg, system, kind, init, store)
    ref_final = _measure(_ref_action_samples(kind, ref.states[:, -1, :]))

    rows, series = [], {"distance_vs_tau": [], "locus_occupation": []}
    for eps in sorted(cfg.eps_grid, reverse=True):
        res = _simulate_eps(cfg, system, kind, init, eps, store)
        for j in range(1, store.size):
            tau = float(store[j] * cfg.step)
            law = _measure(_action_samples(kind, res.states[:, j, :], d))
            rep = _distance(cfg, law, ref_final)
            row = {"eps": eps, "tau": tau, **rep.to_dict()}
            series["distance_vs_tau"].append(row)
            if j == store.size - 1:
                rows.append(row)
        for delta in deltas:
            occ = occupation_fraction(
                res, lambda s, dl=delta: np.min(_action_samples(kind, s, d), axis=-1) <= dl)
            series["locus_occupation"].append(
                {"eps": eps, "delta": delta, "occupation": occ.value,
                 "ci_half_width": occ.half_width})
    return rows, series


def _run_uniform_in_time(cfg: ScenarioConfig):
    system, kind = _system_and_kind(cfg)
    d = system.d if kind == "torus" else system.n
    init = _init_state(cfg, kind, d, system.n)
    marks = _checkpoints(cfg, int(cfg.extra.get("checkpoints", 12)))
    store = np.concatenate([[0], marks])

    ref = _simulate_reference(cfg, system, kind, init, store)
    ref_laws = [_measure(_ref_action_samples(kind, ref.states[:, j, :]))
                for j in range(1, store.size)]

    rows, series = [], {"distance_vs_tau": []}
    for eps in sorted(cfg.eps_grid, reverse=True):
        res = _simulate_eps(cfg, system, kind, init, eps, store)
        sup = 0.0
        for j in range(1, store.size):
            tau = float(store[j] * cfg.step)
            law = _measure(_action_samples(kind, res.states[:, j, :], d))
            rep = _distance(cfg, law, ref_laws[j - 1])
            sup = max(sup, rep.value)
            series["distance_vs_tau"].append({"eps": eps, "tau": tau, **rep.to_dict()})
        rows.append({"eps": eps, "tau": float(cfg.horizon), "value": sup,
                     "method": "sup-over-tau", "bound_kind": "lower-estimate",
                     "n_slices": cfg.n_slices, "ci_half_width": 0.0})
    return rows, series


def _run_exit_time(cfg: ScenarioConfig):
    system, kind = _system_and_kind(cfg)
    if kind != "birkhoff":
        raise ConfigError("exit-time experiment needs a Cartesian-type system")
    init = _init_state(cfg, kind, system.n, system.n)
    R = float(cfg.extra.get("radius", 2.0))
    sbar = float(cfg.extra.get("sbar", 0.3))
    quad = tensor_trapezoid(system.n, cfg.quadrature_points)
    result = exit_time_experiment(system, sorted(cfg.eps_grid, reverse=True),
                                  init, R, _integrator(cfg, cfg.seed),
                                  cfg.n_paths, quad, cfg.seed,
                                  int(cfg.extra.get("checkpoints", 33)),
                                  cfg.parallelism)
    ref_law = _measure(result.reference.actions[:, -1, :])
    qs = np.linspace(0.0, 1.0, 21)

    rows, series = [], {"exit_time_quantiles": []}
    for entry in result.per_eps + [result.reference]:
        label = entry.eps if entry.eps > 0 else 0.0
        quant = np.quantile(entry.exit_times, qs)
        for q, v in zip(qs, quant):
            series["exit_time_quantiles"].append(
                {"eps": label, "quantile": float(q), "exit_time": float(v)})
        early = float(np.mean(entry.exit_times < sbar))
        if entry.eps > 0:
            rep = _distance(cfg, _measure(entry.actions[:, -1, :]), ref_law)
            rows.append({"eps": entry.eps, "tau": float(cfg.horizon),
                         **rep.to_dict(), "early_exit_prob": early,
                         "sbar": sbar})
        else:
            rows.append({"eps": 0.0, "tau": float(cfg.horizon), "value": 0.0,
                         "method": "reference", "bound_kind": "exact",
                         "n_slices": None, "ci_half_width": 0.0,
                         "early_exit_prob": early, "sbar": sbar})
    return rows, series


def _run_lifting_diagnostic(cfg: ScenarioConfig):
    system, kind = _system_and_kind(cfg)
    if kind != "birkhoff":
        raise ConfigError("lifting-diagnostic needs a Cartesian-type system")
    init = _init_state(cfg, kind, system.n, system.n)
    delta = float(cfg.extra.get("delta", 0.25))
    block = int(cfg.extra.get("block", 0))
    fine_step = float(cfg.extra.get("fine_step", 1e-4))
    drift_paths = int(cfg.extra.get("drift_paths", 64))
    quantile = float(cfg.extra.get("drift_quantile", 0.99))

    from .engine import integrate_birkhoff_system

    rows, series = [], {"drift_magnitudes": []}
    for eps in sorted(cfg.eps_grid, reverse=True):
        fine_cfg = IntegratorConfig(fine_step, cfg.horizon, "rotation-split-em",
                                    cfg.boundary_policy, cfg.seed, 0)
        path = integrate_birkhoff_system(system, eps, init, fine_cfg)
        comp = lifted_companion(system, eps, path, block, delta)
        mismatch = comp.norm_mismatch(path)

        mags = []
        coarse = IntegratorConfig(cfg.step, cfg.horizon, "rotation-split-em",
                                  cfg.boundary_policy, cfg.seed, 0)
        for tid in range(drift_paths):
            p = integrate_birkhoff_system(
                system, eps, init,
                IntegratorConfig(cfg.step, cfg.horizon, "rotation-split-em",
                                 cfg.boundary_policy, cfg.seed, tid))
            c = lifted_companion(system, eps, p, block, delta)
            mags.append(companion_drift_magnitudes(system, eps, p, c))
        pooled = np.concatenate([m for m in mags if m.size]) if mags else np.array([0.0])
        bound = float(np.quantile(pooled, quantile)) if pooled.size else 0.0
        rows.append({"eps": eps, "norm_mismatch": mismatch,
                     "drift_bound": bound, "delta": delta,
                     "lambda_fraction": float(np.mean(comp.lambda_steps))})
        series["drift_magnitudes"].append(
            {"eps": eps, "q50": float(np.quantile(pooled, 0.5)),
             "q90": float(np.quantile(pooled, 0.9)), "q99": bound})
    return rows, series


def _run_resonance_scan(cfg: ScenarioConfig):
    system, kind = _system_and_kind(cfg)
    if kind != "torus":
        raise ConfigError("resonance-scan needs a torus-type system")
    N_grid = cfg.extra.get("N_grid", [10.0, 30.0, 100.0, 300.0])
    delta = float(cfg.extra.get("delta", 0.25))
    radius = float(cfg.extra.get("radius", 2.0))
    samples = int(cfg.extra.get("samples", 200))
    rows = []
    for N in N_grid:
        diag = resonant_set_measure(system, float(N), delta, radius, samples,
                                    seed=cfg.seed)
        rows.append({"N": float(N), "delta": delta, "radius": radius,
                     "estimate": diag.estimate, "ci_half_width": diag.half_width,
                     "hit_fraction": diag.hit_fraction, "samples": samples})
    return rows, {}


def _run_normal_form_build(cfg: ScenarioConfig):
    from .normal_form import SHIPPED_HAMILTONIANS, build_action_profile

    name = cfg.extra.get("hamiltonian", cfg.system)
    ham = SHIPPED_HAMILTONIANS[name]()
    a_lo = float(cfg.extra.get("a_lo", 0.02))
    a_hi = float(cfg.extra.get("a_hi", 3.0))
    levels = int(cfg.extra.get("levels", 160))
    grading = float(cfg.extra.get("grading", 2.2))
    u = np.linspace(0.0, 1.0, levels)
    grid = a_lo + (a_hi - a_lo) * u ** grading
    profile = build_action_profile(ham, grid)

    interior = np.linspace(profile.actions[2], profile.actions[-3], 64)
    cross = np.abs(profile.omega(interior) * (2 * np.pi / profile.omega_from_period(interior))
                   / (2 * np.pi) - 1.0)
    rows = [{"hamiltonian": name, "levels": levels,
             "action_min": float(profile.actions[0]),
             "action_max": float(profile.actions[-1]),
             "omega_period_crosscheck": float(np.max(cross))}]
    return rows, {"profile": [{"level": float(a), "action": float(i), "period": float(t)}
                              for a, i, t in zip(profile.levels, profile.actions,
                                                 profile.periods)]}, profile


# ---------------------------------------------------------------------------
# runner


def _write_csv(path: str, rows: List[dict]) -> None:
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in rows:
            w.writerow([repr(float(row.get(k))) if isinstance(row.get(k), float)
                        else row.get(k) for k in keys])


def run_scenario(cfg: ScenarioConfig, echo=print) -> ExperimentReport:
    """Execute one scenario and write its report files."""
    cfg.validate()
    t0 = time.perf_counter()
    profile = None
    if cfg.experiment == "averaging-convergence":
        rows, series = _run_averaging_convergence(cfg)
    elif cfg.experiment == "stationary-mixing":
        rows, series = _run_stationary_mixing(cfg)
    elif cfg.experiment == "uniform-in-time":
        rows, series = _run_uniform_in_time(cfg)
    elif cfg.experiment == "exit-time":
        rows, series = _run_exit_time(cfg)
    elif cfg.experiment == "lifting-diagnostic":
        rows, series = _run_lifting_diagnostic(cfg)
    elif cfg.experiment == "resonance-scan":
        rows, series = _run_resonance_scan(cfg)
    else:
        rows, series, profile = _run_normal_form_build(cfg)
    wall = time.perf_counter() - t0

    os.makedirs(cfg.out_dir, exist_ok=True)
    outputs = []
    dist_path = os.path.join(cfg.out_dir, "distances.csv")
    _write_csv(dist_path, rows)
    outputs.append(dist_path)
    if series:
        series_dir = os.path.join(cfg.out_dir, "series")
        os.makedirs(series_dir, exist_ok=True)
        for name, srows in series.items():
            p = os.path.join(series_dir, f"{name}.csv")
            _write_csv(p, srows)
            outputs.append(p)
    if profile is not None:
        p = os.path.join(cfg.out_dir, "profile.json")
        with open(p, "w") as fh:
            fh.write(profile.to_json())
        outputs.append(p)

    report = ExperimentReport(scenario=cfg.to_dict(), config_hash=config_hash(cfg),
                              rows=rows, series={k: len(v) for k, v in series.items()},
                              n_paths=cfg.n_paths, wall_clock_s=wall,
                              outputs=outputs)
    report_path = os.path.join(cfg.out_dir, "report.json")
    payload = {"scenario": report.scenario, "config_hash": report.config_hash,
               "package_version": __version__, "rows": report.rows,
               "series_row_counts": report.series, "n_paths": report.n_paths,
               "outputs": sorted(os.path.basename(p) for p in report.outputs)}
    with open(report_path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
    report.outputs.append(report_path)
    echo(f"{cfg.experiment}: {len(rows)} result rows -> {cfg.out_dir} "
         f"({wall:.1f}s wall clock; timing excluded from files)")
    return report
