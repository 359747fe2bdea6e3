"""slowfast: stochastic averaging of perturbed integrable systems.

Numerical kernels for torus-averaged and effective equations, a splitting
SDE engine with reproducible counter-based noise, empirical-measure metrics
(dual-Lipschitz, Kantorovich), a one-degree-of-freedom normal-form builder,
and a scenario CLI for convergence-in-law experiments.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DomainError, IntegrationError,
                     InternalError, SupportCapError)
from .models import (ActionAngleState, BirkhoffSystem, CartesianState,
                     Epsilon, TorusSystem, action_angle_of, actions_of,
                     angles_of, cartesian_of, min_action, planar_aligner,
                     torus_rotate)
from .averaging import (AveragedModel, ResonanceDiagnostic, TorusQuadrature,
                        average_over_torus, averaged_diffusion, averaged_drift,
                        default_quadrature, flow_time_average, principal_sqrt,
                        rank1_lattice, resonant_set_measure, tensor_trapezoid)
from .effective import (AveragedActionModel, EffectiveModel,
                        averaged_action_diffusion, averaged_action_drift,
                        check_action_consistency, check_equivariance,
                        effective_dispersion, effective_drift, effective_gram)
from .engine import (IntegratorConfig, PathEnsemble, SdePath, StoppingRule,
                     integrate_averaged_actions, integrate_birkhoff_system,
                     integrate_effective, integrate_torus_system, run_ensemble,
                     simulate_averaged_ensemble, simulate_birkhoff_ensemble,
                     simulate_effective_ensemble, simulate_torus_ensemble)
from .lifting import (LiftedCompanion, exit_time_experiment, lifted_companion,
                      occupation_fraction)
from .measures import (DistanceReport, EmpiricalMeasure, bl_distance,
                       bl_distance_exact, bl_distance_sliced,
                       convergence_curve, kantorovich_1d, load_samples_csv,
                       uniform_in_time_sup)
from .normal_form import (ActionAngleMap1D, ActionProfile, Hamiltonian1D,
                          action_of_level, aa_inverse_1dof, aa_transform_1dof,
                          build_action_profile, build_oscillator_chain)
from .builtins import CATALOG, build_system, list_builtins
from .scenarios import ExperimentReport, ScenarioConfig, run_scenario
