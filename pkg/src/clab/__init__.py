"""Numerical laboratory for boundary observation of reaction-diffusion
systems on annular domains: implicit forward solvers, degenerate exponential
weight machinery, outer-boundary observation algebra, positivity predicates,
and empirical stability-constant estimation.
"""

__version__ = "0.1.0"

from .errors import (ClabError, ClassEmpty, CompatibilityViolated, ConfigParse,
                     DegenerateResolution, EllipticityViolated, EmptyCorpus,
                     FlowEscape, Io, NewtonDivergence, NoAdmissibleMu,
                     NonPositiveRadius, NonSymmetricDiffusion, OverflowGuard,
                     ProjectionFailure, RejectionExhausted, ShapeMismatch,
                     SingularRecovery, SolverDivergence, VanishingGradient,
                     WeightGridMismatch, ZeroObservation)
from .geometry import (PolarGrid, Psi0Field, ShiftChoice, WeightBoundReport,
                       WeightFields, WeightParams, build_polar_grid,
                       check_weight_time_bounds, choose_shift_K,
                       construct_psi0_flow, construct_psi0_radial,
                       eval_weights, exponentiate_for_subharmonicity,
                       gradient, laplacian_A, make_weight_params)
from .pde import (DiffusionField, LinearPropagator, LinearizedSystem,
                  NonlinearityModel, SourceField, StateField,
                  SystemCoefficients, assemble_operator, linearize_semilinear,
                  make_coefficients, norm_L1_Q, norm_L2_Q,
                  solve_forward_linear, solve_forward_semilinear,
                  with_coupling)
from .observe import (BoundaryTrace, ObservationSeries, ObservationSpec,
                      RecoveredTrace, apply_observation, check_compatibility,
                      extract_trace_and_conormal, norm_L2_Sigma1,
                      norm_weighted_Sigma, recover_trace_from_observation)
from .carleman import CarlemanReport, ScanResult, eval_carleman_sides, scan_parameters
from .positivity import (PositivityReport, SignCheckResult,
                         check_sign_hypotheses, run_positivity_check,
                         run_positivity_improving_check)
from .stability import (SourceClassSpec, StabilityReport, adversarial_search,
                        add_observation_noise, estimate_constant,
                        evaluate_source_params, k_min, sample_source_Gk,
                        stability_ratio)
from .presets import advection, coupled2, get_preset, heat
from .manufactured import (manufactured_forcing, manufactured_state,
                           spatial_convergence_study,
                           temporal_convergence_study)
