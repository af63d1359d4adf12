"""Online feedback optimization of LTI plants via primal-dual gradient flows.

The package closes projected primal-dual controllers around linear plants
whose steady-state maps define a time-varying convex tracking problem,
evaluates the sufficient gain conditions that certify exponential
tracking envelopes, and ships a ramp-metering case study where the same
controller meters a nonlinear cell-transmission network against a local
integral law and a receding-horizon baseline.
"""

from .certificates import (CertificateReport, EqualityCertificate, build_Pz,
                           certify_equality, certify_inequality, envelope)
from .config import (Scenario, load_config, load_scenario,
                     scenario_from_mapping)
from .controllers import (ControllerGains, ControllerState,
                          alinea_vector_field, discontinuous_projected_field,
                          equality_pd_vector_field, mpc_policy,
                          projected_pd_vector_field)
from .costs import CallbackCost, QuadraticCost
from .errors import (ConfigInvalid, ConstantViolated, DimensionMismatch,
                     FailedCertificate, GainRatioViolated,
                     IncompatibleScenarios, Infeasible, InfeasibleHorizon,
                     LimitNotSettled, MissingCertificate, NegativeDensity,
                     NoConvergence, NonFiniteState, NonpositiveRate,
                     NotHurwitz, PzNotPD, QPNoConvergence, RankDeficientC,
                     SaddleflowError, SingularA, StepTooLarge, UnknownLink,
                     UnsupportedSet)
from .experiments import (TrafficRun, run_alinea_traffic, run_mpc_traffic,
                          run_pd_traffic, violation_norm)
from .plant import (LtiPlant, StabilityCertificate, SteadyStateMap,
                    check_stability, lyapunov_solve, plant_vector_field,
                    steady_state_map)
from .problem import (OutputConstraint, SaddlePoint, TimeVaryingProblem,
                      estimate_constants, modified_gradients,
                      regularization_error_check, saddle_drift_bound,
                      saddle_path, solve_saddle_point)
from .sets import InputSet
from .signals import (CallableSignal, ConstantSignal, PiecewiseLinearSignal,
                      Signal, SinusoidSignal, as_signal,
                      seeded_piecewise_noise, signal_from_config)
from .simulator import (TrajectoryLog, integrate, lyapunov_diagnostics,
                        reduced_controller_run, rk4, tracking_report)
from .traffic import (EXAMPLE_NETWORK, TrafficLink, TrafficNetwork,
                      alinea_tables, build_metering_problem,
                      ctm_vector_field, example_network,
                      freeflow_linearization, network_from_config, throughput)

__version__ = "0.1.0"
