"""Adaptive reservation-slot pool access for machine-type reporting cells:
traffic models, closed-form analysis, discrete-time simulation and
design-space search."""

from .analysis import (ActivityProbs, AnalysisReport, ProtocolParams,
                       activity_prob_alarm, activity_prob_regular,
                       collision_prob, detection_probs, expected_collision_counts,
                       expected_costs, expected_frame_cost, naive_expected_cost,
                       resolution_probs, resolve_prob, truncated_active_dist)
from .config import CellConfig, ConfigError, load_experiment
from .optimizer import (NaiveComparison, SweepBase, SweepGrid, SweepResult,
                        compare_naive, sweep)
from .simulator import (AlarmProcess, Decision, GroupAssignment,
                        InfeasibleConfigError, Mode, PoolOutcome, ScenarioStats,
                        SlotKind, SlotOutcome, empirical_kc_distribution,
                        kc_chi_square, run_pool, run_scenario, simulate_cell,
                        validate_deadline, worst_case_pool_duration)
from .traffic import (ActivationCurve, AlarmScenario, BetaFit, CellGeometry,
                      Deadlines, ExpDecayCorrelation, RegularTrafficParams,
                      ReportKind, SqrtCapCorrelation, StationState,
                      UnitCorrelation, activation_curve, background_sample,
                      beta_pdf, fit_beta, place_stations, spatial_correlation,
                      station_streams, step_station)

__version__ = "0.1.0"
