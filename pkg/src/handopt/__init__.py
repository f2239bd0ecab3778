"""handopt: hysteresis-margin optimization for hard handover over shadowed channels.

The package is organized as a pipeline:

* scenario   cell geometry, mobility traces, configuration and presets
* channel    log-distance path loss plus exponentially correlated shadowing
* estimators windowed signal-strength estimators (AVG, LS, ELS, GELS)
* hybrid     coupled continuous/discrete handover dynamics and the decision rule
* gaussian   analytic statistics of the decision process and box-event
             probabilities over correlated Gaussian vectors (exact + bounds)
* metrics    connection, handover and outage probability assembly
* optimizer  receding-horizon trellis search for the hysteresis vector
* harness    Monte Carlo experiment runners, sweeps and serialization
"""

from .errors import (
    HandoptError,
    ConfigurationError,
    SingularFitError,
    NumericalConsistencyError,
    DegenerateConditioningError,
)
from .scenario import (
    CellLayout,
    MobilityTrace,
    ScenarioConfig,
    build_linear_trace,
    distances,
    preset,
    two_cell_layout,
    cell_row_layout,
)
from .channel import ChannelParams, PowerTrace, shadow_autocorr, sample_shadowing, path_loss
from .estimators import (
    FilterCoeffs,
    LSIntermediates,
    GelsDiagnostics,
    avg_coeffs,
    ls_fit,
    els_select,
    gels_step,
    GelsState,
    coefficient_table,
    estimate_series,
)
from .channel import sample_power
from .hybrid import (
    HybridState,
    Transition,
    DecisionVars,
    build_transition,
    step,
    decide,
    decide_series,
    count_switches,
)
from .gaussian import (
    YProcessStats,
    EventSpec,
    GaussianVector,
    GapProcess,
    ProbResult,
    y_stats,
    gap_below,
    gap_inside,
    gap_above,
    power_below,
    power_above,
    exact_prob,
    approx1,
    approx2_bounds,
    gershgorin_bracket,
    approx3_upper,
    bvn_cdf_lattice,
)
from .metrics import (
    ConnectionProb,
    HandoverOutageProbs,
    connection_prob,
    connection_series,
    handover_prob,
    handover_series,
    outage_prob,
    outage_series,
)
from .optimizer import (
    TrellisProblem,
    TrellisPath,
    TrellisSolution,
    build_trellis,
    optimize_path_hysteresis,
    problem_from_process,
    solve,
    solve_group,
    stage_profile,
    verify_solution,
)
from .harness import (
    AccuracyStudy,
    RunResult,
    SweepSpec,
    config_fingerprint,
    emit,
    opt_margin_tables,
    optimal_h_profile,
    policy_margin_table,
    run_accuracy_study,
    run_multicell,
    run_table_sweep,
    run_two_cell,
    sweep_summary,
    sweep_table,
    trellis_rows,
)

__version__ = "0.1.0"

__all__ = [
    "HandoptError",
    "ConfigurationError",
    "SingularFitError",
    "NumericalConsistencyError",
    "DegenerateConditioningError",
    "CellLayout",
    "MobilityTrace",
    "ScenarioConfig",
    "build_linear_trace",
    "distances",
    "preset",
    "two_cell_layout",
    "cell_row_layout",
    "ChannelParams",
    "PowerTrace",
    "shadow_autocorr",
    "sample_shadowing",
    "sample_power",
    "path_loss",
    "FilterCoeffs",
    "LSIntermediates",
    "GelsDiagnostics",
    "avg_coeffs",
    "ls_fit",
    "els_select",
    "gels_step",
    "GelsState",
    "coefficient_table",
    "estimate_series",
    "HybridState",
    "Transition",
    "DecisionVars",
    "build_transition",
    "step",
    "decide",
    "decide_series",
    "count_switches",
    "YProcessStats",
    "EventSpec",
    "GaussianVector",
    "GapProcess",
    "ProbResult",
    "y_stats",
    "gap_below",
    "gap_inside",
    "gap_above",
    "power_below",
    "power_above",
    "exact_prob",
    "approx1",
    "approx2_bounds",
    "gershgorin_bracket",
    "approx3_upper",
    "bvn_cdf_lattice",
    "ConnectionProb",
    "HandoverOutageProbs",
    "connection_prob",
    "connection_series",
    "handover_prob",
    "handover_series",
    "outage_prob",
    "outage_series",
    "TrellisProblem",
    "TrellisPath",
    "TrellisSolution",
    "build_trellis",
    "optimize_path_hysteresis",
    "problem_from_process",
    "solve",
    "solve_group",
    "stage_profile",
    "verify_solution",
    "AccuracyStudy",
    "RunResult",
    "SweepSpec",
    "config_fingerprint",
    "emit",
    "opt_margin_tables",
    "optimal_h_profile",
    "policy_margin_table",
    "run_accuracy_study",
    "run_multicell",
    "run_table_sweep",
    "run_two_cell",
    "sweep_summary",
    "sweep_table",
    "trellis_rows",
]
