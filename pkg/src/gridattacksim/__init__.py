"""Time-stepped simulation of telemetry attacks (DoS, DoD, FDI) on AC power-flow cases."""

from .attacks import (
    AttackKind,
    AttackSchedule,
    AttackWindow,
    apply_load_attacks,
    apply_measurement_attacks,
    attack_mask_at,
    default_schedule,
    parse_schedule,
    serialize_schedule,
)
from .caseio import NetworkCase, builtin_case14, parse_matpower_case, validate_case
from .estimators import AttackSimulator, PowerFlowSolver, RmsAnomalyDetector
from .metrics import MetricsSummary, compute_metrics, count_violations, rms_deviation
from .powerflow import (
    PowerFlowOptions,
    PowerFlowSolution,
    build_ybus,
    compute_losses,
    nr_solve,
    solve_with_qlims,
)
from .simulator import (
    SimConfig,
    SimulationLog,
    TelemetryFrame,
    compare_runs,
    detect_anomalies,
    load_multiplier,
    run,
    step,
)

__version__ = "0.1.0"
