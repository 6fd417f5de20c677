"""The time-stepped loop: load profile -> attacks -> AC power flow -> telemetry."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .attacks import (
    AttackSchedule,
    apply_load_attacks,
    apply_measurement_attacks,
    attack_mask_at,
    serialize_schedule,
)
from .caseio import NetworkCase
from .metrics import count_violations, rms_deviation
from .powerflow import PowerFlowError, PowerFlowOptions, build_ybus, solve_with_qlims
from .validation import check_case, check_noise, check_same_shape, check_vband

__all__ = [
    "SimConfig",
    "TelemetryFrame",
    "SimulationLog",
    "RunDelta",
    "load_multiplier",
    "step",
    "run",
    "run_with_baseline",
    "compare_runs",
    "detect_anomalies",
]


@dataclass(frozen=True)
class SimConfig:
    n_steps: int = 144
    hours_per_cycle: float = 24.0
    noise_amplitude: float = 0.0
    seed: int = 0
    vband: tuple = (0.95, 1.05)
    schedule: AttackSchedule = field(default_factory=AttackSchedule)
    pf_options: PowerFlowOptions = field(default_factory=PowerFlowOptions)
    sinus_amplitude: float = 0.15

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        check_noise(self.noise_amplitude)
        object.__setattr__(self, "vband", check_vband(self.vband))

    def to_dict(self) -> dict:
        import json

        return {
            "n_steps": self.n_steps,
            "hours_per_cycle": self.hours_per_cycle,
            "noise_amplitude": self.noise_amplitude,
            "seed": self.seed,
            "vband": list(self.vband),
            "sinus_amplitude": self.sinus_amplitude,
            "schedule": json.loads(serialize_schedule(self.schedule)),
            "pf_options": {f.name: getattr(self.pf_options, f.name)
                           for f in fields(self.pf_options)},
        }


_ARRAY_FIELDS = ("vm_true", "vm_meas", "va", "pg", "qg", "pd_eff", "qd_eff")


@dataclass(eq=False)
class TelemetryFrame:
    """Everything logged at one timestep.

    ``pd_eff``/``qd_eff`` (per-bus MW/MVAr actually fed to the solver) are
    kept in memory only and are ``None`` for frames read back from CSV.
    """

    t: int
    hour: float
    vm_true: np.ndarray
    vm_meas: np.ndarray
    va: np.ndarray
    pg: np.ndarray
    qg: np.ndarray
    total_load_mw: float
    total_gen_mw: float
    losses_mw: float
    violations_true: int
    violations_meas: int
    attack_mask: int
    pvpq_switch_count: int
    converged: bool
    pd_eff: np.ndarray | None = None
    qd_eff: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, TelemetryFrame):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if f.name in _ARRAY_FIELDS:
                if (a is None) != (b is None):
                    return False
                if a is not None and not np.array_equal(a, b, equal_nan=True):
                    return False
            elif a != b:
                return False
        return True


@dataclass(eq=False)
class SimulationLog:
    bus_ids: tuple
    gen_buses: tuple
    frames: list
    config: SimConfig | None = None

    @property
    def n_gens(self) -> int:
        if self.frames:
            return len(self.frames[0].pg)
        return len(self.gen_buses or ())

    @property
    def n_steps(self) -> int:
        return len(self.frames)

    def column(self, name: str) -> np.ndarray:
        """Stack one frame attribute over time (rows are timesteps)."""
        return np.array([getattr(f, name) for f in self.frames])

    def __eq__(self, other):
        if not isinstance(other, SimulationLog):
            return NotImplemented
        return (tuple(self.bus_ids) == tuple(other.bus_ids)
                and tuple(self.gen_buses) == tuple(other.gen_buses)
                and self.frames == other.frames)


def load_multiplier(t: int, config: SimConfig) -> float:
    """Diurnal demand multiplier ``1 + A sin(2 pi h / 24) + noise``.

    ``h`` is the hour of day for step ``t``, so the run spans one cycle. The
    noise term is uniform on ``[-sigma, sigma]`` and drawn from a generator
    seeded by ``(seed, t)``, making every step reproducible on its own.
    """
    if not 0 <= t < config.n_steps:
        raise ValueError(f"timestep {t} outside [0, {config.n_steps})")
    hour = t * config.hours_per_cycle / config.n_steps
    m = 1.0 + config.sinus_amplitude * math.sin(2.0 * math.pi * hour / config.hours_per_cycle)
    sigma = config.noise_amplitude
    if sigma > 0:
        m += np.random.default_rng([config.seed, t]).uniform(-sigma, sigma)
    return m


def _failed_frame_arrays(case: NetworkCase):
    nan_bus = np.full(case.n_bus, np.nan)
    nan_gen = np.full(len(case.gens), np.nan)
    return nan_bus, nan_bus.copy(), nan_gen, nan_gen.copy()


def step(case: NetworkCase, config: SimConfig, t: int, previous: TelemetryFrame | None = None,
         ybus=None) -> TelemetryFrame:
    """Advance one timestep.

    ``previous`` supplies the effective loads of step ``t - 1`` for the DoS
    freeze. A failed solve yields a frame with ``converged=False`` holding the
    last iterate instead of raising.
    """
    schedule = config.schedule
    bus_ids = case.bus_ids
    m = load_multiplier(t, config)
    pd_nom = case.pd * m
    qd_nom = case.qd * m
    prev_pd = previous.pd_eff if previous is not None else None
    prev_qd = previous.qd_eff if previous is not None else None
    pd = apply_load_attacks(schedule, t, pd_nom, prev_pd, bus_ids)
    qd = apply_load_attacks(schedule, t, qd_nom, prev_qd, bus_ids)

    loaded = case.with_demands(pd, qd)
    try:
        sol = solve_with_qlims(loaded, config.pf_options, ybus)
        converged = True
    except PowerFlowError as exc:
        sol = exc.solution
        converged = False

    if sol is not None:
        vm, va, pg, qg = sol.vm, sol.va, sol.pg, sol.qg
        losses = sol.losses_mw
        switches = len(sol.switched_gens)
    else:
        vm, va, pg, qg = _failed_frame_arrays(case)
        losses = float("nan")
        switches = 0
    vm_meas = apply_measurement_attacks(schedule, t, vm, bus_ids)

    return TelemetryFrame(
        t=t,
        hour=t * config.hours_per_cycle / config.n_steps,
        vm_true=np.array(vm),
        vm_meas=vm_meas,
        va=np.array(va),
        pg=np.array(pg),
        qg=np.array(qg),
        total_load_mw=float(pd.sum()),
        total_gen_mw=float(np.sum(pg)),
        losses_mw=float(losses),
        violations_true=count_violations(vm, config.vband),
        violations_meas=count_violations(vm_meas, config.vband),
        attack_mask=attack_mask_at(schedule, t),
        pvpq_switch_count=switches,
        converged=converged,
        pd_eff=pd,
        qd_eff=qd,
    )


def run(case: NetworkCase, config: SimConfig | None = None) -> SimulationLog:
    """Simulate ``config.n_steps`` timesteps; deterministic in ``(case, config)``."""
    config = config or SimConfig()
    check_case(case)
    ybus = build_ybus(case)
    frames = []
    previous = None
    for t in range(config.n_steps):
        previous = step(case, config, t, previous, ybus)
        frames.append(previous)
    return SimulationLog(tuple(int(b) for b in case.bus_ids),
                         tuple(g.bus for g in case.gens), frames, config)


def run_with_baseline(case: NetworkCase, config: SimConfig):
    """Run the configured scenario and its attack-free twin side by side."""
    baseline_cfg = replace(config, schedule=AttackSchedule())
    with ThreadPoolExecutor(max_workers=2) as pool:
        attacked = pool.submit(run, case, config)
        baseline = pool.submit(run, case, baseline_cfg)
        return attacked.result(), baseline.result()


@dataclass
class RunDelta:
    """Per-frame differences ``a - b`` between two runs."""

    t: np.ndarray
    bus_ids: tuple
    vm_true: np.ndarray  # (steps, buses)
    vm_meas: np.ndarray
    mean_vm_true: np.ndarray
    mean_vm_meas: np.ndarray
    losses_mw: np.ndarray


def compare_runs(a: SimulationLog, b: SimulationLog) -> RunDelta:
    check_same_shape(a, b)
    va_true, vb_true = a.column("vm_true"), b.column("vm_true")
    va_meas, vb_meas = a.column("vm_meas"), b.column("vm_meas")
    return RunDelta(
        t=a.column("t"),
        bus_ids=tuple(a.bus_ids),
        vm_true=va_true - vb_true,
        vm_meas=va_meas - vb_meas,
        mean_vm_true=va_true.mean(axis=1) - vb_true.mean(axis=1),
        mean_vm_meas=va_meas.mean(axis=1) - vb_meas.mean(axis=1),
        losses_mw=a.column("losses_mw") - b.column("losses_mw"),
    )


def detect_anomalies(attacked: SimulationLog, baseline: SimulationLog,
                     threshold: float = 0.005) -> list[int]:
    """Timesteps where the true-voltage RMS deviation departs from baseline by more than ``threshold``."""
    check_same_shape(attacked, baseline)
    flagged = []
    for fa, fb in zip(attacked.frames, baseline.frames):
        gap = abs(rms_deviation(fa.vm_true) - rms_deviation(fb.vm_true))
        if gap > threshold:
            flagged.append(fa.t)
    return flagged
