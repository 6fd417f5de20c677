"""Voltage-quality metrics over single frames and whole runs."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .validation import check_vband, check_vector

__all__ = ["MetricsSummary", "rms_deviation", "count_violations", "compute_metrics"]


@dataclass
class MetricsSummary:
    mean_rms_dev: float
    max_dev: float
    violation_count_true: int
    violation_count_meas: int
    avg_losses_mw: float
    switch_event_total: int
    side: str = "true"
    anomaly_steps: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def rms_deviation(vm) -> float:
    """Root-mean-square distance of bus voltage magnitudes from 1 p.u."""
    vm = check_vector(vm, name="vm")
    # correctly rounded sum, so the result does not depend on summation order
    dev = vm - 1.0
    return math.sqrt(math.fsum(dev * dev) / dev.size)


def count_violations(vm, vband=(0.95, 1.05)) -> int:
    """Entries strictly outside the closed band ``[vmin, vmax]``."""
    vmin, vmax = check_vband(vband)
    vm = np.asarray(vm, dtype=float)
    return int(np.count_nonzero((vm < vmin) | (vm > vmax)))


def compute_metrics(log, which: str = "true", steps=None, baseline=None,
                    threshold: float = 0.005) -> MetricsSummary:
    """Aggregate a run's frames.

    ``which`` picks the voltage stream (``"true"`` or ``"meas"``) for the
    RMS and maximum deviation; both violation totals are always reported.
    ``steps`` restricts aggregation to those timesteps. With a ``baseline``
    log, ``anomaly_steps`` is filled in by
    :func:`gridattacksim.simulator.detect_anomalies`.
    """
    if which not in ("true", "meas"):
        raise ValueError(f"which must be 'true' or 'meas', got {which!r}")
    frames = log.frames
    if steps is not None:
        wanted = set(steps)
        frames = [f for f in frames if f.t in wanted]
    if not frames:
        raise ValueError("no frames to aggregate")

    attr = "vm_true" if which == "true" else "vm_meas"
    V = np.array([getattr(f, attr) for f in frames])
    anomalies = []
    if baseline is not None:
        from .simulator import detect_anomalies

        anomalies = detect_anomalies(log, baseline, threshold)
        if steps is not None:
            anomalies = [t for t in anomalies if t in wanted]
    return MetricsSummary(
        mean_rms_dev=float(np.mean([rms_deviation(v) for v in V])),
        max_dev=float(np.max(np.abs(V - 1.0))),
        violation_count_true=int(sum(f.violations_true for f in frames)),
        violation_count_meas=int(sum(f.violations_meas for f in frames)),
        avg_losses_mw=float(np.mean([f.losses_mw for f in frames])),
        switch_event_total=int(sum(f.pvpq_switch_count for f in frames)),
        side=which,
        anomaly_steps=anomalies,
    )
