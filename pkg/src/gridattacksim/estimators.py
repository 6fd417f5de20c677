"""scikit-learn style wrappers around the functional API.

Hyper-parameters live in ``__init__`` untouched (so ``get_params`` /
``set_params`` / ``clone`` work); everything learned or computed is stored
in trailing-underscore attributes by ``fit``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .attacks import AttackSchedule
from .metrics import compute_metrics, rms_deviation
from .powerflow import PowerFlowOptions, build_ybus, solve_with_qlims
from .simulator import SimConfig, SimulationLog, run
from .validation import check_case, check_same_shape

__all__ = ["PowerFlowSolver", "AttackSimulator", "RmsAnomalyDetector"]


class PowerFlowSolver(BaseEstimator):
    """Newton-Raphson power flow with optional PV->PQ switching.

    Parameters
    ----------
    tol : float
        Maximum absolute power mismatch (p.u.) accepted as converged.
    max_iter : int
        Newton iterations allowed per switching round.
    enforce_q_lims : bool
        Convert generators that exceed their reactive limits to PQ.
    max_qlim_rounds : int
        Cap on switching rounds.
    flat_start : bool
        Start from 1 p.u. / slack angle instead of the case's stored voltages.

    Attributes
    ----------
    solution_ : PowerFlowSolution
    vm_, va_ : ndarray
        Bus voltage magnitudes (p.u.) and angles (rad).
    n_iter_ : int
    losses_mw_ : float
    switched_gens_ : list of (int, str)
    """

    def __init__(self, tol=1e-8, max_iter=20, enforce_q_lims=True, max_qlim_rounds=10,
                 flat_start=True):
        self.tol = tol
        self.max_iter = max_iter
        self.enforce_q_lims = enforce_q_lims
        self.max_qlim_rounds = max_qlim_rounds
        self.flat_start = flat_start

    def _options(self) -> PowerFlowOptions:
        return PowerFlowOptions(tol=self.tol, max_iter=self.max_iter,
                                enforce_q_lims=self.enforce_q_lims,
                                max_qlim_rounds=self.max_qlim_rounds,
                                flat_start=self.flat_start)

    def fit(self, case, y=None):
        case = check_case(case)
        self.ybus_ = build_ybus(case)
        self.solution_ = solve_with_qlims(case, self._options(), self.ybus_)
        self.vm_ = self.solution_.vm
        self.va_ = self.solution_.va
        self.n_iter_ = self.solution_.iterations
        self.losses_mw_ = self.solution_.losses_mw
        self.switched_gens_ = list(self.solution_.switched_gens)
        return self

    def predict(self, case=None):
        """Voltage phasors of the fitted solution, shape (n_bus,)."""
        check_is_fitted(self, "solution_")
        return self.vm_ * np.exp(1j * self.va_)


class AttackSimulator(BaseEstimator):
    """Run the time-stepped attack scenario on a case.

    ``fit(case)`` runs the scenario (and, with ``with_baseline``, its
    attack-free twin); ``transform`` returns the true or measured voltage
    matrix of shape (n_steps, n_bus).
    """

    def __init__(self, schedule=None, n_steps=144, noise_amplitude=0.0, seed=0,
                 vband=(0.95, 1.05), sinus_amplitude=0.15, enforce_q_lims=True,
                 with_baseline=False, side="true"):
        self.schedule = schedule
        self.n_steps = n_steps
        self.noise_amplitude = noise_amplitude
        self.seed = seed
        self.vband = vband
        self.sinus_amplitude = sinus_amplitude
        self.enforce_q_lims = enforce_q_lims
        self.with_baseline = with_baseline
        self.side = side

    def _config(self, schedule) -> SimConfig:
        return SimConfig(
            n_steps=self.n_steps,
            noise_amplitude=self.noise_amplitude,
            seed=self.seed,
            vband=self.vband,
            schedule=schedule,
            pf_options=PowerFlowOptions(enforce_q_lims=self.enforce_q_lims),
            sinus_amplitude=self.sinus_amplitude,
        )

    def fit(self, case, y=None):
        case = check_case(case)
        schedule = self.schedule if self.schedule is not None else AttackSchedule()
        self.log_ = run(case, self._config(schedule))
        self.metrics_ = compute_metrics(self.log_, self.side)
        self.baseline_log_ = None
        if self.with_baseline:
            self.baseline_log_ = run(case, self._config(AttackSchedule()))
            self.metrics_ = compute_metrics(self.log_, self.side, baseline=self.baseline_log_)
        return self

    def transform(self, case=None):
        check_is_fitted(self, "log_")
        return self.log_.column("vm_meas" if self.side == "meas" else "vm_true")

    def fit_transform(self, case, y=None):
        return self.fit(case).transform()


class RmsAnomalyDetector(BaseEstimator):
    """Flag timesteps whose RMS voltage deviation departs from a baseline run.

    ``fit`` takes the baseline log, ``predict`` an attacked log of the same
    shape and returns a boolean array over timesteps.
    """

    def __init__(self, threshold=0.005):
        self.threshold = threshold

    def fit(self, baseline: SimulationLog, y=None):
        if not isinstance(baseline, SimulationLog):
            raise TypeError("fit expects a SimulationLog")
        self.baseline_ = baseline
        self.baseline_rms_ = np.array([rms_deviation(v) for v in baseline.column("vm_true")])
        return self

    def decision_function(self, log: SimulationLog) -> np.ndarray:
        check_is_fitted(self, "baseline_rms_")
        check_same_shape(log, self.baseline_)
        rms = np.array([rms_deviation(v) for v in log.column("vm_true")])
        return np.abs(rms - self.baseline_rms_)

    def predict(self, log: SimulationLog) -> np.ndarray:
        return self.decision_function(log) > self.threshold
