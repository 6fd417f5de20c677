"""AC power flow: polar Newton-Raphson with PV->PQ reactive-limit switching.

All network math is in per-unit on ``case.base_mva`` using the dense bus
index (row order of ``case.buses``). Generator outputs and losses are
reported back in MW/MVAr.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .caseio import BusKind, NetworkCase, _replace, validate_case

__all__ = [
    "PowerFlowOptions",
    "AdmittanceMatrix",
    "PowerFlowSolution",
    "PowerFlowError",
    "InvalidCase",
    "ZeroImpedanceBranch",
    "SingularJacobian",
    "NotConverged",
    "QlimCycleExceeded",
    "SlackQViolation",
    "build_ybus",
    "effective_bus_kinds",
    "scheduled_injections",
    "compute_injections",
    "mismatch",
    "jacobian",
    "nr_solve",
    "solve_with_qlims",
    "compute_losses",
]


@dataclass(frozen=True)
class PowerFlowOptions:
    tol: float = 1e-8
    max_iter: int = 20
    enforce_q_lims: bool = True
    max_qlim_rounds: int = 10
    flat_start: bool = True
    # False converts every violating generator per round; True only the worst one.
    qlim_one_at_a_time: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.max_qlim_rounds < 1:
            raise ValueError(f"max_qlim_rounds must be >= 1, got {self.max_qlim_rounds}")


@dataclass
class AdmittanceMatrix:
    """Bus admittance matrix plus the per-branch two-port terms it was built from.

    The branch arrays cover in-service branches only; ``branch_rows`` maps
    them back to positions in ``case.branches``.
    """

    entries: np.ndarray
    from_idx: np.ndarray
    to_idx: np.ndarray
    yff: np.ndarray
    yft: np.ndarray
    ytf: np.ndarray
    ytt: np.ndarray
    branch_rows: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass
class PowerFlowSolution:
    vm: np.ndarray
    va: np.ndarray  # radians
    pg: np.ndarray  # MW per generator
    qg: np.ndarray  # MVAr per generator
    converged: bool
    iterations: int
    losses_mw: float
    bus_kinds: np.ndarray
    max_mismatch: float
    switched_gens: list = field(default_factory=list)  # (gen index, "Qmin" | "Qmax")
    slack_q_violation: bool = False


class PowerFlowError(RuntimeError):
    """Base for solver failures. ``solution`` holds the last iterate if any."""

    def __init__(self, message: str, solution: PowerFlowSolution | None = None):
        super().__init__(message)
        self.solution = solution


class InvalidCase(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid case: " + "; ".join(self.problems))


class ZeroImpedanceBranch(ValueError):
    pass


class SingularJacobian(PowerFlowError):
    pass


class NotConverged(PowerFlowError):
    pass


class QlimCycleExceeded(PowerFlowError):
    pass


class SlackQViolation(UserWarning):
    """Slack generator output is outside its reactive limits.

    Slack buses are never switched; the condition is recorded on the solution
    as ``slack_q_violation``.
    """


def build_ybus(case: NetworkCase) -> AdmittanceMatrix:
    """Assemble the bus admittance matrix with the standard pi branch model.

    Off-nominal taps sit on the from-side; ``shift`` is in degrees.
    """
    n = case.n_bus
    idx = case.bus_index
    rows = [k for k, br in enumerate(case.branches) if br.status]
    live = [case.branches[k] for k in rows]
    for k, br in zip(rows, live):
        if br.x == 0:
            raise ZeroImpedanceBranch(
                f"branch {k} ({br.from_bus}-{br.to_bus}) has zero series reactance"
            )

    f = np.array([idx[br.from_bus] for br in live], dtype=int)
    t = np.array([idx[br.to_bus] for br in live], dtype=int)
    r = np.array([br.r for br in live], dtype=float)
    x = np.array([br.x for br in live], dtype=float)
    b = np.array([br.b for br in live], dtype=float)
    tap = np.array([br.tap for br in live], dtype=float)
    shift = np.deg2rad(np.array([br.shift for br in live], dtype=float))

    ys = 1.0 / (r + 1j * x)
    ratio = tap * np.exp(1j * shift)
    ytt = ys + 0.5j * b
    yff = ytt / (ratio * np.conj(ratio))
    yft = -ys / np.conj(ratio)
    ytf = -ys / ratio

    Y = np.zeros((n, n), dtype=complex)
    np.add.at(Y, (f, f), yff)
    np.add.at(Y, (f, t), yft)
    np.add.at(Y, (t, f), ytf)
    np.add.at(Y, (t, t), ytt)
    shunt = np.array([b_.gs + 1j * b_.bs for b_ in case.buses]) / case.base_mva
    Y[np.diag_indices(n)] += shunt
    return AdmittanceMatrix(Y, f, t, yff, yft, ytf, ytt, np.array(rows, dtype=int))


def _as_matrix(Y) -> np.ndarray:
    return Y.entries if isinstance(Y, AdmittanceMatrix) else np.asarray(Y)


def compute_injections(Y, vm, va) -> np.ndarray:
    """Complex power injected into the network at each bus, p.u."""
    V = np.asarray(vm, dtype=float) * np.exp(1j * np.asarray(va, dtype=float))
    return V * np.conj(_as_matrix(Y) @ V)


def effective_bus_kinds(case: NetworkCase) -> np.ndarray:
    """Bus typing used by the solver.

    A PV bus without an in-service generator cannot hold its voltage and is
    treated as PQ.
    """
    kinds = np.array([int(b.bus_kind) for b in case.buses], dtype=int)
    has_gen = np.zeros(case.n_bus, dtype=bool)
    for g in case.gens:
        if g.status:
            has_gen[case.bus_index[g.bus]] = True
    kinds[(kinds == BusKind.PV) & ~has_gen] = BusKind.PQ
    return kinds


def scheduled_injections(case: NetworkCase) -> np.ndarray:
    """(generation - demand) / base_mva per bus, as complex p.u."""
    s = -(case.pd + 1j * case.qd)
    for g in case.gens:
        if g.status:
            s[case.bus_index[g.bus]] += g.pg + 1j * g.qg
    return s / case.base_mva


def _partition(bus_kinds):
    kinds = np.asarray(bus_kinds)
    pvpq = np.flatnonzero((kinds == BusKind.PV) | (kinds == BusKind.PQ))
    pq = np.flatnonzero(kinds == BusKind.PQ)
    return pvpq, pq


def mismatch(case: NetworkCase, Y, vm, va, bus_kinds) -> np.ndarray:
    """Scheduled minus computed injections: ``[dP at PV+PQ buses, dQ at PQ buses]``."""
    pvpq, pq = _partition(bus_kinds)
    d = scheduled_injections(case) - compute_injections(Y, vm, va)
    return np.concatenate([d.real[pvpq], d.imag[pq]])


def jacobian(case: NetworkCase, Y, vm, va, bus_kinds) -> np.ndarray:
    """Derivative of :func:`mismatch` w.r.t. ``[va at PV+PQ buses, vm at PQ buses]``."""
    Ybus = _as_matrix(Y)
    vm = np.asarray(vm, dtype=float)
    unit = np.exp(1j * np.asarray(va, dtype=float))
    V = vm * unit
    Ibus = Ybus @ V
    # dS/dVa and dS/dVm in the usual compact complex form
    dS_dVa = 1j * V[:, None] * np.conj(np.diag(Ibus) - Ybus * V[None, :])
    dS_dVm = V[:, None] * np.conj(Ybus * unit[None, :]) + np.diag(np.conj(Ibus) * unit)

    pvpq, pq = _partition(bus_kinds)
    # mismatch = scheduled - computed, so its derivative is the negated dS
    j11 = dS_dVa.real[np.ix_(pvpq, pvpq)]
    j12 = dS_dVm.real[np.ix_(pvpq, pq)]
    j21 = dS_dVa.imag[np.ix_(pq, pvpq)]
    j22 = dS_dVm.imag[np.ix_(pq, pq)]
    return -np.block([[j11, j12], [j21, j22]])


def _voltage_setpoints(case: NetworkCase) -> dict[int, float]:
    vset = {}
    for g in case.gens:
        if g.status:
            vset.setdefault(case.bus_index[g.bus], g.vset)
    return vset


def _split_q(q_total: float, qmin: np.ndarray, qmax: np.ndarray) -> np.ndarray:
    """Share a bus's reactive output among its generators in proportion to range."""
    if len(qmin) == 1:
        return np.array([q_total])
    span = qmax - qmin
    if np.all(np.isfinite(span)) and span.sum() > 0:
        return qmin + (q_total - qmin.sum()) * span / span.sum()
    return np.full(len(qmin), q_total / len(qmin))


def _gen_outputs(case: NetworkCase, bus_kinds, S: np.ndarray):
    base = case.base_mva
    pg = np.array([g.pg if g.status else 0.0 for g in case.gens], dtype=float)
    qg = np.array([g.qg if g.status else 0.0 for g in case.gens], dtype=float)
    at_bus: dict[int, list[int]] = {}
    for k, g in enumerate(case.gens):
        if g.status:
            at_bus.setdefault(case.bus_index[g.bus], []).append(k)

    for i, gens in at_bus.items():
        kind = bus_kinds[i]
        bus = case.buses[i]
        if kind == BusKind.SLACK:
            p_total = S[i].real * base + bus.pd
            pg[gens[0]] = p_total - pg[gens[1:]].sum()
        if kind in (BusKind.SLACK, BusKind.PV):
            q_total = S[i].imag * base + bus.qd
            qmin = np.array([case.gens[k].qmin for k in gens])
            qmax = np.array([case.gens[k].qmax for k in gens])
            qg[gens] = _split_q(q_total, qmin, qmax)
    return pg, qg


def _initial_state(case, bus_kinds, options, vm_init, va_init):
    kinds = np.asarray(bus_kinds)
    if vm_init is not None:
        vm = np.array(vm_init, dtype=float)
        va = np.array(va_init, dtype=float)
    elif options.flat_start:
        slack = np.flatnonzero(kinds == BusKind.SLACK)[0]
        vm = np.ones(case.n_bus)
        va = np.full(case.n_bus, np.deg2rad(case.buses[slack].va0))
    else:
        vm = np.array([b.vm0 for b in case.buses], dtype=float)
        va = np.deg2rad([b.va0 for b in case.buses])
    for i, v in _voltage_setpoints(case).items():
        if kinds[i] in (BusKind.PV, BusKind.SLACK):
            vm[i] = v
    isolated = kinds == BusKind.ISOLATED
    vm[isolated] = 0.0
    va[isolated] = 0.0
    return vm, va


def _package(case, Y, bus_kinds, vm, va, converged, iterations, norm):
    S = compute_injections(Y, vm, va)
    pg, qg = _gen_outputs(case, bus_kinds, S)
    losses, _ = compute_losses(case, Y, vm, va)
    return PowerFlowSolution(
        vm=vm, va=va, pg=pg, qg=qg, converged=converged, iterations=iterations,
        losses_mw=losses, bus_kinds=np.array(bus_kinds, dtype=int), max_mismatch=norm,
    )


def nr_solve(case: NetworkCase, Y, bus_kinds, options: PowerFlowOptions | None = None,
             vm_init=None, va_init=None) -> PowerFlowSolution:
    """Single Newton-Raphson solve under a fixed bus typing.

    Starts flat (or from ``vm_init``/``va_init`` when given). Generator-bus
    magnitudes are always reset to their setpoints.

    Raises
    ------
    NotConverged
        ``max_iter`` reached, or the iterate became non-finite.
    SingularJacobian
        The Newton step could not be solved for.
    """
    options = options or PowerFlowOptions()
    if isinstance(Y, NetworkCase):
        raise TypeError("nr_solve expects an admittance matrix, not a case")
    kinds = np.asarray(bus_kinds, dtype=int)
    if np.count_nonzero(kinds == BusKind.SLACK) != 1:
        raise ValueError("nr_solve needs exactly one slack bus")
    pvpq, pq = _partition(kinds)
    npvpq = len(pvpq)
    vm, va = _initial_state(case, kinds, options, vm_init, va_init)

    iterations = 0
    while True:
        F = mismatch(case, Y, vm, va, kinds)
        norm = float(np.max(np.abs(F))) if F.size else 0.0
        if not np.isfinite(norm):
            raise NotConverged(
                "power flow diverged", _package(case, Y, kinds, vm, va, False, iterations, norm)
            )
        if norm < options.tol:
            return _package(case, Y, kinds, vm, va, True, iterations, norm)
        if iterations >= options.max_iter:
            raise NotConverged(
                f"no convergence after {iterations} iterations (mismatch {norm:.3g})",
                _package(case, Y, kinds, vm, va, False, iterations, norm),
            )
        J = jacobian(case, Y, vm, va, kinds)
        try:
            dx = np.linalg.solve(J, F)
        except np.linalg.LinAlgError:
            raise SingularJacobian(
                "singular Jacobian", _package(case, Y, kinds, vm, va, False, iterations, norm)
            ) from None
        va[pvpq] -= dx[:npvpq]
        vm[pq] -= dx[npvpq:]
        iterations += 1


def _q_violations(case: NetworkCase, bus_kinds, sol: PowerFlowSolution):
    """PV buses whose generators' combined reactive output is out of limits."""
    at_bus: dict[int, list[int]] = {}
    for k, g in enumerate(case.gens):
        if g.status:
            at_bus.setdefault(case.bus_index[g.bus], []).append(k)
    found = []
    for i, gens in at_bus.items():
        if bus_kinds[i] != BusKind.PV:
            continue
        q = sol.qg[gens].sum()
        qmax = sum(case.gens[k].qmax for k in gens)
        qmin = sum(case.gens[k].qmin for k in gens)
        if q > qmax:
            found.append((q - qmax, i, gens, "Qmax"))
        elif q < qmin:
            found.append((qmin - q, i, gens, "Qmin"))
    return found


def _slack_out_of_limits(case: NetworkCase, bus_kinds, sol: PowerFlowSolution) -> bool:
    slack = int(np.flatnonzero(np.asarray(bus_kinds) == BusKind.SLACK)[0])
    gens = [k for k, g in enumerate(case.gens) if g.status and case.bus_index[g.bus] == slack]
    if not gens:
        return False
    q = sol.qg[gens].sum()
    return bool(q > sum(case.gens[k].qmax for k in gens) or q < sum(case.gens[k].qmin for k in gens))


def solve_with_qlims(case: NetworkCase, options: PowerFlowOptions | None = None,
                     ybus: AdmittanceMatrix | None = None) -> PowerFlowSolution:
    """Solve the power flow, converting PV generators that hit a Q limit to PQ.

    Each round re-solves warm-started from the previous one; no generator is
    ever switched back within a solve. The slack generator is never switched:
    if it ends up outside its limits ``slack_q_violation`` is set.
    """
    options = options or PowerFlowOptions()
    problems = validate_case(case)
    if problems:
        raise InvalidCase(problems)
    Y = ybus if ybus is not None else build_ybus(case)
    kinds = effective_bus_kinds(case)

    work = case
    switched: list[tuple[int, str]] = []
    total_iter = 0
    vm = va = None
    rounds = 0
    while True:
        try:
            sol = nr_solve(work, Y, kinds, options, vm, va)
        except PowerFlowError as exc:
            if exc.solution is not None:
                exc.solution.iterations += total_iter
                exc.solution.switched_gens = list(switched)
            raise
        total_iter += sol.iterations
        sol.iterations = total_iter
        sol.switched_gens = list(switched)
        violations = _q_violations(work, kinds, sol) if options.enforce_q_lims else []
        if not violations:
            break
        if rounds >= options.max_qlim_rounds:
            sol.converged = False
            raise QlimCycleExceeded(
                f"reactive limits still violated after {rounds} switching rounds", sol
            )
        if options.qlim_one_at_a_time:
            violations = [max(violations, key=lambda v: v[0])]
        gens = list(work.gens)
        kinds = kinds.copy()
        for _, bus, members, which in violations:
            for k in members:
                limit = gens[k].qmax if which == "Qmax" else gens[k].qmin
                gens[k] = _replace(gens[k], qg=limit)
                switched.append((k, which))
            kinds[bus] = BusKind.PQ
        work = work.with_gens(gens)
        vm, va = sol.vm, sol.va
        rounds += 1

    sol.slack_q_violation = _slack_out_of_limits(work, kinds, sol)
    return sol


def compute_losses(case: NetworkCase, Y, vm, va):
    """Series and charging losses from branch flows.

    Returns ``(total_mw, per_branch_mw)`` with one entry per row of
    ``case.branches`` (zero for out-of-service branches). Shunt conductance
    at buses is load, not loss, and is excluded.
    """
    if not isinstance(Y, AdmittanceMatrix):
        Y = build_ybus(case)
    V = np.asarray(vm, dtype=float) * np.exp(1j * np.asarray(va, dtype=float))
    Vf, Vt = V[Y.from_idx], V[Y.to_idx]
    s_from = Vf * np.conj(Y.yff * Vf + Y.yft * Vt)
    s_to = Vt * np.conj(Y.ytf * Vf + Y.ytt * Vt)
    per_branch = np.zeros(len(case.branches))
    per_branch[Y.branch_rows] = (s_from + s_to).real * case.base_mva
    return float(per_branch.sum()), per_branch
