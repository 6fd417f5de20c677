"""Telemetry attack windows (DoS, DoD, FDI) and how they act on a timestep.

DoS and DoD corrupt the load vector the solver is fed; FDI only biases the
voltage magnitudes reported after the solve.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "AttackKind",
    "AttackWindow",
    "AttackSchedule",
    "ScheduleError",
    "SchemaError",
    "RangeError",
    "MissingParam",
    "UnknownTargetBus",
    "default_schedule",
    "attack_mask_at",
    "active_windows",
    "apply_load_attacks",
    "apply_measurement_attacks",
    "parse_schedule",
    "serialize_schedule",
    "load_schedule",
]


class AttackKind(enum.IntFlag):
    DOS = 1
    DOD = 2
    FDI = 4

    @property
    def label(self) -> str:
        return self.name.lower()


class ScheduleError(ValueError):
    pass


class SchemaError(ScheduleError):
    pass


class RangeError(ScheduleError):
    pass


class MissingParam(ScheduleError):
    pass


class UnknownTargetBus(ScheduleError):
    pass


@dataclass(frozen=True)
class AttackWindow:
    """One attack active on timesteps ``t_start..t_end`` inclusive.

    ``target_buses`` are bus ids. For FDI an empty tuple means every bus;
    DoD needs at least one target. ``scale`` is used by DoD only and
    ``bias`` (p.u.) by FDI only.
    """

    kind: AttackKind
    t_start: int
    t_end: int
    target_buses: tuple[int, ...] = ()
    scale: float = 1.0
    bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        object.__setattr__(self, "target_buses", tuple(int(b) for b in self.target_buses))
        if self.t_start < 0:
            raise RangeError(f"window start must be >= 0, got {self.t_start}")
        if self.t_end < self.t_start:
            raise RangeError(f"window end {self.t_end} precedes start {self.t_start}")
        if self.kind == AttackKind.DOD:
            if not self.target_buses:
                raise MissingParam("DoD window needs at least one target bus")
            if not self.scale > 0 or not math.isfinite(self.scale):
                raise RangeError(f"DoD scale must be positive and finite, got {self.scale}")
        if self.kind == AttackKind.FDI and not math.isfinite(self.bias):
            raise RangeError(f"FDI bias must be finite, got {self.bias}")

    def covers(self, t: int) -> bool:
        return self.t_start <= t <= self.t_end


@dataclass(frozen=True)
class AttackSchedule:
    windows: tuple[AttackWindow, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(self.windows))

    def __len__(self):
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)


def default_schedule() -> AttackSchedule:
    """DoS on 20-50, FDI +0.1 p.u. on all buses for 60-90, DoD 1.5x at buses 5, 7, 9 for 100-130."""
    return AttackSchedule((
        AttackWindow(AttackKind.DOS, 20, 50),
        AttackWindow(AttackKind.FDI, 60, 90, bias=0.1),
        AttackWindow(AttackKind.DOD, 100, 130, target_buses=(5, 7, 9), scale=1.5),
    ))


def active_windows(schedule: AttackSchedule, t: int, kind: AttackKind | None = None):
    return [w for w in schedule.windows if w.covers(t) and (kind is None or w.kind == kind)]


def attack_mask_at(schedule: AttackSchedule, t: int) -> int:
    mask = 0
    for w in active_windows(schedule, t):
        mask |= int(w.kind)
    return mask


def _target_positions(bus_ids, targets) -> list[int]:
    lookup = {int(b): i for i, b in enumerate(bus_ids)}
    try:
        return [lookup[b] for b in targets]
    except KeyError as exc:
        raise UnknownTargetBus(f"attack targets unknown bus {exc.args[0]}") from None


def apply_load_attacks(schedule: AttackSchedule, t: int, pd_nominal, pd_prev_effective,
                       bus_ids) -> np.ndarray:
    """Demand vector the solver actually sees at step ``t``.

    Under DoS the previous effective vector is returned unchanged (at
    ``t == 0``, or with no previous vector, the nominal one is used). DoS
    takes precedence over DoD. Works equally for active and reactive demand.
    """
    if active_windows(schedule, t, AttackKind.DOS):
        if pd_prev_effective is None or t == 0:
            return np.array(pd_nominal, dtype=float)
        return np.array(pd_prev_effective, dtype=float)
    out = np.array(pd_nominal, dtype=float)
    for w in active_windows(schedule, t, AttackKind.DOD):
        pos = _target_positions(bus_ids, w.target_buses)
        out[pos] *= w.scale
    return out


def apply_measurement_attacks(schedule: AttackSchedule, t: int, vm_true, bus_ids=None) -> np.ndarray:
    """Voltage magnitudes as reported to the operator. ``vm_true`` is not modified."""
    measured = np.array(vm_true, dtype=float)
    for w in active_windows(schedule, t, AttackKind.FDI):
        if w.target_buses:
            if bus_ids is None:
                raise UnknownTargetBus("bus ids are required for targeted FDI windows")
            measured[_target_positions(bus_ids, w.target_buses)] += w.bias
        else:
            measured += w.bias
    return measured


_KINDS = {"dos": AttackKind.DOS, "dod": AttackKind.DOD, "fdi": AttackKind.FDI}
_KEYS = {"type", "start", "end", "buses", "scale", "bias"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _window_from_obj(obj, pos: int) -> AttackWindow:
    where = f"window {pos}"
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - _KEYS
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    if obj.get("type") not in _KINDS:
        raise SchemaError(f"{where}: 'type' must be one of {sorted(_KINDS)}")
    kind = _KINDS[obj["type"]]
    for key in ("start", "end"):
        if key not in obj:
            raise SchemaError(f"{where}: missing '{key}'")
        if not _is_int(obj[key]):
            raise SchemaError(f"{where}: '{key}' must be an integer")
    buses = obj.get("buses")
    if buses is not None and (not isinstance(buses, list) or not all(_is_int(b) for b in buses)):
        raise SchemaError(f"{where}: 'buses' must be a list of integers")
    for key in ("scale", "bias"):
        if key in obj and not _is_number(obj[key]):
            raise SchemaError(f"{where}: '{key}' must be a number")
    if obj["end"] < obj["start"] or obj["start"] < 0:
        raise RangeError(f"{where}: bad window [{obj['start']}, {obj['end']}]")

    if kind == AttackKind.DOD:
        if not buses or "scale" not in obj:
            raise MissingParam(f"{where}: DoD needs non-empty 'buses' and 'scale'")
        return AttackWindow(kind, obj["start"], obj["end"], tuple(buses), scale=float(obj["scale"]))
    if kind == AttackKind.FDI:
        if "bias" not in obj:
            raise MissingParam(f"{where}: FDI needs 'bias'")
        return AttackWindow(kind, obj["start"], obj["end"], tuple(buses or ()), bias=float(obj["bias"]))
    return AttackWindow(kind, obj["start"], obj["end"])


def parse_schedule(text: str) -> AttackSchedule:
    """Parse the JSON schedule format (an array of window objects)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None
    if not isinstance(data, list):
        raise SchemaError("schedule must be a JSON array")
    return AttackSchedule(tuple(_window_from_obj(obj, i) for i, obj in enumerate(data)))


def serialize_schedule(schedule: AttackSchedule) -> str:
    out = []
    for w in schedule.windows:
        obj = {"type": w.kind.label, "start": w.t_start, "end": w.t_end}
        if w.kind == AttackKind.DOD:
            obj["buses"] = list(w.target_buses)
            obj["scale"] = w.scale
        elif w.kind == AttackKind.FDI:
            if w.target_buses:
                obj["buses"] = list(w.target_buses)
            obj["bias"] = w.bias
        out.append(obj)
    return json.dumps(out, indent=2)


def load_schedule(spec: str) -> AttackSchedule:
    """Resolve a CLI-style schedule argument: ``default``, ``none`` or a JSON path."""
    if spec == "none":
        return AttackSchedule()
    if spec == "default":
        text = (resources.files("gridattacksim") / "data" / "default_schedule.json").read_text()
        return parse_schedule(text)
    with open(spec, encoding="utf-8") as fh:
        return parse_schedule(fh.read())
