"""CSV telemetry logs, JSON sidecars and delta tables.

Column order is fixed::

    t, hour, attack_mask, converged,
    vm_true_<bus>..., vm_meas_<bus>..., va_<bus>...,
    pg_<gen>..., qg_<gen>...,
    total_load_mw, total_gen_mw, losses_mw,
    violations_true, violations_meas, pvpq_switch_count

Buses are labelled by case id, generators by 1-based row number in the
case's gen matrix. Floats use Python's shortest round-trip repr, so a log
read back is bit-identical to the one written.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import compute_metrics
from .simulator import RunDelta, SimulationLog, TelemetryFrame

__all__ = [
    "SchemaMismatch",
    "RunArtifact",
    "csv_header",
    "log_to_csv",
    "log_from_csv",
    "read_log",
    "write_run",
    "read_sidecar",
    "delta_to_csv",
]

_TAIL = ["total_load_mw", "total_gen_mw", "losses_mw",
         "violations_true", "violations_meas", "pvpq_switch_count"]


class SchemaMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RunArtifact:
    csv_path: Path
    sidecar_path: Path


def csv_header(bus_ids, n_gens: int) -> list[str]:
    cols = ["t", "hour", "attack_mask", "converged"]
    for prefix in ("vm_true", "vm_meas", "va"):
        cols += [f"{prefix}_{b}" for b in bus_ids]
    for prefix in ("pg", "qg"):
        cols += [f"{prefix}_{k}" for k in range(1, n_gens + 1)]
    return cols + _TAIL


def _f(x) -> str:
    return repr(float(x))


def log_to_csv(log: SimulationLog) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(csv_header(log.bus_ids, log.n_gens))
    for fr in log.frames:
        row = [str(fr.t), _f(fr.hour), str(fr.attack_mask), "1" if fr.converged else "0"]
        for arr in (fr.vm_true, fr.vm_meas, fr.va, fr.pg, fr.qg):
            row += [_f(v) for v in arr]
        row += [_f(fr.total_load_mw), _f(fr.total_gen_mw), _f(fr.losses_mw),
                str(fr.violations_true), str(fr.violations_meas), str(fr.pvpq_switch_count)]
        writer.writerow(row)
    return buf.getvalue()


_BUS_COL = re.compile(r"^vm_true_(-?\d+)$")


def log_from_csv(text: str) -> SimulationLog:
    """Parse a telemetry CSV; anything not written by :func:`log_to_csv` is rejected."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaMismatch("empty file")
    header = rows[0]
    bus_ids = []
    for col in header[4:]:
        m = _BUS_COL.match(col)
        if not m:
            break
        bus_ids.append(int(m.group(1)))
    n_gens = sum(1 for col in header if col.startswith("pg_"))
    if not bus_ids or header != csv_header(bus_ids, n_gens):
        raise SchemaMismatch("header does not match the telemetry schema")
    body = rows[1:]
    if not body:
        raise SchemaMismatch("no data rows")

    nb, ng = len(bus_ids), n_gens
    frames = []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise SchemaMismatch(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            t = int(row[0])
            vals = [float(v) for v in row[4:4 + 3 * nb + 2 * ng]]
            tail = row[4 + 3 * nb + 2 * ng:]
            frame = TelemetryFrame(
                t=t,
                hour=float(row[1]),
                attack_mask=int(row[2]),
                converged={"1": True, "0": False}[row[3]],
                vm_true=np.array(vals[:nb]),
                vm_meas=np.array(vals[nb:2 * nb]),
                va=np.array(vals[2 * nb:3 * nb]),
                pg=np.array(vals[3 * nb:3 * nb + ng]),
                qg=np.array(vals[3 * nb + ng:]),
                total_load_mw=float(tail[0]),
                total_gen_mw=float(tail[1]),
                losses_mw=float(tail[2]),
                violations_true=int(tail[3]),
                violations_meas=int(tail[4]),
                pvpq_switch_count=int(tail[5]),
            )
        except (ValueError, KeyError):
            raise SchemaMismatch(f"line {lineno}: malformed value") from None
        if t != lineno - 2:
            raise SchemaMismatch(f"line {lineno}: expected t={lineno - 2}, got {t}")
        frames.append(frame)
    return SimulationLog(tuple(bus_ids), (), frames, None)


def read_log(path) -> SimulationLog:
    """Read a telemetry CSV, taking generator buses from its sidecar when present."""
    path = Path(path)
    log = log_from_csv(path.read_text(encoding="utf-8"))
    side = path.with_suffix(".json")
    if side.is_file():
        meta = read_sidecar(side)
        log.gen_buses = tuple(meta.get("gen_buses", ()))
        if meta.get("n_steps", len(log.frames)) != len(log.frames):
            raise SchemaMismatch(
                f"{path} has {len(log.frames)} rows but its sidecar records {meta['n_steps']} steps"
            )
    return log


def write_run(log: SimulationLog, prefix, case_name: str = "") -> RunArtifact:
    """Write ``<prefix>.csv`` and the ``<prefix>.json`` sidecar."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.parent / (prefix.name + ".csv")
    side_path = prefix.parent / (prefix.name + ".json")
    csv_path.write_text(log_to_csv(log), encoding="utf-8")
    meta = {
        "case": case_name,
        "n_steps": log.n_steps,
        "bus_ids": list(log.bus_ids),
        "gen_buses": list(log.gen_buses),
        "config": log.config.to_dict() if log.config is not None else None,
        "metrics": {
            side: compute_metrics(log, side).to_dict() for side in ("true", "meas")
        },
    }
    side_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return RunArtifact(csv_path, side_path)


def read_sidecar(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def delta_to_csv(delta: RunDelta, hours) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["t", "hour"]
        + [f"dvm_true_{b}" for b in delta.bus_ids]
        + [f"dvm_meas_{b}" for b in delta.bus_ids]
        + ["mean_vm_true_delta", "mean_vm_meas_delta", "losses_delta_mw"]
    )
    for k, t in enumerate(delta.t):
        writer.writerow(
            [str(int(t)), _f(hours[k])]
            + [_f(v) for v in delta.vm_true[k]]
            + [_f(v) for v in delta.vm_meas[k]]
            + [_f(delta.mean_vm_true[k]), _f(delta.mean_vm_meas[k]), _f(delta.losses_mw[k])]
        )
    return buf.getvalue()
