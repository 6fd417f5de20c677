"""Dependency-free SVG charts for simulation logs.

Every chart is a pure function of its input logs, so identical inputs give
byte-identical SVG. The first log is the attacked run; an optional second
one is the baseline.
"""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .attacks import AttackKind
from .metrics import rms_deviation
from .simulator import SimulationLog, detect_anomalies

__all__ = ["PlotError", "UnknownKind", "UnknownBus", "EmptyInput", "PLOT_KINDS", "render"]

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"]
SPAN_FILL = {AttackKind.DOS: "#fdd49e", AttackKind.DOD: "#fcbba1", AttackKind.FDI: "#c6dbef"}
MID_COLOR = "#f7f7f7"

WIDTH = 860
PANEL_H = 240
LEFT, RIGHT, TOP, BOTTOM = 70, 150, 36, 40


class PlotError(ValueError):
    pass


class UnknownKind(PlotError):
    pass


class UnknownBus(PlotError):
    pass


class EmptyInput(PlotError):
    pass


def _n(x: float) -> str:
    return f"{x:.2f}"


class _Canvas:
    def __init__(self, n_panels: int, title: str):
        self.height = n_panels * (PANEL_H + TOP + BOTTOM)
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
            f'height="{self.height}" viewBox="0 0 {WIDTH} {self.height}" '
            'font-family="sans-serif" font-size="11">',
            f"<title>{escape(title)}</title>",
            f'<rect x="0" y="0" width="{WIDTH}" height="{self.height}" fill="white"/>',
        ]

    def panel(self, index: int, xlim, ylim, title: str, ylabel: str, yticks=True) -> "_Panel":
        y0 = index * (PANEL_H + TOP + BOTTOM) + TOP
        return _Panel(self, LEFT, y0, WIDTH - LEFT - RIGHT, PANEL_H, xlim, ylim, title, ylabel,
                      yticks)

    def add(self, s: str):
        self.parts.append(s)

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>", ""])


class _Panel:
    def __init__(self, canvas, x, y, w, h, xlim, ylim, title, ylabel, yticks=True):
        self.c, self.x, self.y, self.w, self.h = canvas, x, y, w, h
        lo, hi = ylim
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        self.xlim, self.ylim = xlim, (lo, hi)
        canvas.add(f'<g class="panel"><text x="{_n(x)}" y="{_n(y - 10)}" font-size="13">'
                   f"{escape(title)}</text>")
        canvas.add(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" '
                   'fill="none" stroke="#444"/>')
        for frac in (0.0, 0.5, 1.0) if yticks else ():
            val = lo + frac * (hi - lo)
            yy = self.sy(val)
            canvas.add(f'<text x="{_n(x - 6)}" y="{_n(yy + 4)}" text-anchor="end">{val:.4g}</text>')
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            val = xlim[0] + frac * (xlim[1] - xlim[0])
            canvas.add(f'<text x="{_n(self.sx(val))}" y="{_n(y + h + 14)}" '
                       f'text-anchor="middle">{val:.0f}</text>')
        canvas.add(f'<text x="{_n(x + w / 2)}" y="{_n(y + h + 30)}" text-anchor="middle">timestep</text>')
        canvas.add(f'<text transform="translate({_n(x - 52)},{_n(y + h / 2)}) rotate(-90)" '
                   f'text-anchor="middle">{escape(ylabel)}</text></g>')

    def sx(self, v):
        lo, hi = self.xlim
        return self.x + (v - lo) / (hi - lo if hi > lo else 1.0) * self.w

    def sy(self, v):
        lo, hi = self.ylim
        v = min(max(v, lo), hi)
        return self.y + self.h - (v - lo) / (hi - lo) * self.h

    def line(self, xs, ys, color, label="", dashed=False, cls="series"):
        pts = " ".join(f"{_n(self.sx(a))},{_n(self.sy(b))}" for a, b in zip(xs, ys)
                       if np.isfinite(b))
        dash = ' stroke-dasharray="5,3"' if dashed else ""
        self.c.add(f'<polyline class="{cls}" data-label="{escape(label)}" points="{pts}" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')

    def step_line(self, xs, ys, color, label="", dashed=False):
        sx, sy = [], []
        for k, (a, b) in enumerate(zip(xs, ys)):
            nxt = xs[k + 1] if k + 1 < len(xs) else a + 1
            sx += [a, nxt]
            sy += [b, b]
        self.line(sx, sy, color, label, dashed)

    def hrule(self, value, label):
        yy = self.sy(value)
        self.c.add(f'<line class="band" x1="{_n(self.x)}" y1="{_n(yy)}" x2="{_n(self.x + self.w)}" '
                   f'y2="{_n(yy)}" stroke="#555" stroke-dasharray="6,4"/>')
        self.c.add(f'<text x="{_n(self.x + self.w - 4)}" y="{_n(yy - 3)}" text-anchor="end" '
                   f'fill="#555">{escape(label)}</text>')

    def span(self, start, end, kind):
        x0, x1 = self.sx(start), self.sx(end + 1)
        self.c.add(f'<rect class="attack-span" data-kind="{kind.label}" x="{_n(x0)}" '
                   f'y="{_n(self.y)}" width="{_n(x1 - x0)}" height="{_n(self.h)}" '
                   f'fill="{SPAN_FILL[kind]}" fill-opacity="0.55"/>')

    def marker(self, xv, yv, color):
        self.c.add(f'<circle class="anomaly" cx="{_n(self.sx(xv))}" cy="{_n(self.sy(yv))}" r="3.5" '
                   f'fill="none" stroke="{color}" stroke-width="1.5"/>')

    def legend(self, entries):
        x0 = self.x + self.w + 10
        for k, (label, color, dashed) in enumerate(entries):
            yy = self.y + 8 + 14 * k
            dash = ' stroke-dasharray="5,3"' if dashed else ""
            self.c.add(f'<line x1="{_n(x0)}" y1="{_n(yy)}" x2="{_n(x0 + 20)}" '
                       f'y2="{_n(yy)}" stroke="{color}" stroke-width="2"{dash}/>')
            self.c.add(f'<text x="{_n(x0 + 24)}" y="{_n(yy + 4)}">{escape(label)}</text>')

    def note(self, lines):
        x0 = self.x + self.w + 10
        for k, text in enumerate(lines):
            self.c.add(f'<text x="{_n(x0)}" y="{_n(self.y + 12 + 14 * k)}">{escape(text)}</text>')


def attack_spans(log: SimulationLog):
    """Maximal runs of each attack bit as ``(start, end, kind)``, inclusive."""
    masks = log.column("attack_mask").astype(int)
    spans = []
    for kind in AttackKind:
        on = (masks & int(kind)) != 0
        t = 0
        while t < len(on):
            if on[t]:
                start = t
                while t + 1 < len(on) and on[t + 1]:
                    t += 1
                spans.append((start, t, kind))
            t += 1
    return sorted(spans, key=lambda s: (s[0], int(s[2])))


def _vband(log: SimulationLog):
    return log.config.vband if log.config is not None else (0.95, 1.05)


def _steps(log):
    return log.column("t").astype(float)


def _xlim(log):
    return (0.0, float(log.n_steps))


def _limits(*arrays, pad=0.05, include=()):
    vals = np.concatenate([np.ravel(a) for a in arrays] + [np.asarray(include, dtype=float)])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return (0.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    margin = (hi - lo) * pad or 0.01
    return lo - margin, hi + margin


def _vm(log, side):
    return log.column("vm_meas" if side == "meas" else "vm_true")


def _bus_columns(log, buses):
    ids = list(log.bus_ids)
    cols = []
    for b in buses:
        if b not in ids:
            raise UnknownBus(f"bus {b} is not in the log (buses: {ids})")
        cols.append(ids.index(b))
    return cols


def _spans_on(panel, log):
    for start, end, kind in attack_spans(log):
        panel.span(start, end, kind)


def plot_voltages(logs, buses=None, side="true"):
    attacked = logs[0]
    buses = list(buses) if buses else list(attacked.bus_ids)
    cols = _bus_columns(attacked, buses)
    sides = ("true", "meas") if side == "both" else (side,)
    vmin, vmax = _vband(attacked)
    all_v = [_vm(lg, s)[:, cols] for lg in logs for s in sides]
    ylim = _limits(*all_v, include=(vmin, vmax))
    titles = ["Selected bus voltages (attacked)", "Selected bus voltages (baseline)"]

    cv = _Canvas(len(logs), "Bus voltages")
    for p, log in enumerate(logs):
        panel = cv.panel(p, _xlim(log), ylim, titles[p] if len(logs) > 1 else "Selected bus voltages",
                         "|V| (p.u.)")
        if p == 0:
            _spans_on(panel, log)
        panel.hrule(vmin, f"{vmin:g}")
        panel.hrule(vmax, f"{vmax:g}")
        entries = []
        for s in sides:
            V = _vm(log, s)
            for k, (b, col) in enumerate(zip(buses, cols)):
                color = PALETTE[k % len(PALETTE)]
                label = f"bus {b}" + (f" ({s})" if len(sides) > 1 else "")
                panel.line(_steps(log), V[:, col], color, label, dashed=(s == "meas"))
                entries.append((label, color, s == "meas"))
        panel.legend(entries)
    return cv.render()


def _sequential(v, lo, hi):
    # light yellow -> teal -> dark blue
    anchors = np.array([[255, 255, 204], [65, 182, 196], [37, 52, 148]], dtype=float)
    f = 0.5 if hi - lo < 1e-15 else (min(max(v, lo), hi) - lo) / (hi - lo)
    pos = f * (len(anchors) - 1)
    i = min(int(pos), len(anchors) - 2)
    rgb = anchors[i] + (anchors[i + 1] - anchors[i]) * (pos - i)
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def _diverging(v, limit):
    if limit <= 0 or v == 0 or not np.isfinite(v):
        return MID_COLOR
    f = max(-1.0, min(1.0, v / limit))
    mid = np.array([247, 247, 247], dtype=float)
    end = np.array([178, 24, 43] if f > 0 else [33, 102, 172], dtype=float)
    rgb = mid + (end - mid) * abs(f)
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def _heat_panel(cv, index, log, M, title, color_of, note):
    n_steps, n_bus = M.shape
    panel = cv.panel(index, _xlim(log), (0.0, float(n_bus)), title, "bus", yticks=False)
    panel.note(note)
    cw = panel.w / n_steps
    ch = panel.h / n_bus
    cv.add('<g class="heatmap" shape-rendering="crispEdges">')
    for j in range(n_bus):
        y = panel.y + j * ch
        for t in range(n_steps):
            cv.add(f'<rect class="cell" x="{_n(panel.x + t * cw)}" y="{_n(y)}" '
                   f'width="{_n(cw + 0.5)}" height="{_n(ch + 0.5)}" fill="{color_of(M[t, j])}"/>')
        cv.add(f'<text x="{_n(panel.x - 4)}" y="{_n(y + ch / 2 + 4)}" text-anchor="end">'
               f"{log.bus_ids[j]}</text>")
    cv.add("</g>")


def plot_heatmap(logs, buses=None, side="true"):
    cols = _bus_columns(logs[0], buses) if buses else list(range(len(logs[0].bus_ids)))
    mats = [_vm(lg, "meas" if side == "meas" else "true")[:, cols] for lg in logs]
    lo, hi = _limits(*mats, pad=0.0)
    n_panels = 3 if len(logs) == 2 else 1
    cv = _Canvas(n_panels, "Voltage heatmap")
    names = ["attacked", "baseline"]
    for p, M in enumerate(mats):
        title = f"|V| {names[p]} (p.u.)" if len(logs) > 1 else "|V| (p.u.)"
        _heat_panel(cv, p, logs[p], M, title, lambda v: _sequential(v, lo, hi),
                    [f"light: {lo:.4f}", f"dark: {hi:.4f}"])
    if len(logs) == 2:
        D = mats[0] - mats[1]
        limit = float(np.nanmax(np.abs(D))) if D.size else 0.0
        _heat_panel(cv, 2, logs[0], D, "delta (attacked - baseline)",
                    lambda v: _diverging(v, limit),
                    [f"red: +{limit:.3g} p.u.", f"blue: -{limit:.3g} p.u.", "white: 0"])
    return cv.render()


def plot_rms(logs, threshold=0.005):
    series = [[rms_deviation(v) for v in lg.column("vm_true")] for lg in logs]
    cv = _Canvas(1, "RMS voltage deviation")
    panel = cv.panel(0, _xlim(logs[0]), _limits(*series), "RMS voltage deviation from 1 p.u.",
                     "RMS dev (p.u.)")
    _spans_on(panel, logs[0])
    labels = ["attacked", "baseline"]
    for k, s in enumerate(series):
        panel.line(_steps(logs[k]), s, PALETTE[k], labels[k], dashed=k == 1)
    if len(logs) == 2:
        for t in detect_anomalies(logs[0], logs[1], threshold):
            panel.marker(float(t), series[0][t], PALETTE[1])
    panel.legend([(labels[k], PALETTE[k], k == 1) for k in range(len(series))])
    return cv.render()


def plot_timeline(logs):
    log = logs[0]
    cv = _Canvas(2, "Attack timeline")
    top = cv.panel(0, _xlim(log), (0.0, 7.0), "Attack bitmask (1 = DoS, 2 = DoD, 4 = FDI)", "mask")
    top.step_line(_steps(log), log.column("attack_mask"), PALETTE[0], "attack mask")
    means = [lg.column("vm_true").mean(axis=1) for lg in logs]
    bottom = cv.panel(1, _xlim(log), _limits(*means), "Mean system voltage", "mean |V| (p.u.)")
    _spans_on(bottom, log)
    labels = ["attacked", "baseline"]
    for k, m in enumerate(means):
        bottom.line(_steps(logs[k]), m, PALETTE[k], labels[k], dashed=k == 1)
    bottom.legend([(labels[k], PALETTE[k], k == 1) for k in range(len(means))])
    return cv.render()


def plot_balance(logs):
    log = logs[0]
    cv = _Canvas(2, "System power balance")
    gen = [lg.column("total_gen_mw") for lg in logs]
    load = [lg.column("total_load_mw") for lg in logs]
    loss = [lg.column("losses_mw") for lg in logs]
    top = cv.panel(0, _xlim(log), _limits(*gen, *load), "Total generation and load", "MW")
    _spans_on(top, log)
    bottom = cv.panel(1, _xlim(log), _limits(*loss), "System losses", "MW")
    _spans_on(bottom, log)
    entries = []
    for k, lg in enumerate(logs):
        run_name = "attacked" if k == 0 else "baseline"
        top.line(_steps(lg), gen[k], PALETTE[0], f"generation ({run_name})", dashed=k == 1)
        top.line(_steps(lg), load[k], PALETTE[2], f"load ({run_name})", dashed=k == 1)
        bottom.line(_steps(lg), loss[k], PALETTE[1], f"losses ({run_name})", dashed=k == 1)
        entries += [(f"generation ({run_name})", PALETTE[0], k == 1),
                    (f"load ({run_name})", PALETTE[2], k == 1)]
    top.legend(entries)
    return cv.render()


def _gen_labels(log):
    if log.gen_buses:
        return [f"gen {k + 1} (bus {b})" for k, b in enumerate(log.gen_buses)]
    return [f"gen {k + 1}" for k in range(log.n_gens)]


def plot_genpq(logs):
    log = logs[0]
    cv = _Canvas(2, "Generator P/Q")
    P = [lg.column("pg") for lg in logs]
    Q = [lg.column("qg") for lg in logs]
    top = cv.panel(0, _xlim(log), _limits(*P), "Generator active power", "P (MW)")
    bottom = cv.panel(1, _xlim(log), _limits(*Q), "Generator reactive power", "Q (MVAr)")
    _spans_on(top, log)
    _spans_on(bottom, log)
    labels = _gen_labels(log)
    for k, lg in enumerate(logs):
        for g in range(lg.n_gens):
            color = PALETTE[g % len(PALETTE)]
            top.line(_steps(lg), P[k][:, g], color, labels[g], dashed=k == 1)
            bottom.line(_steps(lg), Q[k][:, g], color, labels[g], dashed=k == 1)
    top.legend([(lab, PALETTE[g % len(PALETTE)], False) for g, lab in enumerate(labels)])
    return cv.render()


def plot_switching(logs):
    log = logs[0]
    cv = _Canvas(1, "PV to PQ switching")
    panel = cv.panel(0, _xlim(log), (-0.1, 2.6), "PV->PQ switching active (offset per run)", "indicator")
    _spans_on(panel, log)
    labels = ["attacked", "baseline"]
    for k, lg in enumerate(logs):
        ind = (lg.column("pvpq_switch_count") > 0).astype(float) + 1.4 * (1 - k)
        panel.step_line(_steps(lg), ind, PALETTE[k], labels[k])
    panel.legend([(labels[k], PALETTE[k], False) for k in range(len(logs))])
    return cv.render()


PLOT_KINDS = {
    "voltages": plot_voltages,
    "heatmap": plot_heatmap,
    "rms": plot_rms,
    "timeline": plot_timeline,
    "balance": plot_balance,
    "genpq": plot_genpq,
    "switching": plot_switching,
}


def render(kind: str, logs, buses=None, side="true", threshold=0.005) -> str:
    """Render one chart kind from one or two logs (attacked first)."""
    if kind not in PLOT_KINDS:
        raise UnknownKind(f"unknown plot kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    logs = list(logs)
    if not logs or any(lg.n_steps == 0 for lg in logs):
        raise EmptyInput("no telemetry to plot")
    if len(logs) > 2:
        raise PlotError("at most two logs (attacked, baseline) can be plotted")
    if side not in ("true", "meas", "both"):
        raise PlotError(f"side must be true, meas or both, got {side!r}")
    if kind == "voltages":
        return plot_voltages(logs, buses, side)
    if buses and kind != "heatmap":
        _bus_columns(logs[0], buses)
    if kind == "heatmap":
        return plot_heatmap(logs, buses, side)
    if kind == "rms":
        return plot_rms(logs, threshold)
    return PLOT_KINDS[kind](logs)
