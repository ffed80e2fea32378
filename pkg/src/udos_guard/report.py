"""Figures rendered next to the CSV outputs."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .core import NS_PER_S  # noqa: E402

COLORS = ["#0072b2", "#e69f00", "#009e72", "#d55c00", "#cc79a7", "#56b4e9"]
STYLE = {
    "axes.prop_cycle": matplotlib.cycler(color=COLORS),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
# No creation date in the file, so reruns write identical images.
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return path


def _shade_blocks(ax, blocks, end_s: float) -> None:
    for n, b in enumerate(blocks):
        ax.axvspan(b.blocked_at / NS_PER_S, min(b.expires_at / NS_PER_S, end_s),
                   color="#d55c00", alpha=0.12, lw=0, label="blocked" if n == 0 else None)


def timeline_figure(report, path: str | Path) -> Path:
    """System metrics, monitor latency and per-client connections over one run."""
    path = Path(path)
    ticks = report.ticks
    t = [x.timestamp / NS_PER_S for x in ticks]
    end = t[-1] if t else 0.0
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7, 6.5), sharex=True)
        ax = axes[0]
        ax.plot(t, [x.cpu for x in ticks], label="cpu")
        ax.plot(t, [x.memory for x in ticks], label="memory")
        ax.plot(t, [x.connection_pool for x in ticks], label="connection pool")
        active = [1.0 if x.state.value == "active" else math.nan for x in ticks]
        ax.plot(t, [a * 1.04 for a in active], color="#222222", lw=3, label="watchdog active")
        _shade_blocks(ax, report.blocks, end)
        ax.set_ylim(0, 1.1)
        ax.set_ylabel("fraction")
        ax.legend(loc="upper left", ncol=3, frameon=False)
        ax.set_title(report.scenario.name + (" (mitigation on)" if report.mitigation else " (mitigation off)"))

        ax = axes[1]
        pts = [(x.timestamp / NS_PER_S, x.monitor_latency_ms) for x in ticks if x.monitor_latency_ms is not None]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], color=COLORS[0], marker=".", ms=3)
        _shade_blocks(ax, report.blocks, end)
        ax.set_ylabel("monitor latency (ms)")
        if pts and max(p[1] for p in pts) > 10 * max(min(p[1] for p in pts), 1e-9):
            ax.set_yscale("log")

        ax = axes[2]
        for name, series in report.connections.items():
            if report.workload(name).role != "monitor":
                ax.plot(t, series, label=name)
        _shade_blocks(ax, report.blocks, end)
        ax.set_ylabel("established connections")
        ax.set_xlabel("time (s)")
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
    return _save(fig, path)


def qos_figure(rows: Sequence, path: str | Path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
        for on, label in ((True, "mitigation on"), (False, "mitigation off")):
            sel = [r for r in rows if r.mitigation is on]
            a1.plot([r.clients for r in sel], [r.mean_latency_ms for r in sel], marker="o", label=label)
            a2.plot([r.clients for r in sel], [100 * r.failure_rate for r in sel], marker="o", label=label)
        a1.set_xlabel("concurrent clients")
        a1.set_ylabel("mean latency (ms)")
        a2.set_xlabel("concurrent clients")
        a2.set_ylabel("failed requests (%)")
        a1.legend(frameon=False)
        fig.tight_layout()
    return _save(fig, path)


def threshold_figure(rows: Sequence, path: str | Path) -> Path:
    path = Path(path)
    finite = [r for r in rows if r.threshold is not None]
    with plt.rc_context(STYLE):
        fig, a1 = plt.subplots(figsize=(6, 3.2))
        x = [r.threshold for r in finite]
        a1.plot(x, [r.mean_latency_ms for r in finite], marker="o", color=COLORS[0], label="monitor latency")
        a1.set_xlabel("application-layer instruction threshold")
        a1.set_ylabel("monitor latency (ms)", color=COLORS[0])
        a2 = a1.twinx()
        a2.plot(x, [100 * r.drop_rate for r in finite], marker="s", color=COLORS[3], label="drop rate")
        a2.set_ylabel("load-client drops (%)", color=COLORS[3])
        a2.spines["right"].set_visible(True)
        off = [r for r in rows if r.threshold is None]
        if off:
            a1.axhline(off[0].mean_latency_ms, color=COLORS[0], ls="--", lw=0.8)
            a1.text(x[-1] if x else 0, off[0].mean_latency_ms, " no threshold", va="bottom", ha="right", fontsize=7)
        fig.tight_layout()
    return _save(fig, path)
