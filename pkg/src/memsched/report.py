"""Report serialization and figure rendering.

A simulation report can be written three ways: a human-readable table, a
comma-delimited file whose leading comment lines carry the summary, and
JSON with the full row detail.  The render helpers draw the residency
timeline (scheduled bytes, physical pool use, capacity) and sweep curves
to PNG files next to the delimited output.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .costmodel import mib
from .simulator import SimReport, SweepPoint

_SUMMARY_FIELDS = (
    "net_name", "num_layers", "num_steps", "batch", "pool_capacity_bytes",
    "features", "recompute_policy", "recompute_modes",
    "peak_bytes", "peak_step", "peak_layer", "peak_live_count",
    "peak_working_bytes", "peak_stash_bytes",
    "min_pool_bytes", "baseline_peak_bytes", "liveness_peak_bytes",
    "compute_s", "stall_s", "stall_prefetch_s", "stall_demand_s",
    "stall_backup_s", "transfer_busy_s", "total_s",
    "scheduled_transfer_bytes", "scheduled_transfer_count",
    "demand_transfer_bytes", "demand_transfer_count",
    "cache_hits", "evictions",
    "extra_forward_steps", "planned_extra_forward_steps",
    "pool_high_water_bytes",
)

_ROW_FIELDS = ("index", "layer", "kind", "phase", "resident_bytes",
               "live_count", "pool_used_bytes", "compute_s", "stall_s",
               "transfer_bytes")


def _summary_dict(report: SimReport) -> dict:
    full = asdict(report)
    out = {}
    for name in _SUMMARY_FIELDS:
        value = full[name]
        if isinstance(value, tuple):
            value = list(value)
        out[name] = value
    return out


def to_json(report: SimReport) -> str:
    payload = {
        "summary": _summary_dict(report),
        "selections": [asdict(sel) for sel in report.selections],
        "rows": [asdict(row) for row in report.rows],
    }
    return json.dumps(payload, indent=2) + "\n"


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    if isinstance(value, tuple) or isinstance(value, list):
        return "|".join(str(v) for v in value)
    return str(value)


def to_csv(report: SimReport) -> str:
    lines = [f"# {name}={_fmt(value)}"
             for name, value in _summary_dict(report).items()]
    lines.append(",".join(_ROW_FIELDS))
    for row in report.rows:
        data = asdict(row)
        lines.append(",".join(_fmt(data[f]) for f in _ROW_FIELDS))
    return "\n".join(lines) + "\n"


def to_table(report: SimReport) -> str:
    s = _summary_dict(report)
    lines = [
        f"network {s['net_name']}  layers {s['num_layers']}  "
        f"steps {s['num_steps']}  batch {s['batch']}",
        f"features {s['features']}",
        f"pool {mib(s['pool_capacity_bytes']):.1f} MiB  "
        f"high-water {mib(s['pool_high_water_bytes']):.1f} MiB  "
        f"min schedulable {mib(s['min_pool_bytes']):.1f} MiB",
        f"peak {mib(s['peak_bytes']):.3f} MiB at step {s['peak_step']} "
        f"({s['peak_layer']}), {s['peak_live_count']} tensors live",
        f"  working {mib(s['peak_working_bytes']):.3f} MiB + "
        f"stash {mib(s['peak_stash_bytes']):.3f} MiB",
        f"reference peaks: baseline {mib(s['baseline_peak_bytes']):.3f} "
        f"MiB, liveness {mib(s['liveness_peak_bytes']):.3f} MiB",
        f"time {s['total_s']:.4f}s = compute {s['compute_s']:.4f}s "
        f"+ stall {s['stall_s']:.4f}s "
        f"(transfer engine busy {s['transfer_busy_s']:.4f}s)",
        f"transfers: scheduled {mib(s['scheduled_transfer_bytes']):.3f} MiB "
        f"in {s['scheduled_transfer_count']}, demand "
        f"{mib(s['demand_transfer_bytes']):.3f} MiB "
        f"in {s['demand_transfer_count']}",
    ]
    if s["recompute_policy"]:
        lines.append(
            f"recompute {s['recompute_policy']}: "
            f"{s['extra_forward_steps']} replayed steps "
            f"(planned {s['planned_extra_forward_steps']}), segment modes "
            + ",".join(s["recompute_modes"]))
    if s["cache_hits"] or s["evictions"]:
        lines.append(f"cache: {s['cache_hits']} hits, "
                     f"{s['evictions']} evictions")
    if report.selections:
        lines.append("conv algorithm picks:")
        for sel in report.selections:
            lines.append(
                f"  step {sel.step:>5.1f} {sel.layer_name:<12} "
                f"{sel.phase:<8} {sel.algo:<14} "
                f"ws {mib(sel.workspace_bytes):9.3f} MiB  "
                f"free {mib(sel.free_bytes):9.3f} MiB")
    header = (f"{'index':>7} {'layer':<12} {'phase':<8} "
              f"{'resident MiB':>12} {'pool MiB':>10} {'live':>4} "
              f"{'compute s':>10} {'stall s':>9} {'xfer MiB':>9}")
    lines += ["", header, "-" * len(header)]
    for row in report.rows:
        lines.append(
            f"{row.index:>7.2f} {row.layer:<12} {row.phase:<8} "
            f"{mib(row.resident_bytes):>12.3f} "
            f"{mib(row.pool_used_bytes):>10.3f} {row.live_count:>4} "
            f"{row.compute_s:>10.5f} {row.stall_s:>9.5f} "
            f"{mib(row.transfer_bytes):>9.3f}")
    return "\n".join(lines) + "\n"


FORMATS = ("table", "csv", "json")


def render(report: SimReport, fmt: str) -> str:
    if fmt == "table":
        return to_table(report)
    if fmt == "csv":
        return to_csv(report)
    if fmt == "json":
        return to_json(report)
    raise ValueError(f"unknown report format {fmt!r}")


def sweep_to_csv(points: list[SweepPoint]) -> str:
    fields = ("axis", "value", "peak_bytes", "peak_step", "total_s",
              "compute_s", "stall_s", "scheduled_transfer_bytes",
              "demand_transfer_bytes", "extra_forward_steps",
              "pool_high_water_bytes")
    lines = [",".join(fields)]
    for p in points:
        data = asdict(p)
        lines.append(",".join(_fmt(data[f]) for f in fields))
    return "\n".join(lines) + "\n"


def sweep_to_json(points: list[SweepPoint]) -> str:
    return json.dumps([asdict(p) for p in points], indent=2) + "\n"


def sweep_to_table(points: list[SweepPoint]) -> str:
    header = (f"{'value':>10} {'peak MiB':>10} {'total s':>9} "
              f"{'stall s':>9} {'sched MiB':>10} {'demand MiB':>10} "
              f"{'replays':>7}")
    lines = [f"sweep over {points[0].axis}", header, "-" * len(header)]
    for p in points:
        lines.append(
            f"{p.value:>10} {mib(p.peak_bytes):>10.3f} {p.total_s:>9.4f} "
            f"{p.stall_s:>9.4f} {mib(p.scheduled_transfer_bytes):>10.3f} "
            f"{mib(p.demand_transfer_bytes):>10.3f} "
            f"{p.extra_forward_steps:>7}")
    return "\n".join(lines) + "\n"


def render_sweep(points: list[SweepPoint], fmt: str) -> str:
    if fmt == "table":
        return sweep_to_table(points)
    if fmt == "csv":
        return sweep_to_csv(points)
    if fmt == "json":
        return sweep_to_json(points)
    raise ValueError(f"unknown report format {fmt!r}")


def _use_agg():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_timeline(report: SimReport, stem: Path) -> Path:
    """Draw residency over steps to ``<stem>_timeline.png``."""
    plt = _use_agg()
    xs = [row.index for row in report.rows]
    sched = [mib(row.resident_bytes) for row in report.rows]
    pool = [mib(row.pool_used_bytes) for row in report.rows]
    fig, ax = plt.subplots(figsize=(10, 5))
    ax.plot(xs, sched, label="scheduled resident", lw=1.6)
    ax.plot(xs, pool, label="pool in use", lw=1.0, alpha=0.8)
    ax.axhline(mib(report.pool_capacity_bytes), color="crimson", ls="--",
               lw=1.0, label="pool capacity")
    ax.plot([report.peak_step], [mib(report.peak_bytes)], "kv",
            label=f"peak {mib(report.peak_bytes):.1f} MiB")
    ax.set_xlabel("step")
    ax.set_ylabel("MiB")
    ax.set_title(f"{report.net_name}: features={report.features}, "
                 f"batch={report.batch}")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    out = stem.with_name(stem.name + "_timeline.png")
    fig.tight_layout()
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def render_sweep_plot(points: list[SweepPoint], stem: Path) -> Path:
    """Draw peak and wall time across the sweep to ``<stem>_sweep.png``."""
    plt = _use_agg()
    xs = [p.value for p in points]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(xs, [mib(p.peak_bytes) for p in points], "o-",
            label="peak MiB")
    ax.plot(xs, [mib(p.pool_high_water_bytes) for p in points], "s--",
            label="pool high water MiB", alpha=0.8)
    ax.set_xlabel(points[0].axis)
    ax.set_ylabel("MiB")
    ax2 = ax.twinx()
    ax2.plot(xs, [p.total_s for p in points], "^-", color="seagreen",
             label="total s")
    ax2.set_ylabel("seconds")
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    out = stem.with_name(stem.name + "_sweep.png")
    fig.tight_layout()
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out
