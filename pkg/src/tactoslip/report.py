"""Aggregate repeated run reports into per-scenario mean ± std rows and
render companion figures."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError
from .fsm import RunReport

COLUMNS = ("Experiment", "Duration [s]", "% Compression", "# Slippages")

# background colours for the state timeline
STATE_COLORS = {
    "S1": "#d9d9d9",
    "S2": "#9ecae1",
    "S3": "#c7e9c0",
    "S4": "#fcbba1",
    "S5": "#fdd0a2",
    "S6": "#fee391",
    "S7": "#dadaeb",
}


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Mean and population (divide-by-n) standard deviation."""
    if not values:
        raise ValueError("no values")
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def fmt_pm(values: Sequence[float]) -> str:
    mean, std = mean_std(values)
    return f"{mean:.2f} ± {std:.2f}"


@dataclass(frozen=True)
class SummaryRow:
    scenario: str
    runs: int
    duration: tuple[float, float]
    compression: tuple[float, float]
    slips: tuple[float, float]
    successes: int

    def cells(self) -> list[str]:
        return [
            self.scenario,
            f"{self.duration[0]:.2f} ± {self.duration[1]:.2f}",
            f"{self.compression[0]:.2f} ± {self.compression[1]:.2f}",
            f"{self.slips[0]:.2f} ± {self.slips[1]:.2f}",
        ]


def load_reports(paths: Iterable[str | os.PathLike[str]]) -> list[RunReport]:
    reports = []
    for path in paths:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot load run report {path}: {exc}") from None
        reports.append(RunReport.from_dict(data))
    return reports


def summarize(reports: Iterable[RunReport]) -> list[SummaryRow]:
    """One row per scenario, rows sorted by scenario name.

    Values within a group are sorted before averaging so the output does not
    depend on input order.
    """
    groups: dict[str, list[RunReport]] = {}
    for r in reports:
        groups.setdefault(r.scenario or "unnamed", []).append(r)
    rows = []
    for name in sorted(groups):
        group = groups[name]
        rows.append(
            SummaryRow(
                scenario=name,
                runs=len(group),
                duration=mean_std(sorted(r.duration_s for r in group)),
                compression=mean_std(sorted(r.compression_pct for r in group)),
                slips=mean_std(sorted(float(r.slip_count) for r in group)),
                successes=sum(r.outcome.value == "Success" for r in group),
            )
        )
    return rows


def format_table(rows: Sequence[SummaryRow], fmt: str = "table") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([*COLUMNS, "Runs", "Successes"])
        for row in rows:
            writer.writerow([*row.cells(), row.runs, row.successes])
        return buf.getvalue()
    if fmt != "table":
        raise ConfigurationError(f"unknown table format {fmt!r}")
    body = [list(COLUMNS)] + [row.cells() for row in rows]
    widths = [max(len(r[i]) for r in body) for i in range(len(COLUMNS))]
    lines = []
    for k, cells in enumerate(body):
        lines.append("| " + " | ".join(c.ljust(wd) for c, wd in zip(cells, widths)) + " |")
        if k == 0:
            lines.append("|" + "|".join("-" * (wd + 2) for wd in widths) + "|")
    return "\n".join(lines) + "\n"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_summary(rows: Sequence[SummaryRow], path: str | os.PathLike[str]) -> Path:
    """Bar chart of the three aggregated metrics with std error bars."""
    plt = _pyplot()
    names = [r.scenario for r in rows]
    metrics = [
        ("Duration [s]", [r.duration for r in rows]),
        ("% Compression", [r.compression for r in rows]),
        ("# Slippages", [r.slips for r in rows]),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    for ax, (label, stats) in zip(axes, metrics):
        ax.bar(range(len(names)), [m for m, _ in stats], yerr=[s for _, s in stats],
               color="#6baed6", edgecolor="k", linewidth=0.5, capsize=3)
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
        ax.set_title(label, fontsize=10)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_state_timeline(report: RunReport, path: str | os.PathLike[str], dt: float | None = None) -> Path:
    """Shade each controller state over time and mark detection events."""
    plt = _pyplot()
    if dt is None:
        dt = report.duration_s / report.duration_steps if report.duration_steps else 1.0
    fig, ax = plt.subplots(figsize=(9, 2.2))
    trace = report.state_trace
    end = report.duration_steps
    for (start, label), nxt in zip(trace, trace[1:] + [(end, "")]):
        if label in STATE_COLORS:
            ax.axvspan(start * dt, nxt[0] * dt, color=STATE_COLORS[label], lw=0)
    for ev in report.events:
        # event t counts frames from the start of calibration
        x = (ev["t"] + 1 - report.calibration_frames) * dt
        ax.axvline(x, color="k" if ev["kind"] == "Touch" else "r", lw=0.8)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in STATE_COLORS.values()]
    ax.legend(handles, list(STATE_COLORS), ncol=7, fontsize=7, loc="upper center",
              bbox_to_anchor=(0.5, 1.35), frameon=False)
    ax.set_xlim(0, max(end * dt, dt))
    ax.set_yticks([])
    ax.set_xlabel("time [s]")
    ax.set_title(f"{report.scenario} seed={report.seed} outcome={report.outcome.value}", fontsize=9, y=1.3)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def write_figures(reports: Sequence[RunReport], outdir: str | os.PathLike[str]) -> list[Path]:
    """Summary bar chart plus one state timeline per scenario (first run seen)."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [plot_summary(summarize(reports), outdir / "summary.png")]
    seen: set[str] = set()
    for r in sorted(reports, key=lambda r: (r.scenario or "", r.seed if r.seed is not None else -1)):
        name = r.scenario or "unnamed"
        if name in seen:
            continue
        seen.add(name)
        written.append(plot_state_timeline(r, outdir / f"timeline_{name}.png"))
    return written
