"""Comparison reports over run traces: a delimited table of
time-to-accuracy, traffic, and energy per configuration, rendered figures
alongside it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .engine import RoundTrace, time_to_accuracy
from .io import read_trace

DEFAULT_TARGETS = (0.6, 0.7, 0.8, 0.9)


@dataclass
class TraceSet:
    label: str
    rows: list[RoundTrace]


def label_for(path: str | Path) -> str:
    path = Path(path)
    return path.parent.name if path.stem == "trace" and path.parent.name else path.stem


def load_traces(paths: Sequence[str | Path]) -> list[TraceSet]:
    out = []
    for p in paths:
        p = Path(p)
        if not p.exists():
            raise FileNotFoundError(f"missing trace file: {p}")
        out.append(TraceSet(label=label_for(p), rows=read_trace(p)))
    return out


def build_report(traces: Sequence[TraceSet], targets: Sequence[float] = DEFAULT_TARGETS):
    """Rows of final/best accuracy, time-to-target, totals. Speedup columns
    are the first trace's time-to-target divided by this trace's, so the
    first path passed acts as the baseline."""
    header = ["config", "rounds", "final_test_acc", "best_test_acc"]
    for t in targets:
        header += [f"time_to_{t:g}", f"speedup_{t:g}"]
    header += ["sim_time", "traffic_bytes", "energy", "final_pseudo"]
    baseline = traces[0] if traces else None
    rows = []
    for ts in traces:
        rec: list = [ts.label, len(ts.rows)]
        final = ts.rows[-1].test_acc if ts.rows else float("nan")
        best = max((r.test_acc for r in ts.rows), default=float("nan"))
        rec += [final, best]
        for t in targets:
            mine = time_to_accuracy(ts.rows, t)
            base = time_to_accuracy(baseline.rows, t) if baseline else None
            rec.append("" if mine is None else mine)
            rec.append("" if (mine is None or base is None) else base / mine)
        rec.append(ts.rows[-1].sim_time if ts.rows else 0.0)
        rec.append(sum(r.traffic_bytes for r in ts.rows))
        rec.append(sum(r.energy for r in ts.rows))
        rec.append(ts.rows[-1].total_pseudo if ts.rows else 0)
        rows.append(rec)
    return header, rows


def write_report_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def render_figures(traces: Sequence[TraceSet], out_dir: str | Path) -> list[Path]:
    """Accuracy-over-simulated-time curves and total traffic/energy bars."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for ts in traces:
        ax.plot([r.sim_time for r in ts.rows], [r.test_acc for r in ts.rows], label=ts.label)
    ax.set_xlabel("simulated time")
    ax.set_ylabel("test accuracy")
    ax.set_title("Time to accuracy")
    ax.grid(True, alpha=0.3)
    ax.legend()
    p = out / "accuracy_vs_time.png"
    fig.savefig(p, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(p)

    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    labels = [ts.label for ts in traces]
    traffic = [sum(r.traffic_bytes for r in ts.rows) for ts in traces]
    energy = [sum(r.energy for r in ts.rows) for ts in traces]
    for ax, values, title in ((axes[0], traffic, "total traffic (bytes)"), (axes[1], energy, "total energy")):
        ax.bar(range(len(labels)), values)
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
        ax.set_title(title)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    p = out / "cost_breakdown.png"
    fig.savefig(p, dpi=150)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for ts in traces:
        ax.plot([r.round for r in ts.rows], [r.total_pseudo for r in ts.rows], label=ts.label)
    ax.set_xlabel("round")
    ax.set_ylabel("pseudo labels held")
    ax.set_title("Pseudo-label growth")
    ax.grid(True, alpha=0.3)
    ax.legend()
    p = out / "pseudo_labels.png"
    fig.savefig(p, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(p)
    return written
