"""Evaluation rows, trajectory CSVs and deterministic SVG plots."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import astuple, dataclass, fields

import numpy as np

TRACE_FIELDS = ("t", "q1", "q2", "q1d", "q2d", "tau1", "tau2", "tip_x", "tip_y", "tip_error",
                "reward")


@dataclass(frozen=True)
class ReportRow:
    task: str
    reason: str
    target_time_s: float
    target_error_cm: float
    tracking_error_cm: float
    max_torque_nm: float

    def __post_init__(self):
        for f in fields(self)[2:]:
            v = getattr(self, f.name)
            if not (v >= 0 or math.isnan(v)):
                raise ValueError(f"{f.name} must be nonnegative")


def trace_array(trace) -> np.ndarray:
    """Recorded env trace as an (N, 11) float array (copy)."""
    return np.array(trace, dtype=float).reshape(-1, len(TRACE_FIELDS))


def summarize(task_id: str, reason: str, trace, params, policy_dt: float) -> ReportRow:
    """One row from a recorded episode; never modifies ``trace``."""
    from .env import tip_positions

    T = trace_array(trace)
    q, qref, tau = T[:, 1:3], T[:, 3:5], T[:, 5:7]
    tip = T[:, 7:9]
    ref_tip = tip_positions(qref, params)[:, :2]
    tracking = float(np.sqrt(np.mean(np.sum((tip - ref_tip) ** 2, axis=1)))) if len(T) else 0.0
    steps = int(round(T[-1, 0] / policy_dt)) if len(T) else 0
    return ReportRow(
        task=task_id,
        reason=reason,
        target_time_s=steps * policy_dt if reason == "reached" else math.nan,
        target_error_cm=100.0 * float(T[-1, 9]) if len(T) else math.nan,
        tracking_error_cm=100.0 * tracking,
        max_torque_nm=float(np.max(np.abs(tau))) if len(T) else 0.0,
    )


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f.name for f in fields(ReportRow)])
        for r in rows:
            w.writerow([_fmt(v) for v in astuple(r)])


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for row in trace:
            w.writerow([repr(float(v)) for v in row])


def read_trace(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def format_table(rows) -> str:
    head = f"{'task':<8}{'reason':<11}{'time [s]':>10}{'err [cm]':>10}{'track [cm]':>12}" \
           f"{'max tau [Nm]':>14}"
    lines = [head]
    for r in rows:
        lines.append(f"{r.task:<8}{r.reason:<11}{r.target_time_s:>10.3f}{r.target_error_cm:>10.2f}"
                     f"{r.tracking_error_cm:>12.3f}{r.max_torque_nm:>14.1f}")
    return "\n".join(lines)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "reachctl"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt
    return plt


def plot_traces(traces: dict, out_dir, threshold: float = 0.04):
    """Tip error and joint torques vs. time, one curve per task.  Returns file paths."""
    plt = _pyplot()
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, tr in traces.items():
        T = trace_array(tr)
        ax.plot(T[:, 0], 100 * T[:, 9], label=name, lw=1)
    ax.axhline(100 * threshold, color="k", ls=":", lw=0.8)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("tip error [cm]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    paths.append(os.path.join(out_dir, "tip_error.svg"))
    fig.savefig(paths[-1], format="svg", metadata={"Date": None})
    plt.close(fig)

    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for name, tr in traces.items():
        T = trace_array(tr)
        for j, ax in enumerate(axes):
            ax.plot(T[:, 0], T[:, 5 + j], label=name, lw=1)
    for j, ax in enumerate(axes):
        ax.set_ylabel(f"tau{j + 1} [N m]")
    axes[-1].set_xlabel("time [s]")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    paths.append(os.path.join(out_dir, "torque.svg"))
    fig.savefig(paths[-1], format="svg", metadata={"Date": None})
    plt.close(fig)
    return paths


def plot_step(t, curves: dict, path, amplitude: float):
    """Joint displacement vs. time for controller comparisons."""
    plt = _pyplot()
    fig, axes = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for name, y in curves.items():
        for j, ax in enumerate(axes):
            ax.plot(t, y[:, j], label=name, lw=1)
    for j, ax in enumerate(axes):
        ax.axhline(amplitude, color="k", ls=":", lw=0.8)
        ax.set_ylabel(f"q{j + 1} - q{j + 1}(0) [rad]")
    axes[-1].set_xlabel("time [s]")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
