"""Headless figure rendering for simulation traces and batch summaries.

All functions write image files (Agg backend, no GUI): trajectory panels
with dashed lines to the currently assigned tasks, team utility versus
time, and mean team utility across a batch grid.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.pyplot as plt
import numpy as np

from .engine import Mode, SimulationTrace


def _panel(ax, trace: SimulationTrace, upto: int):
    scenario = trace.scenario
    task_pos = scenario.task_positions
    ax.scatter(
        task_pos[:, 0],
        task_pos[:, 1],
        marker="*",
        s=30 + 80 * scenario.rewards,
        c="tab:red",
        zorder=3,
        label="tasks",
    )
    stacked = np.stack(trace.states[: upto + 1])  # (k+1, n, 4)
    for i in range(scenario.n):
        ax.plot(stacked[:, i, 0], stacked[:, i, 1], "-", color="tab:blue", lw=0.7, alpha=0.6)
    current = trace.states[upto]
    ax.scatter(current[:, 0], current[:, 1], s=10, c="tab:blue", zorder=4)
    for i, assignment in enumerate(trace.profiles[upto]):
        if assignment is not None:
            target = task_pos[assignment]
            ax.plot(
                [current[i, 0], target[0]],
                [current[i, 1], target[1]],
                "--",
                color="gray",
                lw=0.6,
                alpha=0.8,
            )
    ax.set_title(f"t = {trace.times[upto]:g}")
    ax.set_aspect("equal")


def plot_trajectories(trace: SimulationTrace, path, panel_times=None) -> None:
    """Three-panel snapshot of the run: start, midpoint, and final time."""
    if panel_times is None:
        last = len(trace.times) - 1
        indices = [0, last // 2, last]
    else:
        times = np.asarray(trace.times)
        indices = [int(np.argmin(np.abs(times - t))) for t in panel_times]
    fig, axes = plt.subplots(1, len(indices), figsize=(4 * len(indices), 4))
    if len(indices) == 1:
        axes = [axes]
    for ax, idx in zip(axes, indices):
        _panel(ax, trace, idx)
    fig.suptitle(f"{trace.mode.value.upper()} / {trace.protocol.value.upper()}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_team_utility(trace: SimulationTrace, path, reference: float | None = None) -> None:
    """Team utility along the run; optional horizontal reference level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if trace.mode is Mode.OLTA and trace.negotiation:
        rounds = [entry[0] for entry in trace.negotiation]
        values = [entry[2] for entry in trace.negotiation]
        ax.plot(rounds, values, lw=1.0)
        ax.set_xlabel("negotiation round")
    else:
        ax.plot(trace.times, trace.team_utilities, lw=1.0)
        ax.set_xlabel("time")
    if reference is not None:
        ax.axhline(reference, color="tab:red", ls="--", lw=1.0, label="open-loop value")
        ax.legend()
    ax.set_ylabel("team utility")
    ax.set_title(f"{trace.mode.value.upper()} / {trace.protocol.value.upper()}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_batch_summary(summary, path) -> None:
    """Mean team utility versus final time, one line per (mode, protocol, range)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    groups: dict = {}
    for entry in summary:
        key = (entry["mode"], entry["protocol"], entry["range"])
        groups.setdefault(key, []).append((entry["tf"], entry["mean_team_utility"]))
    for (mode, protocol, range_limit), points in groups.items():
        points.sort()
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        range_label = "inf" if not np.isfinite(range_limit) else f"{range_limit:g}"
        ax.plot(xs, ys, marker="o", lw=1.2, label=f"{mode.value}/{protocol.value}/r={range_label}")
    ax.set_xlabel("final time")
    ax.set_ylabel("mean team utility")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
