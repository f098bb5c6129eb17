"""Scenario generation, Monte Carlo batches, and file outputs.

Randomness is split into labeled substreams of one per-run seed so that
every cell of a batch grid sharing a run index sees the identical scenario
(paired comparisons across modes and protocols), while negotiation draws
come from a disjoint stream.  Per-run seeds are ``base_seed + run_index``.

Outputs are toolchain-neutral: JSON scenarios, CSV result/summary tables,
and line-oriented CSV trace dumps.  ``results.csv`` and ``summary.csv`` are
byte-deterministic for a given spec and base seed; wall-clock timings go to
a separate ``timings.csv``.  A JSONL journal receives rows as runs
complete, so a crashed batch keeps its finished work.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .engine import EngineConfig, Mode, SimulationTrace, solve
from .model import UNBOUNDED, Scenario, AgentState, Task
from .negotiation import Protocol, ProtocolParams

_SCENARIO_STREAM = 0

DEFAULT_DT = {Protocol.GRM: 0.1, Protocol.SAP: 0.01, Protocol.BETTER_REPLY: 0.1}

RESULT_FIELDS = ("mode", "protocol", "tf", "range", "run_seed", "team_utility", "converged")
TIMING_FIELDS = ("mode", "protocol", "tf", "range", "run_seed", "wall_time")
TRACE_FIELDS = ("time", "agent_id", "px", "py", "vx", "vy", "assignment", "team_utility")


def generate_scenario(n: int, p: int, t_f: float, range_limit: float, seed: int) -> Scenario:
    """Draw a random scenario: positions in [0,1]^2, velocities in
    [-0.1,0.1]^2, task positions in [0,1]^2, rewards and success
    probabilities in [0,1], all i.i.d. uniform and deterministic under
    ``seed``.  ``t_f`` and ``range_limit`` are stamped in, not drawn, so
    scenarios with the same seed share their draws across grid cells.
    """
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), _SCENARIO_STREAM)))
    agent_pos = rng.uniform(0.0, 1.0, size=(n, 2))
    agent_vel = rng.uniform(-0.1, 0.1, size=(n, 2))
    task_pos = rng.uniform(0.0, 1.0, size=(p, 2))
    rewards = rng.uniform(0.0, 1.0, size=p)
    probs = rng.uniform(0.0, 1.0, size=(n, p))
    agents = tuple(AgentState(i, agent_pos[i], agent_vel[i]) for i in range(n))
    tasks = tuple(Task(j, task_pos[j], rewards[j], probs[:, j]) for j in range(p))
    return Scenario(agents=agents, tasks=tasks, t_f=t_f, range_limit=range_limit)


@dataclass
class BatchSpec:
    """A grid of simulation cells, each run ``runs`` times with paired seeds."""

    n: int
    p: int
    t_f_values: tuple
    protocols: tuple
    ranges: tuple  # floats; math.inf for the unconstrained case
    modes: tuple
    runs: int = 100
    base_seed: int = 0
    output_dir: Optional[Path] = None
    dt: dict = field(default_factory=dict)  # per-protocol overrides
    olta_rounds: dict = field(default_factory=dict)
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        self.t_f_values = tuple(float(v) for v in self.t_f_values)
        self.protocols = tuple(
            p if isinstance(p, Protocol) else Protocol.from_name(p) for p in self.protocols
        )
        self.modes = tuple(m if isinstance(m, Mode) else Mode.from_name(m) for m in self.modes)
        self.ranges = tuple(_parse_range(r) for r in self.ranges)
        if self.output_dir is not None:
            self.output_dir = Path(self.output_dir)

    def cells(self) -> list:
        """Deterministic cell order: mode, protocol, t_f, range."""
        return [
            (mode, protocol, t_f, rng_limit)
            for mode in self.modes
            for protocol in self.protocols
            for t_f in self.t_f_values
            for rng_limit in self.ranges
        ]

    def cell_dt(self, protocol: Protocol) -> float:
        return float(self.dt.get(protocol, DEFAULT_DT[protocol]))

    def cell_rounds(self, protocol: Protocol) -> Optional[int]:
        value = self.olta_rounds.get(protocol)
        return None if value is None else int(value)

    @classmethod
    def from_dict(cls, data: dict) -> "BatchSpec":
        def per_protocol(raw) -> dict:
            if raw is None:
                return {}
            if isinstance(raw, dict):
                return {Protocol.from_name(k): v for k, v in raw.items()}
            return {proto: raw for proto in Protocol}

        return cls(
            n=int(data["n"]),
            p=int(data["p"]),
            t_f_values=data["tf"],
            protocols=data["protocol"],
            ranges=data["range"],
            modes=data["mode"],
            runs=int(data.get("runs", 100)),
            base_seed=int(data.get("base_seed", 0)),
            output_dir=data.get("output_dir"),
            dt=per_protocol(data.get("dt")),
            olta_rounds=per_protocol(data.get("olta_rounds")),
            epsilon=data.get("epsilon"),
        )

    @classmethod
    def from_json(cls, path) -> "BatchSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _parse_range(raw) -> float:
    if raw in ("inf", "unbounded", None):
        return UNBOUNDED
    value = float(raw)
    if not value > 0.0:
        raise ValueError(f"range must be positive or 'inf', got {raw}")
    return value


def _format_range(value: float) -> str:
    return "inf" if value == UNBOUNDED else repr(value)


@dataclass
class ResultRow:
    mode: Mode
    protocol: Protocol
    t_f: float
    range_limit: float
    run_seed: int
    team_utility: float
    converged: bool
    wall_time: float

    def result_values(self) -> tuple:
        return (
            self.mode.value,
            self.protocol.value,
            repr(self.t_f),
            _format_range(self.range_limit),
            self.run_seed,
            repr(self.team_utility),
            "true" if self.converged else "false",
        )

    def timing_values(self) -> tuple:
        return (
            self.mode.value,
            self.protocol.value,
            repr(self.t_f),
            _format_range(self.range_limit),
            self.run_seed,
            f"{self.wall_time:.6f}",
        )


def run_cell_once(
    spec: BatchSpec, mode: Mode, protocol: Protocol, t_f: float, range_limit: float, run_seed: int
) -> ResultRow:
    scenario = generate_scenario(spec.n, spec.p, t_f, range_limit, run_seed)
    config = EngineConfig(
        mode=mode,
        dt=spec.cell_dt(protocol),
        epsilon=spec.epsilon,
        olta_rounds=spec.cell_rounds(protocol),
        protocol_params=ProtocolParams(protocol=protocol, rng_seed=run_seed),
    )
    start = time.perf_counter()
    trace = solve(scenario, config)
    elapsed = time.perf_counter() - start
    return ResultRow(
        mode=mode,
        protocol=protocol,
        t_f=t_f,
        range_limit=range_limit,
        run_seed=run_seed,
        team_utility=trace.final_team_utility,
        converged=trace.converged,
        wall_time=elapsed,
    )


def summarize(rows: Sequence[ResultRow]) -> list:
    """Mean team utility per cell, in first-seen cell order."""
    order = []
    groups: dict = {}
    for row in rows:
        key = (row.mode, row.protocol, row.t_f, row.range_limit)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row.team_utility)
    summary = []
    for key in order:
        values = np.asarray(groups[key])
        summary.append(
            {
                "mode": key[0],
                "protocol": key[1],
                "tf": key[2],
                "range": key[3],
                "runs": len(values),
                "mean_team_utility": float(np.sum(values) / len(values)),
            }
        )
    return summary


def write_results_csv(rows: Sequence[ResultRow], path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESULT_FIELDS)
        for row in rows:
            writer.writerow(row.result_values())


def write_timings_csv(rows: Sequence[ResultRow], path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TIMING_FIELDS)
        for row in rows:
            writer.writerow(row.timing_values())


def write_summary_csv(summary: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("mode", "protocol", "tf", "range", "runs", "mean_team_utility"))
        for entry in summary:
            writer.writerow(
                (
                    entry["mode"].value,
                    entry["protocol"].value,
                    repr(entry["tf"]),
                    _format_range(entry["range"]),
                    entry["runs"],
                    f"{entry['mean_team_utility']:.4f}",
                )
            )


def run_batch(spec: BatchSpec, output_dir=None, progress=None):
    """Execute every (cell, run) pair; returns (rows, summary).

    Rows are appended to ``runs.jsonl`` in the output directory as they
    complete; the deterministic ``results.csv``, ``timings.csv``, and
    ``summary.csv`` are written when the grid finishes.
    """
    out = Path(output_dir) if output_dir is not None else spec.output_dir
    if out is None:
        raise ValueError("an output directory is required (spec.output_dir or output_dir)")
    out.mkdir(parents=True, exist_ok=True)

    rows: list = []
    journal_path = out / "runs.jsonl"
    with open(journal_path, "w") as journal:
        for mode, protocol, t_f, range_limit in spec.cells():
            for run_index in range(spec.runs):
                row = run_cell_once(spec, mode, protocol, t_f, range_limit, spec.base_seed + run_index)
                rows.append(row)
                journal.write(
                    json.dumps(
                        {
                            "mode": row.mode.value,
                            "protocol": row.protocol.value,
                            "tf": row.t_f,
                            "range": _format_range(row.range_limit),
                            "run_seed": row.run_seed,
                            "team_utility": row.team_utility,
                            "converged": row.converged,
                            "wall_time": row.wall_time,
                        }
                    )
                    + "\n"
                )
                journal.flush()
            if progress is not None:
                progress(mode, protocol, t_f, range_limit, rows)

    summary = summarize(rows)
    write_results_csv(rows, out / "results.csv")
    write_timings_csv(rows, out / "timings.csv")
    write_summary_csv(summary, out / "summary.csv")
    return rows, summary


def dump_trace(trace: SimulationTrace, path) -> None:
    """Write one line per (stage, agent): positions, velocity, assignment, team utility.

    The null assignment is encoded as -1.  The dump is sufficient to redraw
    trajectory and utility-versus-time figures externally.
    """
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_FIELDS)
        for k, t in enumerate(trace.times):
            states = trace.states[k]
            profile = trace.profiles[k]
            value = repr(trace.team_utilities[k])
            time_str = repr(t)
            for i in range(states.shape[0]):
                assignment = profile[i]
                writer.writerow(
                    (
                        time_str,
                        i,
                        repr(states[i, 0]),
                        repr(states[i, 1]),
                        repr(states[i, 2]),
                        repr(states[i, 3]),
                        -1 if assignment is None else assignment,
                        value,
                    )
                )


def load_trace_csv(path) -> dict:
    """Read a trace dump back into arrays keyed by column name."""
    times = []
    agent_ids = []
    px, py, vx, vy = [], [], [], []
    assignments = []
    utilities = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for record in reader:
            times.append(float(record["time"]))
            agent_ids.append(int(record["agent_id"]))
            px.append(float(record["px"]))
            py.append(float(record["py"]))
            vx.append(float(record["vx"]))
            vy.append(float(record["vy"]))
            assignments.append(int(record["assignment"]))
            utilities.append(float(record["team_utility"]))
    return {
        "time": np.asarray(times),
        "agent_id": np.asarray(agent_ids),
        "px": np.asarray(px),
        "py": np.asarray(py),
        "vx": np.asarray(vx),
        "vy": np.asarray(vy),
        "assignment": np.asarray(assignments),
        "team_utility": np.asarray(utilities),
    }
