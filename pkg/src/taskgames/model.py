"""Domain types for agents, tasks, assignments, and scenarios.

An assignment is a task id or ``None`` (the null assignment).  A profile is
one assignment per agent.  All types are immutable after construction and
safe to share across concurrent simulation runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

Assignment = Optional[int]
AssignmentProfile = tuple  # tuple[Assignment, ...], one entry per agent

UNBOUNDED = math.inf


def _vec2(value, name: str) -> np.ndarray:
    arr = np.array(value, dtype=np.float64)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a 2-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {arr}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class AgentState:
    """Planar position/velocity of one agent, tagged with its index."""

    agent_id: int
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        if self.agent_id < 0:
            raise ValueError(f"agent_id must be nonnegative, got {self.agent_id}")
        object.__setattr__(self, "position", _vec2(self.position, "position"))
        object.__setattr__(self, "velocity", _vec2(self.velocity, "velocity"))


@dataclass(frozen=True, eq=False)
class Task:
    """A target location with a nominal reward and per-agent success probabilities.

    ``success_prob[i]`` is the probability that agent ``i`` completes this
    task if assigned to it.  The target velocity is implicitly zero: plans
    end in a soft landing on ``target_position``.
    """

    task_id: int
    target_position: np.ndarray
    nominal_reward: float
    success_prob: np.ndarray

    def __post_init__(self):
        if self.task_id < 0:
            raise ValueError(f"task_id must be nonnegative, got {self.task_id}")
        object.__setattr__(self, "target_position", _vec2(self.target_position, "target_position"))
        object.__setattr__(self, "nominal_reward", float(self.nominal_reward))
        if not (self.nominal_reward >= 0.0):
            raise ValueError(f"nominal_reward must be >= 0, got {self.nominal_reward}")
        probs = np.array(self.success_prob, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("success_prob must be a 1-d vector")
        if not np.all((probs >= 0.0) & (probs <= 1.0)):
            raise ValueError("success_prob entries must lie in [0, 1]")
        probs.flags.writeable = False
        object.__setattr__(self, "success_prob", probs)


@dataclass(frozen=True, eq=False)
class Scenario:
    """A complete problem instance: agents, tasks, final time, range limit.

    ``range_limit`` is the assignment radius (an agent may only be assigned
    tasks within that Euclidean distance of its position); ``math.inf``
    means unconstrained.
    """

    agents: tuple
    tasks: tuple
    t_f: float
    range_limit: float = UNBOUNDED

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "t_f", float(self.t_f))
        object.__setattr__(self, "range_limit", float(self.range_limit))
        if len(self.agents) < 1 or len(self.tasks) < 1:
            raise ValueError("a scenario needs at least one agent and one task")
        if not self.t_f > 0.0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")
        if not self.range_limit > 0.0:
            raise ValueError(f"range_limit must be positive, got {self.range_limit}")
        n = len(self.agents)
        for i, agent in enumerate(self.agents):
            if agent.agent_id != i:
                raise ValueError(f"agents[{i}] has agent_id {agent.agent_id}; ids must match position")
        for j, task in enumerate(self.tasks):
            if task.task_id != j:
                raise ValueError(f"tasks[{j}] has task_id {task.task_id}; ids must match position")
            if task.success_prob.shape != (n,):
                raise ValueError(
                    f"tasks[{j}].success_prob has length {task.success_prob.shape[0]}, expected {n}"
                )

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def p(self) -> int:
        return len(self.tasks)

    @property
    def range_constrained(self) -> bool:
        return math.isfinite(self.range_limit)

    @cached_property
    def initial_positions(self) -> np.ndarray:
        arr = np.array([a.position for a in self.agents])
        arr.flags.writeable = False
        return arr

    @cached_property
    def initial_velocities(self) -> np.ndarray:
        arr = np.array([a.velocity for a in self.agents])
        arr.flags.writeable = False
        return arr

    @cached_property
    def task_positions(self) -> np.ndarray:
        arr = np.array([t.target_position for t in self.tasks])
        arr.flags.writeable = False
        return arr

    @cached_property
    def rewards(self) -> np.ndarray:
        arr = np.array([t.nominal_reward for t in self.tasks])
        arr.flags.writeable = False
        return arr

    @cached_property
    def success_probs(self) -> np.ndarray:
        """(n, p) matrix; entry [i, j] is agent i's success probability on task j."""
        arr = np.stack([t.success_prob for t in self.tasks], axis=1)
        arr.flags.writeable = False
        return arr


def action_set(scenario: Scenario, agent_state: AgentState) -> set:
    """Feasible assignments for an agent in its current state.

    Always contains ``None``; contains task ``j`` iff the scenario is
    unconstrained or task j's position is within ``range_limit`` of the
    agent's position (positions only, velocity ignored).
    """
    actions: set = {None}
    if not scenario.range_constrained:
        actions.update(range(scenario.p))
        return actions
    deltas = scenario.task_positions - agent_state.position
    dist = np.hypot(deltas[:, 0], deltas[:, 1])
    actions.update(int(j) for j in np.nonzero(dist <= scenario.range_limit)[0])
    return actions


def assigned_agents(profile: AssignmentProfile, task_id: int, num_tasks: int | None = None) -> set:
    """Indices of the agents assigned to ``task_id`` under ``profile``."""
    if task_id < 0 or (num_tasks is not None and task_id >= num_tasks):
        raise ValueError(f"task_id {task_id} out of range")
    return {i for i, a in enumerate(profile) if a == task_id}


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "agents": [
            {"p0": a.position.tolist(), "v0": a.velocity.tolist()} for a in scenario.agents
        ],
        "tasks": [
            {
                "pos": t.target_position.tolist(),
                "reward": t.nominal_reward,
                "probs": t.success_prob.tolist(),
            }
            for t in scenario.tasks
        ],
        "tf": scenario.t_f,
        "range": "inf" if not scenario.range_constrained else scenario.range_limit,
    }


def scenario_from_dict(data: dict) -> Scenario:
    agents = tuple(
        AgentState(i, entry["p0"], entry["v0"]) for i, entry in enumerate(data["agents"])
    )
    tasks = tuple(
        Task(j, entry["pos"], entry["reward"], entry["probs"])
        for j, entry in enumerate(data["tasks"])
    )
    raw_range = data.get("range", "inf")
    range_limit = UNBOUNDED if raw_range in ("inf", None) else float(raw_range)
    return Scenario(agents=agents, tasks=tasks, t_f=float(data["tf"]), range_limit=range_limit)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))
