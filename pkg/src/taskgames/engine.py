"""Open-loop (OLTA) and dynamic (DTA) task allocation solvers.

OLTA negotiates against the initial-state game for a fixed number of rounds
(the clock pauses), then executes each agent's plan for its final
assignment with no re-negotiation.

DTA interleaves negotiation and motion on a uniform stage grid tau_k =
k * dt.  Up to the freeze boundary the stage game is rebuilt from the
current agent states with the remaining horizon; from the first stage past
t_f - epsilon onward the snapshot built at that stage is reused verbatim,
so the learning dynamics face a static game over the final window while the
agents keep moving.  Whenever an agent's assignment changes, its plan is
re-solved from its actual current state over the actual remaining time.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .control import _control_coefficients, propagate_arrays
from .model import AssignmentProfile, Scenario
from .negotiation import Protocol, ProtocolParams, init_memories, initial_profile, stage_update
from .utilities import GameSnapshot, ProfileContext

_PROTOCOL_STREAM = 1  # seed-sequence label for negotiation randomness
DEFAULT_OLTA_ROUNDS = {Protocol.GRM: 100, Protocol.SAP: 1000, Protocol.BETTER_REPLY: 1000}


class Mode(enum.Enum):
    OLTA = "olta"
    DTA = "dta"

    @classmethod
    def from_name(cls, name: str) -> "Mode":
        key = name.strip().lower()
        for mode in cls:
            if key == mode.value:
                return mode
        raise ValueError(f"unknown mode {name!r} (expected olta or dta)")


@dataclass
class EngineConfig:
    mode: Mode = Mode.OLTA
    dt: float = 0.1
    epsilon: Optional[float] = None  # freeze window length; defaults to t_f / 20
    olta_rounds: Optional[int] = None  # defaults per protocol
    protocol_params: ProtocolParams = field(default_factory=ProtocolParams)

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = Mode.from_name(self.mode)
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.epsilon is not None and not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.olta_rounds is not None and self.olta_rounds < 1:
            raise ValueError(f"olta_rounds must be >= 1, got {self.olta_rounds}")

    def resolved_epsilon(self, t_f: float) -> float:
        eps = self.epsilon if self.epsilon is not None else t_f / 20.0
        if not 0.0 < eps < t_f:
            raise ValueError(f"epsilon must lie in (0, t_f), got {eps}")
        return eps

    def resolved_rounds(self) -> int:
        if self.olta_rounds is not None:
            return self.olta_rounds
        return DEFAULT_OLTA_ROUNDS[self.protocol_params.protocol]


@dataclass
class SimulationTrace:
    """Per-stage record of one run, plus final results.

    ``times``/``profiles``/``states``/``team_utilities`` are parallel
    sequences; ``states[k]`` is an (n, 4) array of rows (px, py, vx, vy).
    ``team_utilities[k]`` is the team utility of ``profiles[k]`` under the
    game in effect at stage k (the frozen game once past the freeze
    boundary).  ``negotiation`` holds OLTA's per-round (round, profile,
    team_utility) history; empty for DTA.
    """

    mode: Mode
    protocol: Protocol
    scenario: Scenario
    dt: float
    times: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    states: list = field(default_factory=list)
    team_utilities: list = field(default_factory=list)
    negotiation: list = field(default_factory=list)
    freeze_stage: Optional[int] = None
    converged: bool = False

    @property
    def final_profile(self) -> AssignmentProfile:
        return self.profiles[-1]

    @property
    def final_team_utility(self) -> float:
        return self.team_utilities[-1]

    def record(self, time, profile, team_utility, positions, velocities):
        self.times.append(float(time))
        self.profiles.append(tuple(profile))
        self.team_utilities.append(float(team_utility))
        self.states.append(np.hstack([positions, velocities]))


def freeze_boundary(t_f: float, epsilon: float, dt: float) -> int:
    """Smallest stage index K with K * dt > t_f - epsilon.

    Computed on the stage grid with a tolerance so that exact multiples
    resolve the way the real-valued definition demands (k * dt equal to
    t_f - epsilon is not yet past the boundary).
    """
    return int(math.floor((t_f - epsilon) / dt + 1e-9)) + 1


def _num_steps(t_f: float, dt: float) -> int:
    steps = round(t_f / dt)
    if steps < 1 or abs(steps * dt - t_f) > 1e-9 * max(1.0, t_f):
        raise ValueError(f"t_f = {t_f} must be a positive integer multiple of dt = {dt}")
    return steps


class _PlanBook:
    """Current control plans of the whole team, in array form."""

    def __init__(self, scenario: Scenario, n_steps: int, dt: float):
        n = scenario.n
        self.scenario = scenario
        self.n_steps = n_steps
        self.dt = dt
        self.origin_p = scenario.initial_positions.copy()
        self.origin_v = scenario.initial_velocities.copy()
        self.alpha = np.zeros((n, 2))
        self.beta = np.zeros((n, 2))
        self.created = np.zeros(n, dtype=np.int64)

    def states_at(self, stage: int):
        ages = (stage - self.created) * self.dt
        return propagate_arrays(self.origin_p, self.origin_v, self.alpha, self.beta, ages)

    def replan(self, agent_id: int, assignment, stage: int, positions, velocities):
        """Install a fresh plan from the agent's state at ``stage``."""
        horizon = (self.n_steps - stage) * self.dt
        self.origin_p[agent_id] = positions[agent_id]
        self.origin_v[agent_id] = velocities[agent_id]
        self.created[agent_id] = stage
        if assignment is None:
            self.alpha[agent_id] = 0.0
            self.beta[agent_id] = 0.0
        else:
            alpha, beta = _control_coefficients(
                positions[agent_id],
                velocities[agent_id],
                self.scenario.task_positions[assignment],
                horizon,
            )
            self.alpha[agent_id] = alpha
            self.beta[agent_id] = beta


def _protocol_rng(params: ProtocolParams) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((params.rng_seed, _PROTOCOL_STREAM)))


def solve_olta(scenario: Scenario, config: EngineConfig) -> SimulationTrace:
    """Negotiate at t = 0 against the initial-state game, then execute."""
    if config.mode is not Mode.OLTA:
        raise ValueError("config.mode must be OLTA")
    params = config.protocol_params
    rng = _protocol_rng(params)
    t_f = scenario.t_f
    n_steps = _num_steps(t_f, config.dt)
    rounds = config.resolved_rounds()

    snapshot = GameSnapshot.from_arrays(
        scenario, scenario.initial_positions, scenario.initial_velocities, n_steps * config.dt
    )
    profile = initial_profile(snapshot, rng)
    memories = init_memories(profile)

    trace = SimulationTrace(mode=Mode.OLTA, protocol=params.protocol, scenario=scenario, dt=config.dt)
    trace.negotiation.append((0, profile, ProfileContext(snapshot, profile).team_utility()))
    for r in range(1, rounds + 1):
        profile, memories = stage_update(snapshot, profile, memories, params, rng)
        trace.negotiation.append((r, profile, ProfileContext(snapshot, profile).team_utility()))

    final_value = trace.negotiation[-1][2]
    tail = [entry[1] for entry in trace.negotiation[len(trace.negotiation) // 2 :]]
    trace.converged = all(p == profile for p in tail)

    book = _PlanBook(scenario, n_steps, config.dt)
    positions, velocities = book.states_at(0)
    for i, assignment in enumerate(profile):
        book.replan(i, assignment, 0, positions, velocities)

    for k in range(n_steps + 1):
        time = t_f if k == n_steps else k * config.dt
        pos, vel = book.states_at(k)
        trace.record(time, profile, final_value, pos, vel)
    return trace


def solve_dta(scenario: Scenario, config: EngineConfig) -> SimulationTrace:
    """Negotiate while moving; freeze the stage game over the final window."""
    if config.mode is not Mode.DTA:
        raise ValueError("config.mode must be DTA")
    params = config.protocol_params
    rng = _protocol_rng(params)
    t_f = scenario.t_f
    dt = config.dt
    n_steps = _num_steps(t_f, dt)
    epsilon = config.resolved_epsilon(t_f)
    boundary = freeze_boundary(t_f, epsilon, dt)

    trace = SimulationTrace(mode=Mode.DTA, protocol=params.protocol, scenario=scenario, dt=dt)
    trace.freeze_stage = boundary if boundary <= n_steps - 1 else None

    book = _PlanBook(scenario, n_steps, dt)
    positions, velocities = book.states_at(0)
    init_snapshot = GameSnapshot.from_arrays(scenario, positions, velocities, n_steps * dt)
    profile = initial_profile(init_snapshot, rng)
    memories = init_memories(profile)
    for i, assignment in enumerate(profile):
        book.replan(i, assignment, 0, positions, velocities)

    frozen: GameSnapshot | None = None
    snapshot = init_snapshot
    for k in range(n_steps):
        positions, velocities = book.states_at(k)
        horizon = (n_steps - k) * dt
        if k < boundary:
            snapshot = GameSnapshot.from_arrays(scenario, positions, velocities, horizon)
        else:
            if frozen is None:
                frozen = GameSnapshot.from_arrays(scenario, positions, velocities, horizon)
            snapshot = frozen

        proposed, memories = stage_update(snapshot, profile, memories, params, rng)
        accepted = list(proposed)
        for i in range(scenario.n):
            if accepted[i] != profile[i]:
                if horizon < dt - 1e-12:
                    # too late to re-plan: the change is rejected
                    accepted[i] = profile[i]
                    memories[i].last_assignment = profile[i]
                else:
                    book.replan(i, accepted[i], k, positions, velocities)
        profile = tuple(accepted)
        trace.record(k * dt, profile, ProfileContext(snapshot, profile).team_utility(), positions, velocities)

    pos, vel = book.states_at(n_steps)
    trace.record(t_f, profile, ProfileContext(snapshot, profile).team_utility(), pos, vel)

    half_window = t_f - epsilon / 2.0
    tail = [trace.profiles[k] for k in range(len(trace.times)) if trace.times[k] >= half_window - 1e-12]
    trace.converged = all(p == profile for p in tail)
    return trace


def solve(scenario: Scenario, config: EngineConfig) -> SimulationTrace:
    if config.mode is Mode.OLTA:
        return solve_olta(scenario, config)
    return solve_dta(scenario, config)
