"""Decentralized negotiation protocols: one stage of the assignment update law.

Three rules are provided, all operating on per-agent information only (an
agent sees its own candidate utilities and the public action history, never
a teammate's utility function):

* GRM  - discounted regret matching with inertia.  Every agent updates
  simultaneously: regrets decay by the discount factor and absorb the
  instantaneous regret of each feasible candidate; with probability
  (1 - inertia) the previous action repeats, otherwise the agent samples
  among positive-regret actions proportionally to the positive part,
  falling back to the previous action when no regret is positive.
* SAP  - log-linear learning.  One uniformly random agent updates per
  stage, sampling candidates with Boltzmann weights exp(utility / tau(k));
  tau underflow degrades to argmax with uniform tie-breaking.
* BETTER_REPLY - round-robin single-agent best response; the agent moves
  only when some candidate strictly beats its current utility.

Stage updates are sequential within one run; independent runs with
distinct seeds may execute concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import Assignment, AssignmentProfile
from .utilities import GameSnapshot, ProfileContext

_TAU_MIN = 1e-12


class Protocol(enum.Enum):
    GRM = "grm"
    SAP = "sap"
    BETTER_REPLY = "br"

    @classmethod
    def from_name(cls, name: str) -> "Protocol":
        key = name.strip().lower()
        for proto in cls:
            if key == proto.value or key == proto.name.lower():
                return proto
        raise ValueError(f"unknown protocol {name!r} (expected grm, sap, or br)")


def default_temperature(k: int) -> float:
    """Randomization level at stage k (k >= 1)."""
    return 10.0 / (k * k)


@dataclass
class ProtocolParams:
    """Negotiation parameters.

    ``inertia`` is the per-stage probability that a GRM agent re-optimizes;
    with probability ``1 - inertia`` it repeats its previous action.
    ``temperature_schedule`` maps the 1-based global stage index to the SAP
    randomization level (default 10 / k**2).
    """

    protocol: Protocol = Protocol.GRM
    discount: float = 0.1
    inertia: float = 0.5
    temperature_schedule: Optional[Callable[[int], float]] = None
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.protocol, str):
            self.protocol = Protocol.from_name(self.protocol)
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError(f"inertia must lie in (0, 1), got {self.inertia}")

    def temperature(self, k: int) -> float:
        schedule = self.temperature_schedule or default_temperature
        return schedule(k)


@dataclass
class AgentMemory:
    """One agent's private negotiation state."""

    last_assignment: Assignment = None
    regrets: dict = field(default_factory=dict)
    stage_index: int = 0


def init_memories(profile: AssignmentProfile) -> list:
    return [AgentMemory(last_assignment=a) for a in profile]


def initial_profile(snapshot: GameSnapshot, rng: np.random.Generator) -> AssignmentProfile:
    """Uniformly random feasible assignment (including null) per agent."""
    out = []
    for i in range(snapshot.n):
        actions = snapshot.ordered_actions(i)
        out.append(actions[int(rng.integers(len(actions)))])
    return tuple(out)


def _sample_categorical(actions, weights, total, rng: np.random.Generator) -> Assignment:
    """Inverse-CDF draw over ``actions`` with unnormalized ``weights``."""
    r = rng.random() * total
    acc = 0.0
    for a, w in zip(actions, weights):
        acc += w
        if r < acc:
            return a
    return actions[-1]


def _argmax_with_ties(actions, values, rng: np.random.Generator) -> Assignment:
    best = np.max(values)
    ties = [a for a, v in zip(actions, values) if v == best]
    if len(ties) == 1:
        return ties[0]
    return ties[int(rng.integers(len(ties)))]


def _stay_action(snapshot, memory, agent_id) -> Assignment:
    last = memory.last_assignment
    return last if snapshot.is_feasible(agent_id, last) else None


def _grm_step(
    snapshot: GameSnapshot,
    ctx: ProfileContext,
    agent_id: int,
    memory: AgentMemory,
    params: ProtocolParams,
    rng: np.random.Generator,
) -> Assignment:
    actions = snapshot.ordered_actions(agent_id)
    devs = ctx.deviation_utilities(agent_id, actions)
    current_utility = ctx.agent_utility(agent_id)
    rho = params.discount
    old = np.fromiter(
        (memory.regrets.get(a, 0.0) for a in actions), dtype=np.float64, count=len(actions)
    )
    new = (1.0 - rho) * old + rho * (devs - current_utility)
    regrets = dict(zip(actions, new.tolist()))
    if memory.last_assignment not in regrets and memory.last_assignment in memory.regrets:
        # currently infeasible previous action: carry its entry unchanged
        regrets[memory.last_assignment] = memory.regrets[memory.last_assignment]
    memory.regrets = regrets

    stay = _stay_action(snapshot, memory, agent_id)
    if rng.random() >= params.inertia:
        return stay
    positive = new > 0.0
    total = float(new[positive].sum())
    if total <= 0.0:
        return stay
    acts = [a for a, pos in zip(actions, positive) if pos]
    weights = new[positive]
    return _sample_categorical(acts, weights, total, rng)


def _sap_step(
    snapshot: GameSnapshot,
    ctx: ProfileContext,
    agent_id: int,
    params: ProtocolParams,
    k: int,
    rng: np.random.Generator,
) -> Assignment:
    actions = snapshot.ordered_actions(agent_id)
    devs = ctx.deviation_utilities(agent_id, actions)
    tau = params.temperature(k)
    if not tau > _TAU_MIN:
        return _argmax_with_ties(actions, devs, rng)
    weights = np.exp((devs - np.max(devs)) / tau)
    return _sample_categorical(actions, weights, float(weights.sum()), rng)


def _better_reply_step(
    snapshot: GameSnapshot,
    ctx: ProfileContext,
    agent_id: int,
    rng: np.random.Generator,
) -> Assignment:
    actions = snapshot.ordered_actions(agent_id)
    devs = ctx.deviation_utilities(agent_id, actions)
    current = ctx.profile[agent_id]
    if not snapshot.is_feasible(agent_id, current):
        return _argmax_with_ties(actions, devs, rng)
    if np.max(devs) > ctx.agent_utility(agent_id) + 1e-12:
        return _argmax_with_ties(actions, devs, rng)
    return current


def stage_update(
    snapshot: GameSnapshot,
    profile: AssignmentProfile,
    memories: list,
    params: ProtocolParams,
    rng: np.random.Generator,
):
    """Run one negotiation stage; returns the next profile and the memories.

    GRM updates every agent simultaneously against the incoming profile;
    SAP and BETTER_REPLY update a single agent (uniformly random and
    round-robin, respectively).  Every proposed assignment lies in the
    proposer's feasible action set at this snapshot.
    """
    n = snapshot.n
    if len(profile) != n or len(memories) != n:
        raise ValueError("profile/memories length must equal the number of agents")
    k = memories[0].stage_index + 1
    ctx = ProfileContext(snapshot, profile)

    if params.protocol is Protocol.GRM:
        new_profile = tuple(
            _grm_step(snapshot, ctx, i, memories[i], params, rng) for i in range(n)
        )
    elif params.protocol is Protocol.SAP:
        updater = int(rng.integers(n))
        choice = _sap_step(snapshot, ctx, updater, params, k, rng)
        new_profile = profile[:updater] + (choice,) + profile[updater + 1 :]
    elif params.protocol is Protocol.BETTER_REPLY:
        updater = (k - 1) % n
        choice = _better_reply_step(snapshot, ctx, updater, rng)
        new_profile = profile[:updater] + (choice,) + profile[updater + 1 :]
    else:  # pragma: no cover
        raise ValueError(f"unsupported protocol {params.protocol}")

    for i, memory in enumerate(memories):
        memory.last_assignment = new_profile[i]
        memory.stage_index += 1
    return new_profile, memories
