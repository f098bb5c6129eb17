"""Task, team, and marginal agent utilities over a frozen evaluation context.

A :class:`GameSnapshot` fixes the agent states, the remaining horizon, and
hence every completion cost and feasible action set: it is the static game
played at one negotiation stage.  Utilities:

  task reward   r_j  = rbar_j * (1 - prod_{i assigned to j} (1 - p_ij)),
                       0 when nobody is assigned
  task cost     R_j  = sum of assigned agents' completion costs
  task utility  U_j  = max(0, r_j - R_j)
  team utility  U    = sum over tasks of U_j
  agent utility U_i  = marginal contribution: team utility with the agent's
                       assignment minus team utility with it replaced by the
                       null assignment (equivalently, the difference at the
                       agent's own task only)

The team utility is an exact potential for the agent utilities: any
unilateral deviation changes the deviator's utility and the team utility by
the same amount.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .control import completion_cost_matrix
from .model import AgentState, Assignment, AssignmentProfile, Scenario


class GameSnapshot:
    """Frozen evaluation context: agent states, horizon, cached costs and action sets.

    Immutable after construction; utility evaluations against one snapshot
    may run concurrently.  The completion-cost matrix and the feasibility
    matrix are computed lazily, once.
    """

    def __init__(
        self,
        scenario: Scenario,
        agent_states: Sequence[AgentState],
        horizon: float,
        completion_costs: np.ndarray | None = None,
    ):
        states = tuple(agent_states)
        if len(states) != scenario.n:
            raise ValueError(f"expected {scenario.n} agent states, got {len(states)}")
        positions = np.array([s.position for s in states])
        velocities = np.array([s.velocity for s in states])
        self._init(scenario, positions, velocities, horizon, completion_costs)
        self._agent_states = states

    @classmethod
    def from_arrays(
        cls,
        scenario: Scenario,
        positions: np.ndarray,
        velocities: np.ndarray,
        horizon: float,
        completion_costs: np.ndarray | None = None,
    ) -> "GameSnapshot":
        snap = cls.__new__(cls)
        snap._init(scenario, np.array(positions), np.array(velocities), horizon, completion_costs)
        snap._agent_states = None
        return snap

    def _init(self, scenario, positions, velocities, horizon, completion_costs):
        if positions.shape != (scenario.n, 2) or velocities.shape != (scenario.n, 2):
            raise ValueError("positions/velocities must have shape (n, 2)")
        horizon = float(horizon)
        if not horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {horizon}")
        self.scenario = scenario
        self.horizon = horizon
        self.positions = positions
        self.velocities = velocities
        positions.flags.writeable = False
        velocities.flags.writeable = False
        if completion_costs is not None:
            completion_costs = np.array(completion_costs, dtype=np.float64)
            if completion_costs.shape != (scenario.n, scenario.p):
                raise ValueError("completion_costs must have shape (n, p)")
            completion_costs.flags.writeable = False
        self._costs = completion_costs
        self._feasible = None
        self._actions = None

    @property
    def n(self) -> int:
        return self.scenario.n

    @property
    def p(self) -> int:
        return self.scenario.p

    @property
    def agent_states(self) -> tuple:
        if self._agent_states is None:
            self._agent_states = tuple(
                AgentState(i, self.positions[i], self.velocities[i]) for i in range(self.n)
            )
        return self._agent_states

    @property
    def completion_costs(self) -> np.ndarray:
        """(n, p) matrix of cost-to-go values from each agent to each task."""
        if self._costs is None:
            costs = completion_cost_matrix(
                self.positions, self.velocities, self.scenario.task_positions, self.horizon
            )
            costs.flags.writeable = False
            self._costs = costs
        return self._costs

    @property
    def feasible(self) -> np.ndarray:
        """(n, p) boolean matrix of the range constraint at this snapshot's states."""
        if self._feasible is None:
            if not self.scenario.range_constrained:
                feas = np.ones((self.n, self.p), dtype=bool)
            else:
                deltas = self.scenario.task_positions[None, :, :] - self.positions[:, None, :]
                dist = np.hypot(deltas[..., 0], deltas[..., 1])
                feas = dist <= self.scenario.range_limit
            feas.flags.writeable = False
            self._feasible = feas
        return self._feasible

    def is_feasible(self, agent_id: int, assignment: Assignment) -> bool:
        return assignment is None or bool(self.feasible[agent_id, assignment])

    def ordered_actions(self, agent_id: int) -> list:
        """Feasible assignments in a fixed order: null first, then task ids ascending."""
        if self._actions is None:
            feas = self.feasible
            self._actions = [[None] + np.nonzero(feas[i])[0].tolist() for i in range(self.n)]
        return self._actions[agent_id]


class ProfileContext:
    """Per-task aggregates of one (snapshot, profile) pair.

    Precomputes, per task, the assigned-agent list, the failure product
    prod(1 - p_ij), and the cost sum, so that every utility query and every
    candidate-deviation vector is cheap.  Each negotiation stage builds one
    context and evaluates many deviations against it.
    """

    def __init__(self, snapshot: GameSnapshot, profile: AssignmentProfile):
        n, p = snapshot.n, snapshot.p
        if len(profile) != n:
            raise ValueError(f"profile length {len(profile)} != n = {n}")
        self.snapshot = snapshot
        self.profile = tuple(profile)
        self.probs = snapshot.scenario.success_probs
        self.costs = snapshot.completion_costs
        self.rewards = snapshot.scenario.rewards

        members: list = [[] for _ in range(p)]
        for i, a in enumerate(self.profile):
            if a is not None:
                members[a].append(i)
        self.members = members

        fail_prod = np.ones(p)
        cost_sum = np.zeros(p)
        for j, idx in enumerate(members):
            for i in idx:
                fail_prod[j] *= 1.0 - self.probs[i, j]
                cost_sum[j] += self.costs[i, j]
        self.fail_prod = fail_prod
        self.cost_sum = cost_sum
        self.task_utils = np.maximum(0.0, self.rewards * (1.0 - fail_prod) - cost_sum)

    def task_reward(self, task_id: int) -> float:
        if not self.members[task_id]:
            return 0.0
        return float(self.rewards[task_id] * (1.0 - self.fail_prod[task_id]))

    def task_cost(self, task_id: int) -> float:
        return float(self.cost_sum[task_id])

    def task_utility(self, task_id: int) -> float:
        return float(self.task_utils[task_id])

    def team_utility(self) -> float:
        return float(np.sum(self.task_utils))

    def _task_utility_without(self, agent_id: int, task_id: int) -> float:
        """Utility of ``task_id`` with ``agent_id`` removed from its members."""
        others = [i for i in self.members[task_id] if i != agent_id]
        if not others:
            return 0.0
        prod = 1.0
        cost = 0.0
        for i in others:
            prod *= 1.0 - self.probs[i, task_id]
            cost += self.costs[i, task_id]
        return max(0.0, self.rewards[task_id] * (1.0 - prod) - cost)

    def agent_utility(self, agent_id: int) -> float:
        """Marginal contribution of the agent's current assignment; 0 for null."""
        a = self.profile[agent_id]
        if a is None:
            return 0.0
        return self.task_utils[a] - self._task_utility_without(agent_id, a)

    def deviation_utilities(self, agent_id: int, actions: Sequence[Assignment]) -> np.ndarray:
        """The agent's own utility for each candidate assignment, teammates fixed.

        Entry k is the marginal utility the agent would obtain by switching
        to ``actions[k]`` while every other agent keeps its current
        assignment.  This is the only utility information a negotiation rule
        may read for an agent: its own evaluations, never a teammate's.
        """
        row_p = self.probs[agent_id]
        row_c = self.costs[agent_id]
        joined = np.maximum(
            0.0, self.rewards * (1.0 - self.fail_prod * (1.0 - row_p)) - (self.cost_sum + row_c)
        )
        dev = joined - self.task_utils
        current = self.profile[agent_id]
        if current is not None:
            # joining one's own task again is not a join: patch with the
            # leave-one-out marginal of the current assignment
            dev[current] = self.agent_utility(agent_id)
        out = np.empty(len(actions))
        for k, a in enumerate(actions):
            out[k] = 0.0 if a is None else dev[a]
        return out


def task_reward(snapshot: GameSnapshot, profile: AssignmentProfile, task_id: int) -> float:
    return ProfileContext(snapshot, profile).task_reward(task_id)


def task_cost(snapshot: GameSnapshot, profile: AssignmentProfile, task_id: int) -> float:
    return ProfileContext(snapshot, profile).task_cost(task_id)


def task_utility(snapshot: GameSnapshot, profile: AssignmentProfile, task_id: int) -> float:
    return ProfileContext(snapshot, profile).task_utility(task_id)


def team_utility(snapshot: GameSnapshot, profile: AssignmentProfile) -> float:
    return ProfileContext(snapshot, profile).team_utility()


def agent_utility(snapshot: GameSnapshot, profile: AssignmentProfile, agent_id: int) -> float:
    return ProfileContext(snapshot, profile).agent_utility(agent_id)


def exhaustive_nash_check(
    snapshot: GameSnapshot, profile: AssignmentProfile, tol: float = 1e-9
) -> bool:
    """True iff no agent has a strictly improving unilateral deviation.

    Enumerates every agent's feasible deviations; intended for instances
    small enough to afford that (test oracle and convergence checks).
    """
    ctx = ProfileContext(snapshot, profile)
    for i in range(snapshot.n):
        actions = snapshot.ordered_actions(i)
        devs = ctx.deviation_utilities(i, actions)
        if np.max(devs) > ctx.agent_utility(i) + tol:
            return False
    return True
