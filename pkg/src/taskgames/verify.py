"""Built-in self checks on small instances, backing the ``verify`` command.

Each check re-derives an expected quantity through an independent route
(enumeration, discretized optimization, quadrature) and compares it with
the closed-form or incremental implementation.
"""

from __future__ import annotations

import math

import numpy as np

from .control import cost_to_go, propagate, solve_ocp
from .engine import EngineConfig, Mode, solve_dta
from .harness import generate_scenario
from .model import AgentState
from .negotiation import Protocol, ProtocolParams, init_memories, initial_profile, stage_update
from .utilities import (
    GameSnapshot,
    ProfileContext,
    agent_utility,
    exhaustive_nash_check,
    team_utility,
)


def _random_snapshot(rng, n=None, p=None, constrained=None):
    n = n if n is not None else int(rng.integers(2, 6))
    p = p if p is not None else int(rng.integers(2, 5))
    constrained = bool(rng.random() < 0.5) if constrained is None else constrained
    range_limit = float(rng.uniform(0.3, 1.2)) if constrained else math.inf
    horizon = float(rng.uniform(0.8, 4.0))
    scenario = generate_scenario(n, p, t_f=horizon, range_limit=range_limit, seed=int(rng.integers(2**31)))
    return GameSnapshot(scenario, scenario.agents, horizon)


def _random_profile(snapshot, rng):
    return tuple(
        snapshot.ordered_actions(i)[int(rng.integers(len(snapshot.ordered_actions(i))))]
        for i in range(snapshot.n)
    )


def check_potential_identity(trials: int = 200, seed: int = 7) -> tuple:
    """Unilateral deviations change the deviator's utility and the team
    utility by identical amounts."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        snap = _random_snapshot(rng)
        profile = _random_profile(snap, rng)
        i = int(rng.integers(snap.n))
        actions = snap.ordered_actions(i)
        a_new = actions[int(rng.integers(len(actions)))]
        deviated = profile[:i] + (a_new,) + profile[i + 1 :]
        du_agent = agent_utility(snap, deviated, i) - agent_utility(snap, profile, i)
        du_team = team_utility(snap, deviated) - team_utility(snap, profile)
        worst = max(worst, abs(du_agent - du_team))
    return worst < 1e-9, f"max |delta agent - delta team| = {worst:.3e}"


def collocation_cost(state: AgentState, target, horizon: float, steps: int = 300) -> float:
    """Discretized minimum-energy cost: piecewise-constant controls solved
    as an equality-constrained least-squares problem."""
    delta = horizon / steps
    cost = 0.0
    for axis in range(2):
        # constraints: sum(u) * delta = -v0 ; sum(u_k * (steps-k-1/2)) * delta^2 = pT - p0 - h v0
        a_vel = np.full(steps, delta)
        a_pos = delta * delta * (steps - np.arange(steps) - 0.5)
        A = np.vstack([a_vel, a_pos])
        b = np.array(
            [
                -state.velocity[axis],
                target[axis] - state.position[axis] - horizon * state.velocity[axis],
            ]
        )
        u = A.T @ np.linalg.solve(A @ A.T, b)
        cost += 0.5 * float(u @ u) * delta
    return cost


def check_ocp_against_collocation(trials: int = 20, seed: int = 11) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        state = AgentState(0, rng.uniform(-1, 1, 2), rng.uniform(-0.5, 0.5, 2))
        target = rng.uniform(-1, 1, 2)
        horizon = float(rng.uniform(0.5, 3.0))
        plan = solve_ocp(state, target, horizon)
        exact = cost_to_go(plan)
        approx = collocation_cost(state, target, horizon)
        rel = abs(exact - approx) / max(abs(exact), 1e-12)
        worst = max(worst, rel)
    return worst < 1e-4, f"max relative error vs collocation = {worst:.3e}"


def check_terminal_constraint(trials: int = 30, seed: int = 13) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        state = AgentState(0, rng.uniform(-1, 1, 2), rng.uniform(-0.5, 0.5, 2))
        target = rng.uniform(-1, 1, 2)
        horizon = float(rng.uniform(0.2, 4.0))
        plan = solve_ocp(state, target, horizon)
        final = propagate(plan, horizon)
        worst = max(
            worst,
            float(np.max(np.abs(final.position - target))),
            float(np.max(np.abs(final.velocity))),
        )
    return worst < 1e-9, f"max terminal error = {worst:.3e}"


def check_bellman_consistency(trials: int = 30, seed: int = 17) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        state = AgentState(0, rng.uniform(-1, 1, 2), rng.uniform(-0.5, 0.5, 2))
        target = rng.uniform(-1, 1, 2)
        horizon = float(rng.uniform(0.5, 3.0))
        plan = solve_ocp(state, target, horizon)
        split = float(rng.uniform(0.1, 0.9)) * horizon
        # exact quadrature of the quadratic |u(s)|^2 via Simpson's rule
        u0 = plan.alpha
        um = plan.alpha + 0.5 * split * plan.beta
        u1 = plan.alpha + split * plan.beta
        spent = 0.5 * split / 6.0 * float(u0 @ u0 + 4.0 * (um @ um) + u1 @ u1)
        mid = propagate(plan, split)
        rest = cost_to_go(solve_ocp(mid, target, horizon - split))
        worst = max(worst, abs(cost_to_go(plan) - (spent + rest)))
    return worst < 1e-9, f"max decomposition error = {worst:.3e}"


def _nash_by_enumeration(snapshot, profile, tol=1e-9) -> bool:
    """Literal best-response check via full team-utility recomputation."""
    base = team_utility(snapshot, profile)
    for i in range(snapshot.n):
        for a_new in snapshot.ordered_actions(i):
            deviated = profile[:i] + (a_new,) + profile[i + 1 :]
            if team_utility(snapshot, deviated) > base + tol:
                return False
    return True


def check_nash_oracle_agreement(trials: int = 10, seed: int = 19) -> tuple:
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        snap = _random_snapshot(rng, n=3, p=3)
        for _ in range(20):
            profile = _random_profile(snap, rng)
            if exhaustive_nash_check(snap, profile) != _nash_by_enumeration(snap, profile):
                return False, f"disagreement on profile {profile}"
    return True, "agrees with full enumeration on all sampled profiles"


def check_better_reply_improvement(trials: int = 10, seed: int = 23) -> tuple:
    rng = np.random.default_rng(seed)
    for trial in range(trials):
        snap = _random_snapshot(rng, n=4, p=4, constrained=False)
        sampler = np.random.default_rng(seed + trial)
        profile = _random_profile(snap, sampler)
        memories = init_memories(profile)
        params = ProtocolParams(protocol=Protocol.BETTER_REPLY, rng_seed=seed)
        value = team_utility(snap, profile)
        unchanged = 0
        for _ in range(400):
            new_profile, memories = stage_update(snap, profile, memories, params, sampler)
            if new_profile == profile:
                unchanged += 1
                if unchanged >= snap.n:
                    break
            else:
                unchanged = 0
                new_value = team_utility(snap, new_profile)
                if not new_value > value:
                    return False, "a better-reply move failed to raise the team utility"
                value = new_value
            profile = new_profile
        if not exhaustive_nash_check(snap, profile):
            return False, "better-reply dynamics stopped away from an equilibrium"
    return True, "monotone improvement and equilibrium termination on all instances"


def check_stage_determinism(seed: int = 29) -> tuple:
    for protocol in Protocol:
        outcomes = []
        for _ in range(2):
            rng = np.random.default_rng(seed)
            snap_rng = np.random.default_rng(seed + 1)
            snap = _random_snapshot(snap_rng, n=4, p=4)
            profile = _random_profile(snap, rng)
            memories = init_memories(profile)
            params = ProtocolParams(protocol=protocol, rng_seed=seed)
            sequence = []
            for _ in range(30):
                profile, memories = stage_update(snap, profile, memories, params, rng)
                sequence.append(profile)
            outcomes.append(sequence)
        if outcomes[0] != outcomes[1]:
            return False, f"{protocol.value} diverged under identical seeds"
    return True, "identical seeds reproduce identical stage sequences"


def check_freeze_reuse(seed: int = 31) -> tuple:
    scenario = generate_scenario(6, 6, t_f=4.0, range_limit=math.inf, seed=seed)
    config = EngineConfig(
        mode=Mode.DTA, dt=0.1, protocol_params=ProtocolParams(protocol=Protocol.GRM, rng_seed=seed)
    )
    trace = solve_dta(scenario, config)
    if trace.freeze_stage is None:
        return False, "freeze stage missing"
    k = trace.freeze_stage
    states = trace.states[k]
    horizon = (round(scenario.t_f / config.dt) - k) * config.dt
    snap = GameSnapshot.from_arrays(scenario, states[:, :2].copy(), states[:, 2:].copy(), horizon)
    for stage in range(k, len(trace.times)):
        recomputed = ProfileContext(snap, trace.profiles[stage]).team_utility()
        if recomputed != trace.team_utilities[stage]:
            return False, f"post-freeze utility at stage {stage} not reproduced exactly"
    return True, "post-freeze utilities reproduce bit-identically from the frozen game"


ALL_CHECKS = (
    ("potential-identity", check_potential_identity),
    ("ocp-collocation", check_ocp_against_collocation),
    ("terminal-constraint", check_terminal_constraint),
    ("bellman-consistency", check_bellman_consistency),
    ("nash-oracle-agreement", check_nash_oracle_agreement),
    ("better-reply-improvement", check_better_reply_improvement),
    ("stage-determinism", check_stage_determinism),
    ("freeze-reuse", check_freeze_reuse),
)


def run_all(report=print) -> bool:
    ok = True
    for name, check in ALL_CHECKS:
        passed, detail = check()
        ok = ok and passed
        report(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    return ok
