"""Minimum-energy control of planar double integrators, in closed form.

For dynamics p'' = u with fixed horizon h, the control u(s) = alpha + s*beta
with

    alpha = (6/h^2) (p_T - p0 - h v0) + (2/h) v0
    beta  = -(12/h^3)(p_T - p0 - h v0) - (6/h^2) v0

transfers (p0, v0) to (p_T, 0) exactly (soft landing) while minimizing
(1/2) * integral of |u(s)|^2 over [0, h].  The optimal cost is

    rho = (1/2) (h |alpha|^2 + h^2 alpha.beta + (1/3) h^3 |beta|^2).

State propagation under such a control law is polynomial and therefore
evaluated analytically, never numerically integrated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AgentState, Assignment, Task


class HorizonTooShort(ValueError):
    """Raised when a plan is requested over a horizon below the allowed minimum."""


@dataclass(frozen=True, eq=False)
class ControlPlan:
    """A control law u(s) = alpha + s*beta, valid for s in [0, horizon].

    ``s`` is measured from the plan's creation; ``origin_state`` is the
    agent state at creation.  ``target`` is the assignment the plan serves
    (``None`` for coasting plans, which have identically zero control).
    """

    alpha: np.ndarray
    beta: np.ndarray
    horizon: float
    origin_state: AgentState
    target: Assignment = None

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.float64)
        b = np.array(self.beta, dtype=np.float64)
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "horizon", float(self.horizon))
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")


def _control_coefficients(positions, velocities, targets, horizon):
    """(alpha, beta) for the closed-form law; broadcasts over leading axes."""
    h = horizon
    hh = h * h
    hhh = hh * h
    d = targets - positions - h * velocities
    alpha = (6.0 / hh) * d + (2.0 / h) * velocities
    beta = (-12.0 / hhh) * d + (-6.0 / hh) * velocities
    return alpha, beta


def _control_energy(alpha, beta, horizon):
    """(1/2) * integral of |alpha + s*beta|^2 over [0, horizon]; broadcasts."""
    h = horizon
    hh = h * h
    hhh = hh * h
    a2 = alpha[..., 0] * alpha[..., 0] + alpha[..., 1] * alpha[..., 1]
    ab = alpha[..., 0] * beta[..., 0] + alpha[..., 1] * beta[..., 1]
    b2 = beta[..., 0] * beta[..., 0] + beta[..., 1] * beta[..., 1]
    return 0.5 * (h * a2 + hh * ab + hhh * b2 / 3.0)


def solve_ocp(
    state: AgentState,
    target_position,
    horizon: float,
    h_min: float = 1e-9,
    target: Assignment = None,
) -> ControlPlan:
    """Plan the minimum-energy transfer to rest on ``target_position``.

    Raises :class:`HorizonTooShort` if ``horizon < h_min`` (the coefficient
    formulas are singular as the horizon approaches zero).
    """
    horizon = float(horizon)
    if horizon < h_min:
        raise HorizonTooShort(f"horizon {horizon} below minimum {h_min}")
    target_position = np.asarray(target_position, dtype=np.float64)
    alpha, beta = _control_coefficients(state.position, state.velocity, target_position, horizon)
    return ControlPlan(alpha=alpha, beta=beta, horizon=horizon, origin_state=state, target=target)


def coast_plan(state: AgentState, horizon: float) -> ControlPlan:
    """Zero-control plan for the null assignment: the agent drifts at constant velocity."""
    zero = np.zeros(2)
    return ControlPlan(alpha=zero, beta=zero, horizon=float(horizon), origin_state=state, target=None)


def cost_to_go(plan: ControlPlan) -> float:
    """Energy the plan will spend over its full horizon; 0 for coasting plans."""
    return float(_control_energy(plan.alpha, plan.beta, plan.horizon))


def propagate(plan: ControlPlan, duration: float) -> AgentState:
    """State reached ``duration`` time units after the plan's creation."""
    s = float(duration)
    if s < 0.0 or s > plan.horizon + 1e-12:
        raise ValueError(f"duration {s} outside [0, {plan.horizon}]")
    p0 = plan.origin_state.position
    v0 = plan.origin_state.velocity
    pos = p0 + v0 * s + plan.alpha * (0.5 * s * s) + plan.beta * (s * s * s / 6.0)
    vel = v0 + plan.alpha * s + plan.beta * (0.5 * s * s)
    return AgentState(plan.origin_state.agent_id, pos, vel)


def completion_cost(state: AgentState, task: Task, horizon: float, h_min: float = 1e-9) -> float:
    """Optimal cost for ``state`` to land on ``task`` within ``horizon``."""
    plan = solve_ocp(state, task.target_position, horizon, h_min=h_min, target=task.task_id)
    return cost_to_go(plan)


def completion_cost_matrix(positions, velocities, task_positions, horizon) -> np.ndarray:
    """(n, p) matrix of completion costs for every agent/task pair.

    Elementwise identical to :func:`completion_cost` on the same inputs
    (same closed-form arithmetic, vectorized).
    """
    alpha, beta = _control_coefficients(
        positions[:, None, :], velocities[:, None, :], task_positions[None, :, :], horizon
    )
    return _control_energy(alpha, beta, horizon)


def propagate_arrays(origin_p, origin_v, alpha, beta, durations):
    """Vectorized plan propagation; ``durations`` has one entry per row."""
    s = np.asarray(durations, dtype=np.float64)[:, None]
    pos = origin_p + origin_v * s + alpha * (0.5 * s * s) + beta * (s * s * s / 6.0)
    vel = origin_v + alpha * s + beta * (0.5 * s * s)
    return pos, vel
