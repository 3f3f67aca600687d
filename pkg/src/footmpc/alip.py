"""Angular-momentum linear inverted pendulum (ALIP) model with ankle torque.

State ``x = [x_com, y_com, L_x, L_y]``: horizontal CoM position relative to
the stance foot, and angular momentum about the stance contact point.  All
quantities live in the stance frame (x forward, y left, z up, origin at the
bottom center of the stance foot).  The sagittal ankle torque ``u`` drives
``L_y`` directly.

This module provides the continuous dynamics, their exact zero-order-hold
discretization, the double-stance reset map (center of pressure swept
linearly from the old to the new stance foot, followed by a coordinate
change onto the new foot), the resulting step-to-step dynamics, and the
synthesis of period-2 reference gaits.

Convention for stance signs: ``sigma = -1`` when the *stance* foot is the
left one, ``+1`` when it is the right one, so the lateral offset of the
next footstep is ``sigma * stance_width`` (a right-stance robot swings its
left foot to +y).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm


class SingularFixedPoint(RuntimeError):
    """The periodic-gait fixed-point system is numerically singular."""


@dataclass(frozen=True)
class AlipParams:
    """Physical parameters of the pendulum model."""

    mass: float = 30.0        # kg
    com_height: float = 0.85  # m, CoM height above the local terrain plane
    gravity: float = 9.81     # m/s^2

    def __post_init__(self):
        if self.mass <= 0 or self.com_height <= 0 or self.gravity <= 0:
            raise ValueError("mass, com_height and gravity must be positive")


@dataclass(frozen=True)
class GaitTiming:
    """Phase durations and transcription sizes for one planning problem."""

    single_stance: float = 0.3   # s
    double_stance: float = 0.1   # s
    knots: int = 4               # knot points per stance period (K >= 2)
    horizon: int = 3             # stance periods planned ahead (N >= 1)

    def __post_init__(self):
        if self.single_stance <= 0 or self.double_stance <= 0:
            raise ValueError("stance durations must be positive")
        if self.knots < 2 or self.horizon < 1:
            raise ValueError("need knots >= 2 and horizon >= 1")

    @property
    def step_period(self) -> float:
        """Step-to-step period: single stance plus double stance."""
        return self.single_stance + self.double_stance

    @property
    def knot_dt(self) -> float:
        return self.single_stance / (self.knots - 1)


@dataclass(frozen=True)
class GaitCommand:
    """Desired average walking velocity and stance geometry."""

    velocity: tuple[float, float] = (0.0, 0.0)  # m/s, in the yaw frame
    stance_width: float = 0.25                  # m, lateral foot separation
    first_stance: int = 1                       # -1 left stance, +1 right

    def __post_init__(self):
        if self.stance_width <= 0:
            raise ValueError("stance_width must be positive")
        if self.first_stance not in (-1, 1):
            raise ValueError("first_stance must be -1 or +1")


def dynamics_matrices(params: AlipParams) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time (A, B) of the torque-driven pendulum."""
    mh = params.mass * params.com_height
    mg = params.mass * params.gravity
    A = np.array([
        [0.0, 0.0, 0.0, 1.0 / mh],
        [0.0, 0.0, -1.0 / mh, 0.0],
        [0.0, -mg, 0.0, 0.0],
        [mg, 0.0, 0.0, 0.0],
    ])
    B = np.array([0.0, 0.0, 0.0, 1.0])
    return A, B


def continuous_dynamics(x: np.ndarray, u: float, params: AlipParams) -> np.ndarray:
    """State derivative for ankle torque u."""
    A, B = dynamics_matrices(params)
    return A @ np.asarray(x, dtype=float) + B * float(u)


def discretize(params: AlipParams, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold discretization over one knot interval."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    A, B = dynamics_matrices(params)
    Ad = expm(A * dt)
    Bd = np.linalg.solve(A, (Ad - np.eye(4)) @ B)
    return Ad, Bd


def cop_offset_matrix(params: AlipParams) -> np.ndarray:
    """4x3 map from (CoP - stance foot) offset to state derivative.

    Only the momentum rows are driven: a CoP displaced by (dx, dy) shifts
    the ground-reaction moment about the old stance foot.
    """
    mg = params.mass * params.gravity
    return np.array([
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
        [0.0, mg, 0.0],
        [-mg, 0.0, 0.0],
    ])


# Coordinate change onto the new stance foot: CoM position is re-expressed
# relative to the new foot, momentum is unchanged (CoM velocity is assumed
# parallel to the step direction, so the transport term vanishes).
FOOT_FRAME_SHIFT = np.array([
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0],
])


def double_stance_flow(params: AlipParams, t_ds: float) -> tuple[np.ndarray, np.ndarray]:
    """First-order-hold solution of the double-stance dynamics.

    Returns (Ar, Bds) such that the state at the end of double stance,
    still expressed relative to the old stance foot, is
    ``Ar @ x_minus + Bds @ (p_plus - p_minus)`` for a CoP swept linearly
    from the old to the new foot over ``t_ds`` seconds.
    """
    if t_ds <= 0:
        raise ValueError("double-stance duration must be positive")
    A, _ = dynamics_matrices(params)
    Ar = expm(A * t_ds)
    Ar_inv = np.linalg.inv(Ar)
    A_inv = np.linalg.inv(A)
    Bcop = cop_offset_matrix(params)
    Bds = Ar @ A_inv @ ((A_inv @ (np.eye(4) - Ar_inv)) / t_ds - Ar_inv) @ Bcop
    return Ar, Bds


def reset_map_matrices(params: AlipParams, t_ds: float) -> tuple[np.ndarray, np.ndarray]:
    """Full touchdown-to-liftoff reset: (Ar, Br) with x+ = Ar x- + Br (p+ - p-)."""
    Ar, Bds = double_stance_flow(params, t_ds)
    return Ar, Bds + FOOT_FRAME_SHIFT


def double_stance_reset(
    x_minus: np.ndarray,
    p_minus: np.ndarray,
    p_plus: np.ndarray,
    params: AlipParams,
    timing: GaitTiming,
) -> np.ndarray:
    """Map the pre-touchdown state to the post-liftoff state on the new foot."""
    Ar, Br = reset_map_matrices(params, timing.double_stance)
    dp = np.asarray(p_plus, dtype=float) - np.asarray(p_minus, dtype=float)
    return Ar @ np.asarray(x_minus, dtype=float) + Br @ dp


def step_to_step_matrices(params: AlipParams, timing: GaitTiming) -> tuple[np.ndarray, np.ndarray]:
    """Discrete dynamics from one stance start to the next.

    The input is the next footstep expressed in the current stance frame
    (equivalently the footstep displacement, since the stance frame origin
    sits at the current foot).
    """
    A, _ = dynamics_matrices(params)
    A_s2s = expm(A * timing.step_period)
    _, Br = reset_map_matrices(params, timing.double_stance)
    return A_s2s, Br


def reference_footstep_deltas(command: GaitCommand, timing: GaitTiming) -> np.ndarray:
    """(2, 3) footstep displacements for one left/right step pair."""
    vx, vy = command.velocity
    base = np.array([vx * timing.step_period, vy * timing.step_period, 0.0])
    lateral = np.array([0.0, command.stance_width, 0.0])
    s = float(command.first_stance)
    return np.stack([base + s * lateral, base - s * lateral])


def periodic_reference(
    command: GaitCommand,
    params: AlipParams,
    timing: GaitTiming,
) -> tuple[np.ndarray, np.ndarray]:
    """Period-2 orbit achieving the commanded average velocity.

    Returns the stance-start state for the first stance sign and the two
    footstep displacements.  The orbit satisfies x_{n+2} = x_n under the
    step-to-step dynamics driven by those displacements.
    """
    A_s2s, Br = step_to_step_matrices(params, timing)
    deltas = reference_footstep_deltas(command, timing)
    M2 = np.eye(4) - A_s2s @ A_s2s
    cond = np.linalg.cond(M2)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularFixedPoint(
            f"period-2 fixed point system is singular (condition estimate {cond:.3e})"
        )
    rhs = A_s2s @ (Br @ deltas[0]) + Br @ deltas[1]
    x0 = np.linalg.solve(M2, rhs)
    return x0, deltas


def orbit_stance_states(
    command: GaitCommand,
    params: AlipParams,
    timing: GaitTiming,
) -> np.ndarray:
    """(2, 4) stance-start states of the period-2 orbit, first stance first."""
    A_s2s, Br = step_to_step_matrices(params, timing)
    x0, deltas = periodic_reference(command, params, timing)
    x1 = A_s2s @ x0 + Br @ deltas[0]
    return np.stack([x0, x1])
