"""Discrete-time kinematic single-track model with clamped inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .geometry import _wrap
from .scenario import ControlInput, EgoState


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.5
    max_steer_rate: float = 0.4
    max_accel: float = 4.0
    max_steer: float = 0.6
    max_speed: float = 30.0
    width: float = 1.9
    length: float = 4.5

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ValueError(f"vehicle parameter {name} must be positive, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.wheelbase, self.max_steer_rate, self.max_accel,
                         self.max_steer, self.max_speed])


@njit(cache=True)
def _step(x, y, delta, v, psi, steer_rate, accel, wb, vd_max, a_max, d_max, v_max, dt):
    if steer_rate > vd_max:
        steer_rate = vd_max
    elif steer_rate < -vd_max:
        steer_rate = -vd_max
    if accel > a_max:
        accel = a_max
    elif accel < -a_max:
        accel = -a_max
    nx = x + dt * v * math.cos(psi)
    ny = y + dt * v * math.sin(psi)
    npsi = _wrap(psi + dt * (v / wb) * math.tan(delta))
    nd = delta + dt * steer_rate
    if nd > d_max:
        nd = d_max
    elif nd < -d_max:
        nd = -d_max
    nv = v + dt * accel
    if nv < 0.0:
        nv = 0.0
    elif nv > v_max:
        nv = v_max
    return nx, ny, nd, nv, npsi


@njit(cache=True)
def _rollout(x0, inputs, vp, dt):
    n = inputs.shape[0]
    out = np.empty((n, 5))
    x, y, d, v, p = x0[0], x0[1], x0[2], x0[3], x0[4]
    for t in range(n):
        x, y, d, v, p = _step(x, y, d, v, p, inputs[t, 0], inputs[t, 1],
                              vp[0], vp[1], vp[2], vp[3], vp[4], dt)
        out[t, 0] = x
        out[t, 1] = y
        out[t, 2] = d
        out[t, 3] = v
        out[t, 4] = p
    return out


def step(state: EgoState, u: ControlInput, params: VehicleParams, dt: float) -> EgoState:
    """Advance one forward-Euler step.

    Inputs are clamped to the actuator limits before integration; steering
    and speed are clamped after it, so the update never fails.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return EgoState(*_step(
        state.x, state.y, state.steer, state.speed, state.yaw,
        u.steer_rate, u.accel,
        params.wheelbase, params.max_steer_rate, params.max_accel,
        params.max_steer, params.max_speed, dt,
    ))


def rollout_array(state0: np.ndarray, inputs: np.ndarray, params: VehicleParams, dt: float) -> np.ndarray:
    """Array form of :func:`rollout`: ``inputs`` (T, 2) -> states (T, 5)."""
    return _rollout(np.asarray(state0, dtype=float),
                    np.ascontiguousarray(inputs, dtype=float), params.as_array(), dt)


def rollout(state0: EgoState, inputs: Sequence[ControlInput], params: VehicleParams, dt: float) -> list[EgoState]:
    """Iterate :func:`step`; element ``t`` is the state after ``t + 1`` steps."""
    u = np.array([[c.steer_rate, c.accel] for c in inputs], dtype=float).reshape(-1, 2)
    return [EgoState.from_array(row) for row in rollout_array(state0.as_array(), u, params, dt)]
