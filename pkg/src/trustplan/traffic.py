"""Scripted traffic: path followers with IDM-style gap keeping.

Agents do not react to the ego vehicle. Their motion is integrated once per
run on a coarse grid and interpolated onto the physics grid, which makes
the realized future available to the oracle predictor as ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import AgentScript, AgentState

TIME_HEADWAY = 1.0
DELTA = 4.0
STREAM = 23


@dataclass(frozen=True)
class _Path:
    xy: np.ndarray
    s: np.ndarray

    @classmethod
    def from_points(cls, points) -> "_Path":
        xy = np.asarray(points, dtype=float)
        s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(xy, axis=0).T))])
        if s[-1] <= 0:
            raise ValueError("agent path has zero length")
        return cls(xy, s)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def pose(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Position and heading at arclengths ``s``; extrapolates past both ends."""
        s = np.asarray(s, dtype=float)
        seg = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, len(self.s) - 2)
        p0, p1 = self.xy[seg], self.xy[seg + 1]
        seg_len = self.s[seg + 1] - self.s[seg]
        frac = (s - self.s[seg]) / seg_len
        x = p0[..., 0] + frac * (p1[..., 0] - p0[..., 0])
        y = p0[..., 1] + frac * (p1[..., 1] - p0[..., 1])
        yaw = np.arctan2(p1[..., 1] - p0[..., 1], p1[..., 0] - p0[..., 0])
        return x, y, yaw


def _desired_speed(script: AgentScript, base: float, t: float) -> float:
    v = base
    for t_k, v_k in script.speed_profile:
        if t >= t_k:
            v = v_k * base / script.speed
    return v


def idm_accel(v: float, v0: float, gap: float, dv: float, a_max: float, b: float, s0: float) -> float:
    """Intelligent-driver acceleration; ``gap`` is bumper to bumper, ``dv = v - v_lead``."""
    free = 1.0 - (v / v0) ** DELTA
    if math.isinf(gap):
        return a_max * free
    s_star = s0 + max(0.0, v * TIME_HEADWAY + v * dv / (2.0 * math.sqrt(a_max * b)))
    return a_max * (free - (s_star / max(gap, 1e-3)) ** 2)


class TrafficModel:
    """Precomputed agent motion over ``[0, horizon]`` on a grid of ``dt``."""

    def __init__(self, scripts: Sequence[AgentScript], horizon: float, seed: int = 0,
                 dt: float = 0.005, integration_dt: float = 0.05):
        self.scripts = tuple(scripts)
        self.dt = dt
        self.horizon = horizon
        self.ids = np.array([a.agent_id for a in self.scripts], dtype=int)
        self._index = {int(a): i for i, a in enumerate(self.ids)}
        self.paths = [_Path.from_points(a.path) for a in self.scripts]
        rng = np.random.default_rng([seed, STREAM])
        jit = rng.uniform(-1.0, 1.0, size=(max(len(self.scripts), 1), 2))
        self.start = np.array([max(0.0, a.start_time + a.start_jitter * jit[i, 0])
                               for i, a in enumerate(self.scripts)])
        self.base_speed = np.array([a.speed * (1.0 + a.speed_jitter * jit[i, 1])
                                    for i, a in enumerate(self.scripts)])
        t_coarse, s_coarse, v_coarse = self._integrate(integration_dt)
        n = int(round(horizon / dt)) + 1
        self.times = dt * np.arange(n)
        a_count = len(self.scripts)
        self.s = np.empty((n, a_count))
        self.v = np.empty((n, a_count))
        for i in range(a_count):
            self.s[:, i] = np.interp(self.times, t_coarse, s_coarse[:, i])
            self.v[:, i] = np.interp(self.times, t_coarse, v_coarse[:, i])
        self.x = np.empty((n, a_count))
        self.y = np.empty((n, a_count))
        self.yaw = np.empty((n, a_count))
        for i, path in enumerate(self.paths):
            self.x[:, i], self.y[:, i], self.yaw[:, i] = path.pose(self.s[:, i])
        lengths = np.array([p.length for p in self.paths])
        self.present = (self.times[:, None] >= self.start[None, :]) & (self.s <= lengths[None, :])

    def _integrate(self, h: float):
        steps = int(math.ceil(self.horizon / h)) + 1
        a_count = len(self.scripts)
        t = h * np.arange(steps)
        s = np.zeros((steps, a_count))
        v = np.zeros((steps, a_count))
        cur_s = np.array([a.start_offset for a in self.scripts], dtype=float)
        cur_v = np.array([_desired_speed(a, self.base_speed[i], self.start[i])
                          for i, a in enumerate(self.scripts)])
        lanes: dict[str, list[int]] = {}
        for i, a in enumerate(self.scripts):
            if a.lane:
                lanes.setdefault(a.lane, []).append(i)
        for k in range(steps):
            s[k], v[k] = cur_s, cur_v
            tk = t[k]
            acc = np.zeros(a_count)
            for i, a in enumerate(self.scripts):
                if tk < self.start[i]:
                    continue
                v0 = _desired_speed(a, self.base_speed[i], tk)
                gap, dv = math.inf, 0.0
                for j in lanes.get(a.lane, ()):
                    if j == i or tk < self.start[j] or cur_s[j] <= cur_s[i]:
                        continue
                    g = cur_s[j] - cur_s[i] - 0.5 * (a.length + self.scripts[j].length)
                    if g < gap:
                        gap, dv = g, cur_v[i] - cur_v[j]
                acc[i] = max(-a.max_decel, idm_accel(cur_v[i], v0, gap, dv,
                                                     a.max_accel, a.max_decel, a.desired_gap))
            moving = t[k] >= self.start
            new_v = np.clip(cur_v + h * acc, 0.0, 30.0)
            cur_s = np.where(moving, cur_s + h * 0.5 * (cur_v + new_v), cur_s)
            cur_v = np.where(moving, new_v, cur_v)
        return t, s, v

    def tick_index(self, t: float) -> int:
        return min(int(round(t / self.dt)), len(self.times) - 1)

    def agents(self, t: float) -> list[AgentState]:
        """Agents present in the scene at time ``t``."""
        k = self.tick_index(t)
        out = []
        for i, a in enumerate(self.scripts):
            if self.present[k, i]:
                out.append(AgentState(a.agent_id, float(self.x[k, i]), float(self.y[k, i]),
                                      float(self.yaw[k, i]), float(self.v[k, i]), a.width, a.length))
        return out

    def truth(self, agent_id: int, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Realized pose of one agent at arbitrary ``times``.

        Beyond the precomputed window the agent keeps its last speed along
        the (extrapolated) path.
        """
        i = self._index[int(agent_id)]
        times = np.asarray(times, dtype=float)
        s = np.interp(times, self.times, self.s[:, i])
        late = times > self.times[-1]
        if np.any(late):
            s = np.where(late, self.s[-1, i] + self.v[-1, i] * (times - self.times[-1]), s)
        return self.paths[i].pose(s)
