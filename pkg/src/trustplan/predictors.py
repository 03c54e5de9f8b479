"""Trajectory predictors: constant-velocity fallback and a degradable oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol

import numpy as np

from .scenario import AgentState, PredictionSet, TrajectoryModality, normalize_confidences

FALLBACK_SIGMA = 0.1

# (agent_id, times) -> (x, y, yaw) arrays of the agent's realized motion
GroundTruth = Callable[[int, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


@dataclass(frozen=True)
class DegradationSchedule:
    """Time window in which the oracle's output is corrupted."""

    onset_s: float
    offset_s: float
    sigma_deg: float = 0.0
    heading_bias: float = 0.0
    shuffle_confidences: bool = False

    def __post_init__(self):
        if not self.onset_s < self.offset_s:
            raise ValueError("degradation onset must precede offset")
        if self.sigma_deg < 0:
            raise ValueError("sigma_deg must be non-negative")

    def active(self, t: float) -> bool:
        return self.onset_s <= t < self.offset_s


class Predictor(Protocol):
    def predict(self, agents: Iterable[AgentState], step_index: int, sim_time: float,
                horizon: int) -> dict[int, PredictionSet]: ...


def _points(xy: np.ndarray, yaw: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    n = len(yaw)
    pts = np.empty((n, 6))
    pts[:, :2] = xy
    pts[:, 2] = sigma
    pts[:, 3] = sigma
    pts[:, 4] = 0.0
    pts[:, 5] = yaw
    return pts


def predict_constant_velocity(agent: AgentState, horizon: int, dt: float,
                              step_index: int = 0, sim_time: float = 0.0) -> PredictionSet:
    """Straight-line extrapolation at the agent's current speed and heading."""
    if horizon < 1:
        raise ValueError("prediction horizon must be at least one step")
    tau = dt * np.arange(1, horizon + 1)
    xy = np.column_stack([agent.x + tau * agent.speed * math.cos(agent.yaw),
                          agent.y + tau * agent.speed * math.sin(agent.yaw)])
    pts = _points(xy, np.full(horizon, agent.yaw), np.full(horizon, FALLBACK_SIGMA))
    return PredictionSet(agent.agent_id, step_index, (TrajectoryModality(pts, 1.0),),
                         dt, agent.width, agent.length, sim_time)


def predict_constant_turn(agent: AgentState, yaw_rate: float, horizon: int, dt: float,
                          step_index: int = 0, sim_time: float = 0.0) -> PredictionSet:
    """Constant speed and constant yaw rate, integrated exactly along the arc."""
    if horizon < 1:
        raise ValueError("prediction horizon must be at least one step")
    if abs(yaw_rate) < 1e-9:
        return predict_constant_velocity(agent, horizon, dt, step_index, sim_time)
    tau = dt * np.arange(1, horizon + 1)
    yaw = agent.yaw + yaw_rate * tau
    r = agent.speed / yaw_rate
    xy = np.column_stack([agent.x + r * (np.sin(yaw) - math.sin(agent.yaw)),
                          agent.y - r * (np.cos(yaw) - math.cos(agent.yaw))])
    yaw = (yaw + np.pi) % (2 * np.pi) - np.pi
    pts = _points(xy, yaw, np.full(horizon, FALLBACK_SIGMA))
    return PredictionSet(agent.agent_id, step_index, (TrajectoryModality(pts, 1.0),),
                         dt, agent.width, agent.length, sim_time)


class ConstantVelocityPredictor:
    """Physics fallback; ``turn=True`` switches to constant turn rate.

    The turn-rate variant needs yaw rates, fed through :meth:`observe`.
    """

    def __init__(self, dt: float, turn: bool = False):
        self.dt = dt
        self.turn = turn
        self._last_yaw: dict[int, tuple[float, float]] = {}
        self._yaw_rate: dict[int, float] = {}

    def observe(self, agents: Iterable[AgentState], sim_time: float) -> None:
        for a in agents:
            prev = self._last_yaw.get(a.agent_id)
            if prev is not None and sim_time > prev[0]:
                dyaw = (a.yaw - prev[1] + math.pi) % (2 * math.pi) - math.pi
                self._yaw_rate[a.agent_id] = dyaw / (sim_time - prev[0])
            self._last_yaw[a.agent_id] = (sim_time, a.yaw)

    def predict(self, agents, step_index, sim_time, horizon):
        out = {}
        for a in agents:
            if self.turn:
                out[a.agent_id] = predict_constant_turn(
                    a, self._yaw_rate.get(a.agent_id, 0.0), horizon, self.dt, step_index, sim_time)
            else:
                out[a.agent_id] = predict_constant_velocity(a, horizon, self.dt, step_index, sim_time)
        return out


def modality_confidences(k: int, decay: float = 1.2) -> np.ndarray:
    return normalize_confidences(np.exp(-decay * np.arange(k)))


def predict_oracle(
    agent: AgentState,
    truth: GroundTruth,
    sim_time: float,
    step_index: int,
    n_modalities: int,
    horizon: int,
    dt: float,
    schedule: DegradationSchedule | None,
    rng: np.random.Generator,
    baseline_sigma: float = 0.05,
    modality_spread: float = 1.0,
) -> PredictionSet:
    """Multimodal prediction built from the agent's realized future.

    Modality 0 follows the true future with a small random walk added;
    the others warp it in time and shift it laterally and longitudinally.
    Inside an active degradation window the whole set is rotated about the
    agent by ``heading_bias``, perturbed by a random walk of scale
    ``sigma_deg`` and optionally has its confidences permuted.
    """
    tau = dt * np.arange(1, horizon + 1)
    ramp = tau / tau[-1]
    # fixed draw order keeps the stream aligned whatever the noise scales are
    draws = rng.standard_normal((n_modalities, 3))
    walk = rng.standard_normal((n_modalities, horizon, 2))
    deg_walk = rng.standard_normal((n_modalities, horizon, 2))
    perm = rng.permutation(n_modalities)

    modalities = []
    for k in range(n_modalities):
        if k == 0:
            scale, lat, lon = 1.0, 0.0, 0.0
        else:
            scale = float(np.clip(1.0 + 0.05 * modality_spread * draws[k, 0], 0.5, 1.5))
            lat = 0.8 * modality_spread * draws[k, 1]
            lon = 1.0 * modality_spread * draws[k, 2]
        x, y, yaw = truth(agent.agent_id, sim_time + scale * tau)
        c, s = np.cos(yaw), np.sin(yaw)
        xy = np.column_stack([x + lon * ramp * c - lat * ramp * s,
                              y + lon * ramp * s + lat * ramp * c])
        if baseline_sigma > 0:
            xy = xy + baseline_sigma * np.cumsum(walk[k], axis=0)
        modalities.append([xy, np.asarray(yaw, dtype=float)])

    conf = modality_confidences(n_modalities)
    if schedule is not None and schedule.active(sim_time):
        cb, sb = math.cos(schedule.heading_bias), math.sin(schedule.heading_bias)
        for m, (xy, yaw) in enumerate(modalities):
            rel = xy - (agent.x, agent.y)
            rot = np.column_stack([agent.x + cb * rel[:, 0] - sb * rel[:, 1],
                                   agent.y + sb * rel[:, 0] + cb * rel[:, 1]])
            if schedule.sigma_deg > 0:
                rot = rot + schedule.sigma_deg * np.cumsum(deg_walk[m], axis=0)
            modalities[m] = [rot, yaw + schedule.heading_bias]
        if schedule.shuffle_confidences:
            conf = conf[perm]

    sigma = 0.2 + 0.15 * tau
    mods = []
    for (xy, yaw), c in zip(modalities, conf):
        yaw = (yaw + np.pi) % (2 * np.pi) - np.pi
        mods.append(TrajectoryModality(_points(xy, yaw, sigma), float(c)))
    return PredictionSet(agent.agent_id, step_index, tuple(mods), dt,
                         agent.width, agent.length, sim_time)


class OraclePredictor:
    """Stand-in for a learned multimodal predictor, driven by ground truth.

    Each agent gets its own random substream keyed by (seed, agent id,
    prediction step), so results do not depend on agent iteration order.
    """

    STREAM = 11

    def __init__(self, truth: GroundTruth, dt: float, n_modalities: int = 6,
                 schedule: DegradationSchedule | None = None, seed: int = 0,
                 baseline_sigma: float = 0.05, modality_spread: float = 1.0):
        self.truth = truth
        self.dt = dt
        self.n_modalities = n_modalities
        self.schedule = schedule
        self.seed = seed
        self.baseline_sigma = baseline_sigma
        self.modality_spread = modality_spread

    def predict(self, agents, step_index, sim_time, horizon):
        out = {}
        for a in agents:
            rng = np.random.default_rng([self.seed, self.STREAM, a.agent_id, step_index])
            out[a.agent_id] = predict_oracle(
                a, self.truth, sim_time, step_index, self.n_modalities, horizon, self.dt,
                self.schedule, rng, self.baseline_sigma, self.modality_spread)
        return out
