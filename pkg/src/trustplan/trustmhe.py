"""Moving-horizon reliability estimate for a trajectory predictor.

Predictions generated ``horizon`` prediction ticks ago are scored against
the agent positions measured since, and the confidence-weighted displacement
error is squashed into a reliability ``omega`` in [0, 1] with momentum.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .scenario import PredictionSet


def weighted_ade(entries: Sequence[tuple[np.ndarray, np.ndarray, np.ndarray]],
                 divide_by_modalities: bool = True) -> float | None:
    """Confidence-weighted average displacement error over a window.

    Each entry is ``(predicted, confidences, measured)`` for one agent with
    shapes (K, T, 2), (K,) and (T, 2). Confidences are renormalized per
    agent. Returns ``None`` when there is no agent to compare.

    The mean runs over agents and, with ``divide_by_modalities``, also over
    the modality count K even though the confidences already sum to one.
    """
    if not entries:
        return None
    total = 0.0
    k_max = 0
    for predicted, conf, measured in entries:
        predicted = np.asarray(predicted, dtype=float)
        conf = np.asarray(conf, dtype=float)
        conf = conf / conf.sum()
        steps = predicted.shape[1]
        err = np.hypot(*(predicted - np.asarray(measured, dtype=float)[None]).transpose(2, 0, 1))
        total += float(np.sum(conf / steps * err.sum(axis=1)))
        k_max = max(k_max, predicted.shape[0])
    n = len(entries)
    return total / (n * k_max) if divide_by_modalities else total / n


def reliability_map(d: float, scale: float = 1.0) -> float:
    """2 * sigmoid(-scale * d): 1 for a perfect predictor, towards 0 as d grows."""
    z = scale * d
    return 2.0 / (1.0 + math.exp(z)) if z < 700 else 0.0


def update_reliability(omega: float, d: float, momentum: float, scale: float = 1.0) -> float:
    if d < 0:
        raise ValueError(f"displacement error must be non-negative, got {d}")
    new = momentum * omega + (1.0 - momentum) * reliability_map(d, scale)
    return min(max(new, 0.0), 1.0)


@dataclass(frozen=True)
class EstimatorTick:
    time: float
    omega: float
    ade: float | None
    status: str  # "updated", "warmup" or "no-evidence"


class TrustMHE:
    """Reliability estimator fed once per prediction tick.

    The buffers hold the last ``horizon + 1`` prediction batches and
    measurement snapshots; a batch is scored once it is exactly ``horizon``
    ticks old. Agents missing from any snapshot in between are skipped.
    """

    def __init__(self, horizon: int, momentum: float = 0.25, scale: float = 1.0,
                 divide_by_modalities: bool = True, initial: float = 1.0):
        if horizon < 1:
            raise ValueError("estimation horizon must be at least one tick")
        if not 0.0 <= momentum <= 1.0:
            raise ValueError("momentum must lie in [0, 1]")
        self.horizon = horizon
        self.momentum = momentum
        self.scale = scale
        self.divide_by_modalities = divide_by_modalities
        self.omega = initial
        self.batches: deque[tuple[int, Mapping[int, PredictionSet]]] = deque(maxlen=horizon + 1)
        self.measurements: deque[tuple[int, float, Mapping[int, tuple[float, float]]]] = deque(maxlen=horizon + 1)

    def tick(self, tick_index: int, sim_time: float,
             measured: Mapping[int, tuple[float, float]],
             predictions: Mapping[int, PredictionSet] | None = None) -> EstimatorTick:
        self.measurements.append((tick_index, sim_time, dict(measured)))
        result = self._score(tick_index, sim_time)
        if predictions is not None:
            self.batches.append((tick_index, predictions))
        return result

    def _score(self, tick_index: int, sim_time: float) -> EstimatorTick:
        target = tick_index - self.horizon
        batch = next((b for t, b in self.batches if t == target), None)
        window = [m for m in self.measurements if target < m[0] <= tick_index]
        if batch is None or len(window) < self.horizon:
            return EstimatorTick(sim_time, self.omega, None, "warmup")
        times = np.array([m[1] for m in window])
        entries = []
        for agent_id, ps in batch.items():
            if not all(agent_id in m[2] for m in window):
                continue
            measured = np.array([m[2][agent_id] for m in window])
            entries.append((predicted_positions(ps, times), ps.confidences, measured))
        d = weighted_ade(entries, self.divide_by_modalities)
        if d is None:
            return EstimatorTick(sim_time, self.omega, None, "no-evidence")
        self.omega = update_reliability(self.omega, d, self.momentum, self.scale)
        return EstimatorTick(sim_time, self.omega, d, "updated")


def predicted_positions(ps: PredictionSet, times: np.ndarray) -> np.ndarray:
    """Modality means at absolute ``times``, shape (K, T, 2).

    Linear interpolation between points and linear extrapolation beyond
    either end of the predicted horizon.
    """
    pts = ps.stacked()
    src = ps.generated_time + ps.dt * np.arange(1, pts.shape[1] + 1)
    out = np.empty((pts.shape[0], len(times), 2))
    for k in range(pts.shape[0]):
        for j in range(2):
            y = np.interp(times, src, pts[k, :, j])
            if len(src) > 1:
                hi = times > src[-1]
                slope = (pts[k, -1, j] - pts[k, -2, j]) / ps.dt
                y[hi] = pts[k, -1, j] + slope * (times[hi] - src[-1])
                lo = times < src[0]
                slope = (pts[k, 1, j] - pts[k, 0, j]) / ps.dt
                y[lo] = pts[k, 0, j] + slope * (times[lo] - src[0])
            out[k, :, j] = y
    return out
