"""Sampling-based MPC: perturb, roll out, exponentially weight, average."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

log = logging.getLogger(__name__)


class Problem(Protocol):
    def evaluate(self, x0: np.ndarray, U: np.ndarray) -> np.ndarray: ...

    def rollout(self, x0: np.ndarray, U: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class MPPIConfig:
    rollouts: int = 200
    horizon: int = 50
    inverse_temperature: float = 0.02
    momentum: float = 0.75
    noise_std: tuple[float, ...] = (1.0, 1.0)
    elite: bool = True
    hold: int = 1

    def __post_init__(self):
        if self.rollouts < 2:
            raise ValueError("MPPI needs at least two rollouts")
        if self.horizon < 1:
            raise ValueError("MPPI horizon must be positive")
        if self.inverse_temperature <= 0:
            raise ValueError("inverse temperature must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.hold < 1:
            raise ValueError("noise hold must be at least one step")
        if any(s < 0 for s in self.noise_std):
            raise ValueError("noise standard deviations must be non-negative")


def sample_perturbations(rng: np.random.Generator, rollouts: int, horizon: int,
                         std, elite: bool = True, hold: int = 1) -> np.ndarray:
    """Zero-mean Gaussian input perturbations of shape (rollouts, horizon, m).

    Each draw is held for ``hold`` consecutive steps (zero-order hold), so
    every step keeps the marginal N(0, std**2) while samples stay smooth
    enough to survive the input-rate cost. ``hold=1`` is white noise.
    With ``elite`` the first rollout is left unperturbed so the current
    nominal sequence is always among the candidates.
    """
    std = np.asarray(std, dtype=float)
    blocks = -(-horizon // hold)
    v = rng.standard_normal((rollouts, blocks, std.size)) * std
    if hold > 1:
        v = np.repeat(v, hold, axis=1)[:, :horizon]
    if elite:
        v[0] = 0.0
    return v


def weights(costs: np.ndarray, inverse_temperature: float) -> np.ndarray:
    """Unnormalized exponential weights, shifted so the best rollout gets 1."""
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise ValueError("rollout costs must be finite")
    return np.exp(-(costs - costs.min()) / inverse_temperature)


def averaged_perturbation(perturbations: np.ndarray, w: np.ndarray) -> np.ndarray:
    total = w.sum()
    if not total > 0 or not np.isfinite(total):
        log.warning("all rollout weights underflowed; using uniform weights")
        w = np.ones_like(w)
        total = w.sum()
    return np.tensordot(w, perturbations, axes=1) / total


def update(U: np.ndarray, perturbations: np.ndarray, w: np.ndarray, momentum: float,
           previous_direction: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Momentum-smoothed averaging step; returns (new U, applied direction)."""
    delta = averaged_perturbation(perturbations, w)
    if previous_direction is None or momentum == 0.0:
        direction = delta if momentum == 0.0 else (1.0 - momentum) * delta
    else:
        direction = momentum * previous_direction + (1.0 - momentum) * delta
    return U + direction, direction


class MPPIPlanner:
    """Keeps the nominal input sequence and momentum between planning ticks."""

    def __init__(self, config: MPPIConfig, rng: np.random.Generator, n_inputs: int | None = None,
                 bounds: tuple[np.ndarray, np.ndarray] | None = None):
        self.config = config
        self.rng = rng
        m = n_inputs if n_inputs is not None else len(config.noise_std)
        # samples and the nominal sequence are kept inside the input box, so
        # perturbations never push into regions where the cost is flat
        self.bounds = None if bounds is None else (np.asarray(bounds[0], float), np.asarray(bounds[1], float))
        self.U = np.zeros((config.horizon, m))
        self.direction = np.zeros((config.horizon, m))
        self.last_costs: np.ndarray | None = None

    def improve(self, x0: np.ndarray, problem: Problem) -> np.ndarray:
        """One sample-evaluate-weight-update iteration from ``x0``; returns rollout costs."""
        cfg = self.config
        v = sample_perturbations(self.rng, cfg.rollouts, cfg.horizon, cfg.noise_std,
                                 cfg.elite, cfg.hold)
        samples = self.U[None, :, :] + v
        if self.bounds is not None:
            samples = np.clip(samples, *self.bounds)
            v = samples - self.U[None, :, :]
        costs = problem.evaluate(x0, samples)
        w = weights(costs, cfg.inverse_temperature)
        self.U, self.direction = update(self.U, v, w, cfg.momentum, self.direction)
        if self.bounds is not None:
            self.U = np.clip(self.U, *self.bounds)
        self.last_costs = costs
        return costs

    def advance(self) -> np.ndarray:
        """Commit the first nominal input and shift the horizon by one step."""
        u0 = self.U[0].copy()
        self.U = np.vstack([self.U[1:], self.U[-1:]])
        self.direction = np.vstack([self.direction[1:], self.direction[-1:]])
        return u0

    def plan(self, x0: np.ndarray, problem: Problem) -> tuple[np.ndarray, np.ndarray]:
        """Run one iteration and return (planned states, nominal inputs)."""
        self.improve(x0, problem)
        return problem.rollout(x0, self.U), self.U.copy()
