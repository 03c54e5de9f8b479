"""Deterministic closed-loop engine.

One base tick is the physics step. Replanning and prediction run on integer
multiples of it. The planner works from the ego state predicted one replan
interval ahead (the committed first input applied), a tracker turns the
plan into actuator commands, and a crash monitor counts contacts.
"""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .costs import CostWeights, DrivingCostModel
from .dynamics import VehicleParams, _step
from .geometry import _box_distance, _wrap
from .mppi import MPPIConfig, MPPIPlanner
from .predictors import ConstantVelocityPredictor, OraclePredictor
from .scenario import ControlInput, EgoState, OffRouteError, ScenarioConfig, project_to_route
from .scenarios import builtin_scenario
from .traffic import TrafficModel
from .trustmhe import TrustMHE

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1
TRACE_COLUMNS = ("sim_time_s", "omega", "weighted_ade_m", "ego_x", "ego_y", "ego_v",
                 "min_dist_m", "crash_count")
CRASH_CLEARANCE = 0.5
PLANNER_STREAM = 7


def schedule_tick(tick: int, replan_ticks: int = 20, prediction_ticks: int = 50) -> frozenset[str]:
    """Tasks due at base tick ``tick``; the estimator runs on the prediction grid."""
    due = {"physics"}
    if tick % replan_ticks == 0:
        due.add("replan")
    if tick % prediction_ticks == 0:
        due.update(("predict", "trustmhe"))
    return frozenset(due)


@dataclass(frozen=True)
class Plan:
    """Planned ego states (N, 5) at absolute ``times``, made at ``created``."""

    created: float
    times: np.ndarray
    states: np.ndarray

    def at(self, t: float) -> np.ndarray:
        out = np.empty(5)
        for j in range(4):
            out[j] = np.interp(t, self.times, self.states[:, j])
        yaw = np.unwrap(self.states[:, 4])
        out[4] = _wrap(float(np.interp(t, self.times, yaw)))
        return out


@dataclass(frozen=True)
class TrackerGains:
    lookahead_time: float = 0.5
    min_lookahead: float = 1.0
    steer_gain: float = 4.0
    speed_gain: float = 2.0


def track_trajectory(ego: EgoState, plan: Plan | None, t: float, vehicle: VehicleParams,
                     stale_after: float, gains: TrackerGains = TrackerGains()) -> ControlInput:
    """Pure pursuit on the time-interpolated plan with proportional speed control.

    A missing or stale plan yields full braking with the wheel held.
    """
    if plan is None or t - plan.created > stale_after + 1e-9:
        return ControlInput(0.0, -vehicle.max_accel)
    ref = plan.at(t)
    target = plan.at(t + gains.lookahead_time)
    dx, dy = target[0] - ego.x, target[1] - ego.y
    ld = math.hypot(dx, dy)
    if ld < gains.min_lookahead:
        delta_des = ref[2]
    else:
        alpha = _wrap(math.atan2(dy, dx) - ego.yaw)
        delta_des = math.atan(2.0 * vehicle.wheelbase * math.sin(alpha) / ld)
    steer_rate = gains.steer_gain * (delta_des - ego.steer)
    h = 0.05
    a_ff = (np.interp(t + h, plan.times, plan.states[:, 3])
            - np.interp(t - h, plan.times, plan.states[:, 3])) / (2 * h)
    accel = a_ff + gains.speed_gain * (ref[3] - ego.speed)
    steer_rate = min(max(steer_rate, -vehicle.max_steer_rate), vehicle.max_steer_rate)
    accel = min(max(float(accel), -vehicle.max_accel), vehicle.max_accel)
    return ControlInput(float(steer_rate), accel)


class CrashMonitor:
    """Counts contacts per agent, re-armed once clearance exceeds ``clearance``."""

    def __init__(self, clearance: float = CRASH_CLEARANCE):
        self.clearance = clearance
        self.open: set[int] = set()
        self.count = 0
        self.per_agent: dict[int, int] = {}

    def update(self, distances: dict[int, float]) -> int:
        new = 0
        for agent_id, d in distances.items():
            if agent_id in self.open:
                if d > self.clearance:
                    self.open.discard(agent_id)
            elif d <= 0.0:
                self.open.add(agent_id)
                self.per_agent[agent_id] = self.per_agent.get(agent_id, 0) + 1
                new += 1
        # agents that vanished close their events
        self.open &= set(distances)
        self.count += new
        return new


@dataclass(frozen=True)
class RunRecord:
    scenario: str
    mode: str
    noise: float
    trustmhe: bool
    t_est: int
    seed: int
    config_hash: str
    crashes: int
    progress: float
    success: bool
    min_dist: float
    sim_time: float
    wall_time: float
    aborted: bool = False
    error: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


class Simulation:
    def __init__(self, cfg: ExperimentConfig, scenario: ScenarioConfig | None = None,
                 vehicle: VehicleParams = VehicleParams()):
        self.cfg = cfg
        self.scenario = scenario or builtin_scenario(cfg.scenario)
        self.vehicle = vehicle
        self.route = self.scenario.built_route
        self.duration = cfg.duration if cfg.duration is not None else self.scenario.duration
        pc = cfg.planner
        self.pred_horizon = max(cfg.predictor.horizon,
                                math.ceil(cfg.t_est * cfg.prediction_interval / pc.dt - 1e-9))
        span = self.duration + cfg.prediction_interval + (pc.horizon + self.pred_horizon + 5) * pc.dt
        self.traffic = TrafficModel(self.scenario.agents, span, seed=cfg.seed, dt=cfg.state_dt)
        self.oracle = OraclePredictor(self.traffic.truth, pc.dt, cfg.predictor.modalities,
                                      cfg.degradation, cfg.seed, cfg.predictor.baseline_sigma,
                                      cfg.predictor.modality_spread)
        self.fallback = ConstantVelocityPredictor(pc.dt)
        self.model = DrivingCostModel(
            self.route, CostWeights.for_mode(cfg.mode), vehicle, pc.dt,
            self.scenario.desired_speed, self.scenario.distance_threshold,
            self.scenario.safety_margin, self.scenario.attention_radius)
        mcfg = MPPIConfig(pc.rollouts, pc.horizon, pc.inverse_temperature, pc.momentum,
                          (cfg.noise, pc.accel_noise), hold=pc.noise_hold)
        limits = np.array([vehicle.max_steer_rate, vehicle.max_accel])
        self.planner = MPPIPlanner(mcfg, np.random.default_rng([cfg.seed, PLANNER_STREAM]),
                                   bounds=(-limits, limits))
        self.estimator = TrustMHE(cfg.t_est, cfg.beta_est, cfg.alpha, cfg.divide_by_modalities)

    def run(self, trace: io.TextIOBase | None = None) -> RunRecord:
        cfg, veh = self.cfg, self.vehicle
        wall0 = time.perf_counter()
        dt = cfg.state_dt
        n_ticks = int(round(self.duration / dt))
        stale_after = 2 * cfg.replan_interval
        ego = self.scenario.ego.state()
        p0 = project_to_route(self.route, (ego.x, ego.y))
        s_start = p0.arclength
        span = max(self.route.goal_arclength - s_start, 1e-9)
        progress = 0.0
        monitor = CrashMonitor()
        min_dist = math.inf
        plan: Plan | None = None
        ai_preds: dict = {}
        omega = 1.0
        pred_step = 0
        rows = []
        vp = veh.as_array()
        ego_hl, ego_hw = 0.5 * veh.length, 0.5 * veh.width
        ego_r = math.hypot(ego_hl, ego_hw)
        agent_r = {a.agent_id: math.hypot(0.5 * a.length, 0.5 * a.width) for a in self.scenario.agents}
        t = 0.0
        error = ""
        try:
            for k in range(n_ticks + 1):
                t = k * dt
                due = schedule_tick(k, cfg.replan_ticks, cfg.prediction_ticks)
                agents = self.traffic.agents(t)

                # contact bookkeeping for the current state
                distances = {}
                c, s = math.cos(ego.yaw), math.sin(ego.yaw)
                for a in agents:
                    lb = math.hypot(a.x - ego.x, a.y - ego.y) - ego_r - agent_r[a.agent_id]
                    need = max(min_dist, CRASH_CLEARANCE if a.agent_id in monitor.open else 0.0)
                    if lb > need:
                        distances[a.agent_id] = lb
                        continue
                    d = _box_distance(ego.x, ego.y, c, s, ego_hl, ego_hw,
                                      a.x, a.y, math.cos(a.yaw), math.sin(a.yaw),
                                      0.5 * a.length, 0.5 * a.width)
                    distances[a.agent_id] = d
                    min_dist = min(min_dist, d)
                monitor.update(distances)

                if "predict" in due:
                    ai_preds = self.oracle.predict(agents, pred_step, t, self.pred_horizon)
                    measured = {a.agent_id: (a.x, a.y) for a in agents}
                    est = self.estimator.tick(pred_step, t, measured, ai_preds)
                    if cfg.trustmhe:
                        omega = est.omega
                    pred_step += 1
                    ade = "warmup" if est.ade is None else f"{est.ade:.6f}"
                    rows.append((t, omega, ade, ego.x, ego.y, ego.speed, min_dist, monitor.count))

                if "replan" in due:
                    proj = project_to_route(self.route, (ego.x, ego.y))
                    progress = max(progress, 100.0 * min(1.0, max(0.0, (proj.arclength - s_start) / span)))
                    if progress >= 100.0:
                        break
                    plan = self._replan(ego, t, agents, ai_preds, omega)

                u = track_trajectory(ego, plan, t, veh, stale_after)
                ego = EgoState(*_step(ego.x, ego.y, ego.steer, ego.speed, ego.yaw,
                                      u.steer_rate, u.accel, vp[0], vp[1], vp[2], vp[3], vp[4], dt))
        except (ValueError, OffRouteError, FloatingPointError) as exc:
            error = f"{type(exc).__name__} at t={t:.3f}s: {exc}"
            log.error("run aborted: %s", error)

        if trace is not None:
            write_trace(trace, rows)
        crashes = monitor.count
        return RunRecord(
            scenario=cfg.scenario, mode=cfg.mode, noise=cfg.noise, trustmhe=cfg.trustmhe,
            t_est=cfg.t_est, seed=cfg.seed, config_hash=cfg.config_hash(),
            crashes=crashes, progress=round(progress, 6), success=(crashes == 0 and not error),
            min_dist=min_dist, sim_time=round(t, 6),
            wall_time=time.perf_counter() - wall0, aborted=bool(error), error=error,
        )

    def _replan(self, ego: EgoState, t: float, agents, ai_preds, omega: float) -> Plan:
        pc = self.cfg.planner
        u0 = self.planner.advance()
        x_now = ego.as_array()
        x_start = np.array(_step(*x_now, u0[0], u0[1], *self.vehicle.as_array(), pc.dt))
        start = EgoState.from_array(x_start)
        fallback = self.fallback.predict(agents, 0, t, pc.horizon + 2)
        ctx = self.model.context(start, t + pc.dt, pc.horizon, agents, ai_preds, fallback,
                                 omega=omega, u_prev=(float(u0[0]), float(u0[1])))
        traj, _ = self.planner.plan(x_start, ctx)
        times = t + pc.dt * np.arange(len(traj) + 2)
        states = np.vstack([x_now, x_start, traj])
        return Plan(t, times, states)


def write_trace(stream: io.TextIOBase, rows) -> None:
    stream.write(f"# schema_version: {TRACE_SCHEMA_VERSION}\n")
    stream.write(",".join(TRACE_COLUMNS) + "\n")
    for t, omega, ade, x, y, v, md, cc in rows:
        md_s = "inf" if math.isinf(md) else f"{md:.6f}"
        stream.write(f"{t:.3f},{omega:.6f},{ade},{x:.6f},{y:.6f},{v:.6f},{md_s},{cc}\n")


def run(cfg: ExperimentConfig, trace_path: str | Path | None = None,
        scenario: ScenarioConfig | None = None) -> RunRecord:
    """Execute one configured run; optionally write its per-prediction-tick trace."""
    sim = Simulation(cfg, scenario)
    if trace_path is None:
        return sim.run()
    buf = io.StringIO()
    record = sim.run(buf)
    Path(trace_path).write_text(buf.getvalue())
    return record
