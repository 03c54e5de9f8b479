"""MPPI running cost: penalties, safety/progress/comfort/norm groups, blending.

The scalar functions are numba-compiled so the rollout kernel can call them
directly; the Python-facing wrappers below accept plain floats and records.
"""

from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass, fields
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .dynamics import VehicleParams, _step
from .geometry import _box_distance, _wrap
from .predictors import predict_constant_velocity
from .scenario import AgentState, EgoState, PredictionSet, Route

log = logging.getLogger(__name__)

LATERAL_ACCEL_LIMIT = 4.0


@dataclass(frozen=True)
class PenaltyParams:
    penalty: float = 100.0
    scale: float = 25.0
    shift: float = 7.5
    exp_cap: float = 700.0

    def __post_init__(self):
        if min(astuple(self)) <= 0:
            raise ValueError("penalty parameters must be positive")


@dataclass(frozen=True)
class CostWeights:
    """Tunable cost weights. ``yaw_rate`` and ``yaw_sum`` are carried but unused."""

    boundary: float = 2.0
    traffic: float = 2.0
    yaw: float = 1.0
    yaw_rate: float = 1.0
    progress: float = 2.0
    input: float = 1.0
    comfort: float = 1.0
    yaw_sum: float = 1.0
    offset: float = 1.0
    velocity: float = 2.0
    decay: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"cost weight {f.name} must be non-negative")

    @classmethod
    def for_mode(cls, mode: str, decay: float = 0.05) -> "CostWeights":
        try:
            row = MODE_WEIGHTS[mode]
        except KeyError:
            raise ValueError(f"unknown planner mode {mode!r}; expected one of {sorted(MODE_WEIGHTS)}") from None
        return cls(*row, decay=decay)


# column order: boundary, traffic, yaw, yaw_rate, progress, input, comfort, yaw_sum, offset, velocity
MODE_WEIGHTS = {
    "conservative": (2, 2, 1, 1, 1, 1, 1, 1, 1, 1),
    "balanced": (2, 2, 1, 1, 2, 1, 1, 1, 1, 2),
    "aggressive": (1, 1, 1, 1, 2, 1, 1, 1, 1, 2),
}

# layout of the flat parameter vector handed to the compiled kernel
(P_WB, P_VD_MAX, P_A_MAX, P_D_MAX, P_V_MAX, P_EGO_HW, P_EGO_HL, P_DT,
 P_XI_B, P_XI_PI, P_XI_PSI, P_XI_P, P_XI_I, P_XI_C, P_XI_O, P_XI_V, P_DECAY,
 P_PEN, P_SCALE, P_SHIFT, P_CAP, P_DBAR, P_OMEGA, P_I0, P_LW, P_OFFROUTE) = range(26)
N_PARAMS = 26

# per-step term layout written by the kernel when asked for a breakdown
TERM_NAMES = ("boundary", "traffic", "yaw", "progress", "comfort", "input", "offset", "velocity", "decay")


@njit(cache=True)
def _sig(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def _p_bnd(arg, pen, scale, shift, cap):
    z = arg - shift
    if z > cap:
        z = cap
    return pen * (_sig(scale * arg) + math.log1p(scale * math.exp(z)))


@njit(cache=True)
def _p_cls(arg):
    return 1.0 / (1.0 + arg * arg)


def penalty_bnd(arg: float, params: PenaltyParams = PenaltyParams()) -> float:
    """Smooth barrier: sigmoid step plus a capped softplus ramp."""
    if not math.isfinite(arg):
        raise ValueError(f"penalty argument must be finite, got {arg}")
    return float(_p_bnd(float(arg), params.penalty, params.scale, params.shift, params.exp_cap))


def penalty_cls(arg: float) -> float:
    return float(_p_cls(float(arg)))


def boundary_cost(d_lat: float, d_lat_min: float, d_lat_max: float, xi_b: float,
                  params: PenaltyParams = PenaltyParams()) -> float:
    below = d_lat_min - d_lat
    above = d_lat - d_lat_max
    return xi_b * ((penalty_bnd(below, params) + penalty_bnd(above, params))
                   + (penalty_cls(below) + penalty_cls(above)))


def yaw_cost(yaw: float, yaw_ref: float, xi_psi: float) -> float:
    e = float(_wrap(yaw - yaw_ref))
    return xi_psi * e * e


def progress_cost(route_index: float, window: float, xi_p: float) -> float:
    return xi_p * (1.0 - min(max(route_index, 0.0), window) / window)


def comfort_costs(d_lat: float, d_lat_prev: float, u, u_prev, xi_c: float, xi_i: float) -> tuple[float, float]:
    """Lateral-smoothness and input-smoothness terms, in that order."""
    dd = d_lat - d_lat_prev
    du0 = u[0] - u_prev[0]
    du1 = u[1] - u_prev[1]
    return xi_c * dd * dd, xi_i * (du0 * du0 + du1 * du1)


def desired_speed(cap: float, curvature: float, lateral_accel: float = LATERAL_ACCEL_LIMIT) -> float:
    k = abs(curvature)
    if k < 1e-12:
        return cap
    return min(cap, math.sqrt(lateral_accel / k))


def norm_costs(d_lat: float, speed: float, v_des: float, xi_o: float, xi_v: float,
               params: PenaltyParams = PenaltyParams()) -> tuple[float, float]:
    """Lateral-offset and velocity terms; the latter also punishes reversing."""
    dv = speed - v_des
    return xi_o * d_lat * d_lat, xi_v * (dv * dv + penalty_bnd(-speed, params))


def traffic_cost(
    ego: EgoState,
    predictions: Sequence[PredictionSet],
    step: int,
    vehicle: VehicleParams,
    distance_threshold: float,
    xi_pi: float,
    safety_margin: float = 0.125,
    params: PenaltyParams = PenaltyParams(),
) -> float:
    """Confidence-weighted proximity cost against every predicted modality.

    ``predictions`` are the attended agents, already aligned so that point
    ``step`` is the prediction for this rollout step.
    """
    hl = 0.5 * vehicle.length + safety_margin
    hw = 0.5 * vehicle.width
    c, s = math.cos(ego.yaw), math.sin(ego.yaw)
    total = 0.0
    for ps in predictions:
        acc = 0.0
        for m in ps.modalities:
            ax, ay, _, _, _, ayaw = m.points[step]
            d = _box_distance(ego.x, ego.y, c, s, hl, hw, ax, ay, math.cos(ayaw), math.sin(ayaw),
                              0.5 * ps.length, 0.5 * ps.width)
            acc += m.confidence * (_p_bnd(-d, params.penalty, params.scale, params.shift, params.exp_cap)
                                   + _p_cls(distance_threshold - d))
        total += acc
    return xi_pi * total


def blended_traffic_cost(omega: float, l_ai: float, l_fallback: float) -> float:
    """Reliability-weighted mix of the AI and fallback traffic costs."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError(f"reliability {omega} outside [0, 1]")
    if omega == 1.0:
        return l_ai
    if omega == 0.0:
        return l_fallback
    return omega * l_ai + (1.0 - omega) * l_fallback


@njit(cache=True)
def _project_local(x, y, hint, reach, rxy, rlen):
    """Nearest segment near ``hint`` (global search when ``hint`` < 0).

    ``reach`` is the distance travelled since ``hint`` was valid.
    """
    nseg = rlen.shape[0]
    if hint < 0:
        lo = 0
        hi = nseg
    else:
        ahead = int(abs(reach) / rlen[min(hint, nseg - 1)]) + 3
        lo = max(hint - 2, 0)
        hi = min(hint + ahead + 1, nseg)
    best = math.inf
    bi = lo
    bt = 0.0
    bcross = 0.0
    for i in range(lo, hi):
        ax = rxy[i, 0]
        ay = rxy[i, 1]
        dx = rxy[i + 1, 0] - ax
        dy = rxy[i + 1, 1] - ay
        rx = x - ax
        ry = y - ay
        t = (rx * dx + ry * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ox = rx - t * dx
        oy = ry - t * dy
        d = math.sqrt(ox * ox + oy * oy)
        if d < best:
            best = d
            bi = i
            bt = t
            bcross = dx * oy - dy * ox
    dlat = best if bcross >= 0.0 else -best
    return bi, bt, dlat


@njit(cache=True)
def _traffic(x, y, c, s, t, p, pred, conf, dims):
    hl = p[P_EGO_HL]
    hw = p[P_EGO_HW]
    total = 0.0
    for a in range(pred.shape[0]):
        acc = 0.0
        for m in range(pred.shape[1]):
            w = conf[a, m]
            if w == 0.0:
                continue
            d = _box_distance(x, y, c, s, hl, hw, pred[a, m, t, 0], pred[a, m, t, 1],
                              pred[a, m, t, 2], pred[a, m, t, 3], dims[a, 0], dims[a, 1])
            acc += w * (_p_bnd(-d, p[P_PEN], p[P_SCALE], p[P_SHIFT], p[P_CAP]) + _p_cls(p[P_DBAR] - d))
        total += acc
    return p[P_XI_PI] * total


@njit(cache=True)
def _stage_cost(t, x, y, v, psi, u0, u1, pu0, pu1, dlat_prev, hint, p,
                rxy, rlen, ryaw, rdmin, rdmax, rvdes,
                ai, ai_conf, fb, fb_conf, dims, terms):
    seg, tpar, dlat = _project_local(x, y, hint, v * p[P_DT], rxy, rlen)
    off = p[P_OFFROUTE]
    if dlat > off:
        dlat = off
    elif dlat < -off:
        dlat = -off
    pen, sc, sh, cap = p[P_PEN], p[P_SCALE], p[P_SHIFT], p[P_CAP]

    below = rdmin[seg] - dlat
    above = dlat - rdmax[seg]
    l_b = p[P_XI_B] * ((_p_bnd(below, pen, sc, sh, cap) + _p_bnd(above, pen, sc, sh, cap))
                       + (_p_cls(below) + _p_cls(above)))

    c = math.cos(psi)
    s = math.sin(psi)
    omega = p[P_OMEGA]
    if omega == 1.0:
        l_pi = _traffic(x, y, c, s, t, p, ai, ai_conf, dims)
    elif omega == 0.0:
        l_pi = _traffic(x, y, c, s, t, p, fb, fb_conf, dims)
    else:
        l_pi = (omega * _traffic(x, y, c, s, t, p, ai, ai_conf, dims)
                + (1.0 - omega) * _traffic(x, y, c, s, t, p, fb, fb_conf, dims))

    e = _wrap(psi - ryaw[seg])
    l_psi = p[P_XI_PSI] * e * e

    lw = seg + tpar - p[P_I0]
    if lw < 0.0:
        lw = 0.0
    elif lw > p[P_LW]:
        lw = p[P_LW]
    l_p = p[P_XI_P] * (1.0 - lw / p[P_LW])

    dd = dlat - dlat_prev
    l_c = p[P_XI_C] * dd * dd
    du0 = u0 - pu0
    du1 = u1 - pu1
    l_i = p[P_XI_I] * (du0 * du0 + du1 * du1)

    l_o = p[P_XI_O] * dlat * dlat
    dv = v - rvdes[seg]
    l_v = p[P_XI_V] * (dv * dv + _p_bnd(-v, pen, sc, sh, cap))

    decay = math.exp(-t * p[P_DECAY])
    safe = decay * (l_b + l_pi + l_psi)
    prog = decay * l_p
    comf = decay * (l_c + l_i)
    norm = decay * (l_o + l_v)
    if terms.shape[0] > 0:
        terms[0] = l_b
        terms[1] = l_pi
        terms[2] = l_psi
        terms[3] = l_p
        terms[4] = l_c
        terms[5] = l_i
        terms[6] = l_o
        terms[7] = l_v
        terms[8] = decay
    return safe + prog + comf + norm, dlat, seg


@njit(cache=True)
def _rollout_costs(x0, U, p, u_prev, dlat0, seg0,
                   rxy, rlen, ryaw, rdmin, rdmax, rvdes,
                   ai, ai_conf, fb, fb_conf, dims, out, terms_out):
    K = U.shape[0]
    T = U.shape[1]
    vd = p[P_VD_MAX]
    am = p[P_A_MAX]
    want_terms = terms_out.shape[0] > 0
    scratch = np.empty(0)
    for k in range(K):
        x, y, d, v, psi = x0[0], x0[1], x0[2], x0[3], x0[4]
        pu0 = u_prev[0]
        pu1 = u_prev[1]
        dprev = dlat0
        seg = seg0
        total = 0.0
        for t in range(T):
            u0 = min(max(U[k, t, 0], -vd), vd)
            u1 = min(max(U[k, t, 1], -am), am)
            x, y, d, v, psi = _step(x, y, d, v, psi, u0, u1, p[P_WB], vd, am,
                                    p[P_D_MAX], p[P_V_MAX], p[P_DT])
            tbuf = terms_out[k, t] if want_terms else scratch
            cost, dlat, seg = _stage_cost(t, x, y, v, psi, u0, u1, pu0, pu1, dprev, seg, p,
                                          rxy, rlen, ryaw, rdmin, rdmax, rvdes,
                                          ai, ai_conf, fb, fb_conf, dims, tbuf)
            total += cost
            pu0 = u0
            pu1 = u1
            dprev = dlat
        out[k] = total


class DrivingCostModel:
    """Static cost configuration for one scenario; produces per-tick contexts."""

    def __init__(self, route: Route, weights: CostWeights, vehicle: VehicleParams, dt: float,
                 desired_speed_cap: float, distance_threshold: float = 10.0,
                 safety_margin: float = 0.125, attention_radius: float = 50.0,
                 penalty: PenaltyParams = PenaltyParams(), off_route: float = 100.0):
        self.route = route
        self.weights = weights
        self.vehicle = vehicle
        self.dt = dt
        self.distance_threshold = distance_threshold
        self.safety_margin = safety_margin
        self.attention_radius = attention_radius
        self.penalty = penalty
        self.off_route = off_route
        self.v_des = np.array([desired_speed(desired_speed_cap, k) for k in route.curvature])
        self._route_arrays = (
            np.ascontiguousarray(route.xy), route.segment_lengths.copy(), route.yaw.copy(),
            route.d_lat_min.copy(), route.d_lat_max.copy(), self.v_des,
        )

    def params(self, omega: float, window_start: float) -> np.ndarray:
        w, v, pp = self.weights, self.vehicle, self.penalty
        p = np.empty(N_PARAMS)
        p[P_WB], p[P_VD_MAX], p[P_A_MAX], p[P_D_MAX], p[P_V_MAX] = v.as_array()
        p[P_EGO_HW] = 0.5 * v.width
        p[P_EGO_HL] = 0.5 * v.length + self.safety_margin
        p[P_DT] = self.dt
        p[P_XI_B], p[P_XI_PI], p[P_XI_PSI], p[P_XI_P] = w.boundary, w.traffic, w.yaw, w.progress
        p[P_XI_I], p[P_XI_C], p[P_XI_O], p[P_XI_V] = w.input, w.comfort, w.offset, w.velocity
        p[P_DECAY] = w.decay
        p[P_PEN], p[P_SCALE], p[P_SHIFT], p[P_CAP] = pp.penalty, pp.scale, pp.shift, pp.exp_cap
        p[P_DBAR] = self.distance_threshold
        p[P_OMEGA] = omega
        p[P_I0] = window_start
        p[P_LW] = float(self.route.window)
        p[P_OFFROUTE] = self.off_route
        return p

    def context(
        self,
        ego: EgoState,
        start_time: float,
        horizon: int,
        agents: Sequence[AgentState],
        ai_predictions: Mapping[int, PredictionSet],
        fallback_predictions: Mapping[int, PredictionSet],
        omega: float = 1.0,
        u_prev: tuple[float, float] = (0.0, 0.0),
    ) -> "CostContext":
        """Freeze everything one planning tick needs.

        Rollout step ``t`` is evaluated at ``start_time + (t + 1) * dt``;
        predictions are resampled onto that grid. Agents inside the attention
        radius without an AI prediction fall back to the physics prediction.
        """
        if not 0.0 <= omega <= 1.0:
            raise ValueError(f"reliability {omega} outside [0, 1]")
        rxy, rlen = self._route_arrays[0], self._route_arrays[1]
        seg0, tpar, dlat0 = _project_local(ego.x, ego.y, -1, 0.0, rxy, rlen)
        times = start_time + self.dt * np.arange(1, horizon + 1)
        visible = [a for a in agents
                   if math.hypot(a.x - ego.x, a.y - ego.y) <= self.attention_radius]
        ai_sets, fb_sets = [], []
        for a in visible:
            fb = fallback_predictions.get(a.agent_id)
            if fb is None:
                fb = predict_constant_velocity(a, horizon, self.dt, sim_time=start_time)
            ai = ai_predictions.get(a.agent_id)
            if ai is None:
                log.debug("agent %d has no AI prediction; using fallback", a.agent_id)
                ai = fb
            ai_sets.append(ai)
            fb_sets.append(fb)
        return CostContext(
            model=self,
            params=self.params(omega, seg0 + tpar),
            seg0=int(seg0),
            dlat0=float(dlat0),
            u_prev=np.array(u_prev, dtype=float),
            ai=_pack(ai_sets, times, horizon),
            fallback=_pack(fb_sets, times, horizon),
            dims=np.array([[0.5 * s.length, 0.5 * s.width] for s in ai_sets]).reshape(-1, 2),
            agent_ids=tuple(a.agent_id for a in visible),
        )


def _resample(ps: PredictionSet, times: np.ndarray) -> np.ndarray:
    """(K, T, 4) array of x, y, cos(yaw), sin(yaw) at absolute ``times``."""
    pts = ps.stacked()
    n = pts.shape[1]
    k0 = (times - ps.generated_time) / ps.dt - 1.0
    aligned = (np.all(np.abs(k0 - np.round(k0)) < 1e-9) and k0[0] >= -1e-9
               and np.round(k0[-1]) <= n - 1)
    out = np.empty((pts.shape[0], len(times), 4))
    if aligned:
        idx = np.round(k0).astype(int)
        out[:, :, 0] = pts[:, idx, 0]
        out[:, :, 1] = pts[:, idx, 1]
        yaw = pts[:, idx, 5]
    else:
        src = ps.generated_time + ps.dt * np.arange(1, n + 1)
        yaw = np.empty((pts.shape[0], len(times)))
        for m in range(pts.shape[0]):
            for j, col in ((0, 0), (1, 1)):
                out[m, :, j] = _interp_extrap(times, src, pts[m, :, col])
            yaw[m] = np.interp(times, src, np.unwrap(pts[m, :, 5]))
    out[:, :, 2] = np.cos(yaw)
    out[:, :, 3] = np.sin(yaw)
    return out


def _interp_extrap(x, xp, fp):
    y = np.interp(x, xp, fp)
    if len(xp) > 1:
        hi = x > xp[-1]
        if hi.any():
            slope = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
            y[hi] = fp[-1] + slope * (x[hi] - xp[-1])
        lo = x < xp[0]
        if lo.any():
            slope = (fp[1] - fp[0]) / (xp[1] - xp[0])
            y[lo] = fp[0] + slope * (x[lo] - xp[0])
    return y


def _pack(sets: Sequence[PredictionSet], times: np.ndarray, horizon: int):
    if not sets:
        return np.zeros((0, 1, horizon, 4)), np.zeros((0, 1))
    k = max(len(s.modalities) for s in sets)
    pred = np.zeros((len(sets), k, horizon, 4))
    conf = np.zeros((len(sets), k))
    for a, s in enumerate(sets):
        km = len(s.modalities)
        pred[a, :km] = _resample(s, times)
        conf[a, :km] = s.confidences
    return pred, conf


@dataclass(frozen=True, eq=False)
class CostContext:
    """Immutable per-tick inputs of the running cost."""

    model: DrivingCostModel
    params: np.ndarray
    seg0: int
    dlat0: float
    u_prev: np.ndarray
    ai: tuple[np.ndarray, np.ndarray]
    fallback: tuple[np.ndarray, np.ndarray]
    dims: np.ndarray
    agent_ids: tuple[int, ...]

    @property
    def omega(self) -> float:
        return float(self.params[P_OMEGA])

    def with_omega(self, omega: float) -> "CostContext":
        if not 0.0 <= omega <= 1.0:
            raise ValueError(f"reliability {omega} outside [0, 1]")
        p = self.params.copy()
        p[P_OMEGA] = omega
        return CostContext(self.model, p, self.seg0, self.dlat0, self.u_prev,
                           self.ai, self.fallback, self.dims, self.agent_ids)

    def _args(self):
        return (*self.model._route_arrays, self.ai[0], self.ai[1],
                self.fallback[0], self.fallback[1], self.dims)

    def evaluate(self, x0: np.ndarray, U: np.ndarray, breakdown: bool = False):
        """Total cost of each input sequence in ``U`` (K, T, 2) from state ``x0``.

        With ``breakdown`` also returns the per-step terms (K, T, 9) laid out
        as :data:`TERM_NAMES`.
        """
        U = np.ascontiguousarray(U, dtype=float)
        out = np.empty(U.shape[0])
        terms = np.empty((U.shape[0], U.shape[1], len(TERM_NAMES)) if breakdown else (0, 0, 0))
        _rollout_costs(np.asarray(x0, dtype=float), U, self.params, self.u_prev,
                       self.dlat0, self.seg0, *self._args(), out, terms)
        return (out, terms) if breakdown else out

    def rollout(self, x0: np.ndarray, U: np.ndarray) -> np.ndarray:
        from .dynamics import _rollout
        return _rollout(np.asarray(x0, dtype=float), np.ascontiguousarray(U, dtype=float),
                        self.params[[P_WB, P_VD_MAX, P_A_MAX, P_D_MAX, P_V_MAX]], self.params[P_DT])

    def running_cost(self, t: int, state: EgoState, u: tuple[float, float],
                     u_prev: tuple[float, float], d_lat_prev: float) -> float:
        """Decayed stage cost of one rollout state, grouped as safety+progress+comfort+norm."""
        cost, _, _ = _stage_cost(t, state.x, state.y, state.speed, state.yaw,
                                 float(u[0]), float(u[1]), float(u_prev[0]), float(u_prev[1]),
                                 float(d_lat_prev), -1, self.params, *self._args(), np.empty(0))
        return float(cost)
