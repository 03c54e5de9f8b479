"""Domain types shared across the simulator: states, predictions, routes, scenarios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import wrap_angle

DEFAULT_OFF_ROUTE_DISTANCE = 100.0


class OffRouteError(ValueError):
    """Raised when a point is too far from the route to be projected."""


@dataclass(frozen=True)
class ControlInput:
    steer_rate: float
    accel: float

    def __post_init__(self):
        if not (math.isfinite(self.steer_rate) and math.isfinite(self.accel)):
            raise ValueError(f"non-finite control input {self}")


@dataclass(frozen=True)
class EgoState:
    """Kinematic single-track state; (x, y) is the box center."""

    x: float
    y: float
    steer: float
    speed: float
    yaw: float

    def __post_init__(self):
        vals = (self.x, self.y, self.steer, self.speed, self.yaw)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite ego state {self}")
        if self.speed < 0.0:
            raise ValueError(f"negative ego speed {self.speed}")
        if not -math.pi <= self.yaw < math.pi:
            object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.steer, self.speed, self.yaw])

    @classmethod
    def from_array(cls, a) -> "EgoState":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]), float(a[4]))


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    x: float
    y: float
    yaw: float
    speed: float
    width: float
    length: float

    def __post_init__(self):
        if self.width <= 0 or self.length <= 0:
            raise ValueError(f"agent {self.agent_id} has non-positive extent")


@dataclass(frozen=True)
class TrajectoryModality:
    """One predicted future: rows of (mu_x, mu_y, sigma_x, sigma_y, rho, yaw)."""

    points: np.ndarray
    confidence: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 6:
            raise ValueError(f"modality points must be (T, 6), got {pts.shape}")
        if np.any(pts[:, 2] <= 0) or np.any(pts[:, 3] <= 0):
            raise ValueError("modality standard deviations must be positive")
        if np.any(np.abs(pts[:, 4]) >= 1):
            raise ValueError("modality correlation must lie in (-1, 1)")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "points", pts)

    @property
    def means(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def yaw(self) -> np.ndarray:
        return self.points[:, 5]


def normalize_confidences(scores: Sequence[float]) -> np.ndarray:
    """Rescale non-negative scores to sum to one (uniform if all are zero)."""
    c = np.asarray(scores, dtype=float)
    if np.any(c < 0) or not np.all(np.isfinite(c)):
        raise ValueError(f"invalid confidence scores {c}")
    total = c.sum()
    if total <= 0:
        return np.full(c.shape, 1.0 / len(c))
    return c / total


@dataclass(frozen=True)
class PredictionSet:
    """All modalities predicted for one agent at one generation time.

    Point ``i`` of every modality is the prediction ``(i + 1) * dt`` seconds
    after ``generated_time``.
    """

    agent_id: int
    generated_at: int
    modalities: tuple[TrajectoryModality, ...]
    dt: float
    width: float
    length: float
    generated_time: float = 0.0

    def __post_init__(self):
        if not self.modalities:
            raise ValueError("prediction set needs at least one modality")
        n = {m.points.shape[0] for m in self.modalities}
        if len(n) != 1:
            raise ValueError("all modalities must share one horizon")
        total = sum(m.confidence for m in self.modalities)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"confidences sum to {total}, expected 1")

    @property
    def horizon(self) -> int:
        return self.modalities[0].points.shape[0]

    @property
    def confidences(self) -> np.ndarray:
        return np.array([m.confidence for m in self.modalities])

    def stacked(self) -> np.ndarray:
        """Array of shape (K, T, 6)."""
        return np.stack([m.points for m in self.modalities])


class RouteProjection(NamedTuple):
    arc_index: int
    d_lat: float
    yaw_ref: float
    arclength: float
    distance: float


def _resample_polyline(points: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.diff(points, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    keep = np.concatenate([[True], lengths > 1e-12])
    points = points[keep]
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(points, axis=0).T))])
    total = s[-1]
    n = int(math.floor(total / spacing + 1e-9))
    s_new = np.arange(n + 1) * spacing
    if total - s_new[-1] > 1e-6 * spacing:
        s_new = np.append(s_new, total)
    return np.column_stack([np.interp(s_new, s, points[:, 0]), np.interp(s_new, s, points[:, 1])])


@dataclass(frozen=True, eq=False)
class Route:
    """Piecewise-linear reference path with per-segment lateral bounds.

    ``d_lat`` is positive to the left of the travel direction, so
    ``d_lat_min`` is the right-hand bound and ``d_lat_max`` the left-hand one.
    """

    xy: np.ndarray
    d_lat_min: np.ndarray
    d_lat_max: np.ndarray
    window: int = 200
    goal_arclength: float | None = None

    def __post_init__(self):
        xy = np.asarray(self.xy, dtype=float)
        nseg = len(xy) - 1
        if xy.ndim != 2 or xy.shape[1] != 2 or nseg < 1:
            raise ValueError("route needs at least two (x, y) vertices")
        dmin = np.broadcast_to(np.asarray(self.d_lat_min, dtype=float), (nseg,)).copy()
        dmax = np.broadcast_to(np.asarray(self.d_lat_max, dtype=float), (nseg,)).copy()
        if np.any(dmin >= dmax):
            raise ValueError("d_lat_min must be below d_lat_max on every segment")
        if self.window < 1:
            raise ValueError("route window must be at least one index")
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "d_lat_min", dmin)
        object.__setattr__(self, "d_lat_max", dmax)
        if np.any(np.diff(self.arclength) <= 0):
            raise ValueError("route arclength must be strictly increasing")
        goal = self.length if self.goal_arclength is None else float(self.goal_arclength)
        if not 0 < goal <= self.length + 1e-9:
            raise ValueError(f"goal arclength {goal} outside route")
        object.__setattr__(self, "goal_arclength", goal)

    @classmethod
    def from_waypoints(
        cls,
        waypoints,
        d_lat_min: float,
        d_lat_max: float,
        spacing: float = 1.0,
        window: int = 200,
        goal_arclength: float | None = None,
    ) -> "Route":
        """Build a route resampled to uniform ``spacing`` between vertices."""
        xy = _resample_polyline(np.asarray(waypoints, dtype=float), spacing)
        return cls(xy, d_lat_min, d_lat_max, window, goal_arclength)

    @cached_property
    def arclength(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.segment_lengths)])

    @cached_property
    def segment_lengths(self) -> np.ndarray:
        d = np.diff(self.xy, axis=0)
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def yaw(self) -> np.ndarray:
        d = np.diff(self.xy, axis=0)
        return np.array([wrap_angle(a) for a in np.arctan2(d[:, 1], d[:, 0])])

    @cached_property
    def curvature(self) -> np.ndarray:
        """Per-segment curvature from finite differences of yaw over arclength."""
        yaw = self.yaw
        n = len(yaw)
        if n < 2:
            return np.zeros(n)
        mid = 0.5 * (self.arclength[:-1] + self.arclength[1:])
        dyaw = np.array([wrap_angle(b - a) for a, b in zip(yaw[:-1], yaw[1:])])
        k_inner = dyaw / np.diff(mid)
        kappa = np.empty(n)
        kappa[0] = k_inner[0]
        kappa[-1] = k_inner[-1]
        if n > 2:
            kappa[1:-1] = 0.5 * (k_inner[:-1] + k_inner[1:])
        return kappa

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    @property
    def n_segments(self) -> int:
        return len(self.xy) - 1


def project_to_route(
    route: Route,
    point: tuple[float, float],
    max_distance: float = DEFAULT_OFF_ROUTE_DISTANCE,
) -> RouteProjection:
    """Project a point onto the nearest route segment.

    Ties between equally distant segments go to the lower index. The lateral
    offset carries the Euclidean distance to the nearest point, signed positive
    on the left of the segment direction.
    """
    px, py = float(point[0]), float(point[1])
    if not (math.isfinite(px) and math.isfinite(py)):
        raise ValueError(f"non-finite point {point!r}")
    a = route.xy[:-1]
    d = route.xy[1:] - a
    rel = np.array([px, py]) - a
    t = np.clip(np.einsum("ij,ij->i", rel, d) / np.einsum("ij,ij->i", d, d), 0.0, 1.0)
    off = rel - t[:, None] * d
    dist = np.hypot(off[:, 0], off[:, 1])
    dmin = dist.min()
    if dmin > max_distance:
        raise OffRouteError(f"point {point!r} is {dmin:.1f} m from the route")
    i = int(np.flatnonzero(dist <= dmin + 1e-12 * (1.0 + dmin))[0])
    cross = d[i, 0] * off[i, 1] - d[i, 1] * off[i, 0]
    d_lat = float(dist[i]) if cross >= 0 else -float(dist[i])
    s = float(route.arclength[i] + t[i] * route.segment_lengths[i])
    return RouteProjection(i, d_lat, float(route.yaw[i]), s, float(dist[i]))


@dataclass(frozen=True)
class RouteSpec:
    """File-level description of a route, turned into a :class:`Route` on demand."""

    waypoints: tuple[tuple[float, float], ...]
    d_lat_min: float
    d_lat_max: float
    spacing: float = 1.0
    window: int = 200
    goal_arclength: float | None = None

    def build(self) -> Route:
        return Route.from_waypoints(
            self.waypoints, self.d_lat_min, self.d_lat_max,
            self.spacing, self.window, self.goal_arclength,
        )


@dataclass(frozen=True)
class EgoSpawn:
    x: float
    y: float
    yaw: float
    speed: float

    def state(self) -> EgoState:
        return EgoState(self.x, self.y, 0.0, self.speed, self.yaw)


@dataclass(frozen=True)
class AgentScript:
    """A non-reactive-to-ego traffic participant following a fixed path.

    Agents sharing a ``lane`` tag keep a gap to the agent ahead of them with
    an IDM-style longitudinal law; ``speed_profile`` holds (time, speed)
    breakpoints overriding ``speed`` from that time on.
    """

    agent_id: int
    path: tuple[tuple[float, float], ...]
    speed: float
    start_time: float = 0.0
    start_offset: float = 0.0
    width: float = 1.9
    length: float = 4.5
    lane: str = ""
    speed_profile: tuple[tuple[float, float], ...] = ()
    desired_gap: float = 2.0
    max_accel: float = 1.5
    max_decel: float = 3.0
    start_jitter: float = 0.0
    speed_jitter: float = 0.0

    def __post_init__(self):
        speeds = [self.speed] + [v for _, v in self.speed_profile]
        if any(not 4.0 <= v <= 30.0 for v in speeds):
            raise ValueError(f"agent {self.agent_id}: speeds must lie in [4, 30] m/s")
        if len(self.path) < 2:
            raise ValueError(f"agent {self.agent_id}: path needs two or more points")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    route: RouteSpec
    ego: EgoSpawn
    agents: tuple[AgentScript, ...] = ()
    duration: float = 100.0
    desired_speed: float = 10.0
    attention_radius: float = 50.0
    distance_threshold: float = 10.0
    safety_margin: float = 0.125

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("scenario duration must be positive")
        if self.attention_radius <= 0:
            raise ValueError("attention radius must be positive")
        if self.safety_margin < 0:
            raise ValueError("safety margin must be non-negative")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")

    @cached_property
    def built_route(self) -> Route:
        return self.route.build()
