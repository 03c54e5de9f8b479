import math

import numpy as np
import pytest

from trustplan.config import ConfigError, ExperimentConfig
from trustplan.scenario import (
    AgentState, ControlInput, EgoState, OffRouteError, PredictionSet, Route, TrajectoryModality,
    normalize_confidences, project_to_route,
)
from trustplan.scenarios import BUILTIN, builtin_scenario


def straight(length=100.0, spacing=1.0):
    return Route.from_waypoints([(0.0, 0.0), (length, 0.0)], -2.0, 2.0, spacing=spacing)


def test_project_on_centerline():
    p = project_to_route(straight(), (5.0, 0.0))
    assert p.arclength == pytest.approx(5.0)
    assert p.d_lat == 0.0
    assert p.yaw_ref == 0.0


def test_project_left_is_positive():
    p = project_to_route(straight(), (5.0, 2.0))
    assert p.arclength == pytest.approx(5.0)
    assert p.d_lat == pytest.approx(2.0)
    assert project_to_route(straight(), (5.0, -2.0)).d_lat == pytest.approx(-2.0)


def test_project_off_route():
    with pytest.raises(OffRouteError):
        project_to_route(straight(), (50.0, 150.0))
    assert project_to_route(straight(), (50.0, 150.0), max_distance=200.0).d_lat == pytest.approx(150.0)


def test_vertices_project_to_zero_offset():
    r = Route.from_waypoints([(0, 0), (10, 0), (10, 10), (25, 18)], -2, 2, spacing=0.7)
    for v in r.xy:
        assert abs(project_to_route(r, v).d_lat) < 1e-9


def test_l_route_outer_corner_tie_goes_to_lower_index():
    r = Route.from_waypoints([(0, 0), (10, 0), (10, 10)], -2, 2, spacing=10.0)
    assert r.n_segments == 2
    pt = (10.0 + 3.0, -3.0)  # on the outer bisector of the corner
    p = project_to_route(r, pt)
    # brute-force nearest point over a dense sampling of the centerline
    dense = np.concatenate([np.column_stack([np.linspace(0, 10, 10001), np.zeros(10001)]),
                            np.column_stack([np.full(10001, 10.0), np.linspace(0, 10, 10001)])])
    ref = np.hypot(*(dense - pt).T).min()
    assert p.distance == pytest.approx(ref, abs=1e-9)
    assert p.arc_index == 0


def test_route_arclength_increasing_and_curvature():
    r = builtin_scenario("urban").built_route
    assert np.all(np.diff(r.arclength) > 0)
    # the bend has radius 25 m somewhere along the route
    assert np.max(np.abs(r.curvature)) == pytest.approx(1 / 25, rel=0.15)


def test_route_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        Route.from_waypoints([(0, 0), (10, 0)], 2.0, -2.0)


def test_ego_state_invariants():
    s = EgoState(0, 0, 0, 1, math.pi)
    assert s.yaw == -math.pi
    with pytest.raises(ValueError):
        EgoState(0, 0, 0, -1, 0)
    with pytest.raises(ValueError):
        EgoState(float("nan"), 0, 0, 1, 0)
    with pytest.raises(ValueError):
        ControlInput(float("inf"), 0)


def test_agent_extent_positive():
    with pytest.raises(ValueError):
        AgentState(1, 0, 0, 0, 1, 0.0, 4.0)


def test_modality_invariants():
    pts = np.tile([0.0, 0.0, 0.1, 0.1, 0.0, 0.0], (3, 1))
    TrajectoryModality(pts, 0.5)
    bad = pts.copy()
    bad[1, 4] = 1.0
    with pytest.raises(ValueError):
        TrajectoryModality(bad, 0.5)
    bad = pts.copy()
    bad[0, 2] = 0.0
    with pytest.raises(ValueError):
        TrajectoryModality(bad, 0.5)
    with pytest.raises(ValueError):
        TrajectoryModality(pts, 1.5)


def test_prediction_set_requires_normalized_confidences():
    pts = np.tile([0.0, 0.0, 0.1, 0.1, 0.0, 0.0], (3, 1))
    with pytest.raises(ValueError):
        PredictionSet(1, 0, (TrajectoryModality(pts, 0.5), TrajectoryModality(pts, 0.4)), 0.1, 2, 4)


def test_normalization_preserves_argmax_order(rng):
    for _ in range(100):
        raw = rng.uniform(0, 5, 6)
        c = normalize_confidences(raw)
        assert c.sum() == pytest.approx(1.0, abs=1e-12)
        assert list(np.argsort(-raw, kind="stable")) == list(np.argsort(-c, kind="stable"))


def test_builtin_scenarios_are_valid():
    for name in BUILTIN:
        sc = builtin_scenario(name)
        assert sc.duration > 0
        assert len(sc.agents) <= 12
        assert len({a.agent_id for a in sc.agents}) == len(sc.agents)
        project_to_route(sc.built_route, (sc.ego.x, sc.ego.y))


def test_experiment_config_validation():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig(t_est=0)
    assert e.value.path == "t_est"
    for kw in ({"beta_est": 1.0}, {"noise": 0.0}, {"replan_interval": 0.0123}, {"mode": "wild"}):
        with pytest.raises(ConfigError):
            ExperimentConfig(**kw)
    assert ExperimentConfig().replan_ticks == 20
    assert ExperimentConfig().prediction_ticks == 50
