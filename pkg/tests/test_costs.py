import math

import numpy as np
import pytest

from trustplan.costs import (
    MODE_WEIGHTS, TERM_NAMES, CostWeights, DrivingCostModel, PenaltyParams, blended_traffic_cost,
    boundary_cost, comfort_costs, desired_speed, norm_costs, penalty_bnd, penalty_cls,
    progress_cost, traffic_cost, yaw_cost,
)
from trustplan.dynamics import VehicleParams
from trustplan.predictors import predict_constant_velocity
from trustplan.scenario import AgentState, EgoState, PredictionSet, Route, TrajectoryModality

from oracles import mp_penalty_bnd, mp_penalty_cls

V = VehicleParams()


def test_penalty_examples():
    assert penalty_bnd(0.0) == pytest.approx(float(mp_penalty_bnd(0)), rel=1e-12)
    assert penalty_bnd(0.0) == pytest.approx(51.373, abs=1e-3)
    assert penalty_bnd(7.5) == pytest.approx(425.81, abs=1e-2)
    assert 0 < penalty_bnd(-40.0) < 1e-15
    assert [penalty_cls(a) for a in (0, 1, 3)] == [1.0, 0.5, 0.1]


def test_penalty_matches_high_precision(rng):
    for a in rng.uniform(-50, 50, 300):
        assert penalty_bnd(a) == pytest.approx(float(mp_penalty_bnd(a)), rel=1e-9)
        assert penalty_cls(a) == pytest.approx(float(mp_penalty_cls(a)), rel=1e-12)


def test_penalty_never_overflows():
    for a in (1e3, 1e6, 1e300, -1e300):
        v = penalty_bnd(a)
        assert math.isfinite(v) and v >= 0
    with pytest.raises(ValueError):
        penalty_bnd(float("inf"))
    with pytest.raises(ValueError):
        PenaltyParams(penalty=0.0)


def test_penalty_monotonicity(rng):
    xs = np.sort(rng.uniform(-30, 30, 500))
    b = [penalty_bnd(x) for x in xs]
    assert np.all(np.diff(b) > 0)
    c = [penalty_cls(abs(x)) for x in xs[xs > 0]]
    assert np.all(np.diff(c) < 0)


def test_boundary_cost_examples():
    assert boundary_cost(0.0, -4, 4, 1.0) == pytest.approx(2 * (penalty_bnd(-4) + penalty_cls(-4)))
    on_edge = boundary_cost(4.0, -4, 4, 1.0)
    assert on_edge == pytest.approx(penalty_bnd(0) + penalty_bnd(-8) + penalty_cls(0) + penalty_cls(-8))
    assert boundary_cost(1.0, -4, 4, 0.0) == 0.0


def test_sub_costs():
    assert yaw_cost(0.3, 0.3, 5.0) == 0.0
    assert yaw_cost(math.pi - 0.1, -math.pi + 0.1, 1.0) == pytest.approx(0.04)
    assert comfort_costs(0.5, 0.5, (0.1, 0.2), (0.1, 0.2), 1.0, 1.0) == (0.0, 0.0)
    assert progress_cost(50, 100, 1.0) == 0.5
    assert desired_speed(10.0, 0.0) == 10.0
    assert desired_speed(10.0, 1 / 25) == pytest.approx(10.0)
    assert desired_speed(20.0, 0.1) == pytest.approx(math.sqrt(40))
    off, vel = norm_costs(0.0, 8.0, 8.0, 1.0, 1.0)
    assert off == 0.0
    assert vel == pytest.approx(penalty_bnd(-8.0))
    assert vel < 1e-3


def test_mode_table():
    assert MODE_WEIGHTS["conservative"] == (2, 2, 1, 1, 1, 1, 1, 1, 1, 1)
    assert MODE_WEIGHTS["balanced"] == (2, 2, 1, 1, 2, 1, 1, 1, 1, 2)
    assert MODE_WEIGHTS["aggressive"] == (1, 1, 1, 1, 2, 1, 1, 1, 1, 2)
    w = CostWeights.for_mode("balanced")
    assert (w.progress, w.velocity, w.decay) == (2, 2, 0.05)
    with pytest.raises(ValueError):
        CostWeights.for_mode("reckless")


def single(points_xy, yaw=0.0, conf=1.0, width=1.9, length=4.5):
    n = len(points_xy)
    pts = np.column_stack([points_xy, np.full((n, 2), 0.1), np.zeros(n), np.full(n, yaw)])
    return TrajectoryModality(pts, conf)


def test_traffic_cost_examples():
    ego = EgoState(0, 0, 0, 5, 0)
    assert traffic_cost(ego, [], 0, V, 10.0, 2.0) == 0.0
    one = PredictionSet(1, 0, (single([[1.0, 0.0]]),), 0.1, 1.9, 4.5)
    got = traffic_cost(ego, [one], 0, V, 10.0, 2.0)
    assert got == pytest.approx(2.0 * (float(mp_penalty_bnd(0)) + penalty_cls(10.0)), rel=1e-12)
    half = PredictionSet(1, 0, (single([[1.0, 0.0]], conf=0.5), single([[1.0, 0.0]], conf=0.5)),
                         0.1, 1.9, 4.5)
    assert traffic_cost(ego, [half], 0, V, 10.0, 2.0) == pytest.approx(got, rel=1e-15)


def test_traffic_cost_linear_in_confidence():
    ego = EgoState(0, 0, 0, 5, 0)
    near, far = [[6.0, 0.0]], [[15.0, 3.0]]

    def cost(c):
        ps = PredictionSet(1, 0, (single(near, conf=c), single(far, conf=1 - c)), 0.1, 1.9, 4.5)
        return traffic_cost(ego, [ps], 0, V, 10.0, 1.0)
    a, b, m = cost(0.0), cost(1.0), cost(0.3)
    assert m == pytest.approx(0.3 * b + 0.7 * a, rel=1e-12)


def test_blending_endpoints():
    assert blended_traffic_cost(1.0, 4.0, 2.0) == 4.0
    assert blended_traffic_cost(0.0, 4.0, 2.0) == 2.0
    assert blended_traffic_cost(0.5, 4.0, 2.0) == 3.0
    with pytest.raises(ValueError):
        blended_traffic_cost(1.5, 4.0, 2.0)


@pytest.fixture
def model():
    route = Route.from_waypoints([(0, 0), (200, 0)], -2.0, 2.0)
    return DrivingCostModel(route, CostWeights.for_mode("balanced"), V, 0.1, 10.0)


def make_context(model, omega=1.0, ai_shift=0.0, ego_y=0.0):
    ego = EgoState(0.0, ego_y, 0.0, 10.0, 0.05)
    agent = AgentState(1, 25.0, 0.0, math.pi, 5.0, 1.9, 4.5)
    fb = predict_constant_velocity(agent, 60, 0.1)
    ai_agent = AgentState(1, 25.0, ai_shift, math.pi, 5.0, 1.9, 4.5)
    ai = predict_constant_velocity(ai_agent, 60, 0.1)
    return model.context(ego, 0.0, 50, [agent], {1: ai}, {1: fb}, omega)


def _scalar_rollout_cost(ctx, x0, U, model):
    """Step-by-step re-evaluation through the public scalar cost functions."""
    from trustplan.dynamics import step
    from trustplan.scenario import ControlInput, project_to_route
    w = model.weights
    state = EgoState.from_array(x0)
    u_prev = (0.0, 0.0)
    dprev = project_to_route(model.route, (state.x, state.y)).d_lat
    total = 0.0
    times = 0.1 * np.arange(1, U.shape[0] + 1)
    ai_sets = [ps for ps in ctx_sets(ctx, "ai")]
    fb_sets = [ps for ps in ctx_sets(ctx, "fb")]
    i0 = None
    for t in range(U.shape[0]):
        u = (float(np.clip(U[t, 0], -V.max_steer_rate, V.max_steer_rate)),
             float(np.clip(U[t, 1], -V.max_accel, V.max_accel)))
        state = step(state, ControlInput(*u), V, 0.1)
        pr = project_to_route(model.route, (state.x, state.y))
        seg_pos = pr.arclength / model.route.segment_lengths[0]
        if i0 is None:
            i0 = project_to_route(model.route, (x0[0], x0[1])).arclength / model.route.segment_lengths[0]
        l_b = boundary_cost(pr.d_lat, -2.0, 2.0, w.boundary)
        l_ai = traffic_cost(state, ai_sets, t, V, 10.0, w.traffic)
        l_fb = traffic_cost(state, fb_sets, t, V, 10.0, w.traffic)
        l_pi = blended_traffic_cost(ctx.omega, l_ai, l_fb)
        l_psi = yaw_cost(state.yaw, pr.yaw_ref, w.yaw)
        l_p = progress_cost(seg_pos - i0, model.route.window, w.progress)
        l_c, l_i = comfort_costs(pr.d_lat, dprev, u, u_prev, w.comfort, w.input)
        l_o, l_v = norm_costs(pr.d_lat, state.speed, 10.0, w.offset, w.velocity)
        total += math.exp(-t * w.decay) * (l_b + l_pi + l_psi + l_p + l_c + l_i + l_o + l_v)
        u_prev, dprev = u, pr.d_lat
    return total


def ctx_sets(ctx, which):
    arr, conf = ctx.ai if which == "ai" else ctx.fallback
    sets = []
    for a in range(arr.shape[0]):
        mods = []
        for m in range(arr.shape[1]):
            if conf[a, m] == 0:
                continue
            xy = arr[a, m, :, :2]
            yaw = np.arctan2(arr[a, m, :, 3], arr[a, m, :, 2])
            mods.append(single(xy, yaw=0.0, conf=conf[a, m]))
            mods[-1].points[:, 5] = yaw
        hl, hw = ctx.dims[a]
        sets.append(PredictionSet(ctx.agent_ids[a], 0, tuple(mods), 0.1, 2 * hw, 2 * hl))
    return sets


def test_rollout_cost_matches_scalar_reimplementation(model, rng):
    ctx = make_context(model, omega=0.4, ai_shift=1.5, ego_y=0.3)
    x0 = np.array([0.0, 0.3, 0.0, 10.0, 0.05])
    U = rng.normal(0, [0.1, 1.0], (3, 50, 2))
    got = ctx.evaluate(x0, U)
    for k in range(3):
        assert got[k] == pytest.approx(_scalar_rollout_cost(ctx, x0, U[k], model), rel=1e-9)


def test_breakdown_and_decay(model):
    ctx = make_context(model)
    x0 = np.array([0.0, 0.0, 0.0, 10.0, 0.0])
    costs, terms = ctx.evaluate(x0, np.zeros((1, 50, 2)), breakdown=True)
    assert terms.shape == (1, 50, len(TERM_NAMES))
    decay = terms[0, :, TERM_NAMES.index("decay")]
    assert decay[0] == 1.0
    assert decay[20] == pytest.approx(math.exp(-1), rel=1e-15)
    assert decay[20] == pytest.approx(0.36788, abs=1e-5)
    assert np.all(terms >= 0)
    assert costs[0] == pytest.approx(np.sum(decay * terms[0, :, :8].sum(axis=1)), rel=1e-12)


def test_zero_weights_give_zero_cost():
    route = Route.from_waypoints([(0, 0), (200, 0)], -2.0, 2.0)
    zero = CostWeights(*(0.0,) * 10)
    m = DrivingCostModel(route, zero, V, 0.1, 10.0)
    ctx = make_context(m)
    costs = ctx.evaluate(np.array([0, 0, 0, 10.0, 0]), np.random.default_rng(0).normal(size=(4, 50, 2)))
    assert np.all(costs == 0.0)
    one = ctx.evaluate(np.array([0, 0, 0, 10.0, 0]), np.zeros((1, 1, 2)))
    assert one[0] == 0.0


def test_single_step_horizon_equals_running_cost(model):
    ctx = make_context(model)
    x0 = np.array([0.0, 0.2, 0.0, 9.0, 0.0])
    u = np.array([[[0.05, 0.5]]])
    from trustplan.dynamics import step
    from trustplan.scenario import ControlInput
    s1 = step(EgoState.from_array(x0), ControlInput(0.05, 0.5), V, 0.1)
    assert ctx.evaluate(x0, u)[0] == pytest.approx(
        ctx.running_cost(0, s1, (0.05, 0.5), (0.0, 0.0), ctx.dlat0), rel=1e-14)


def test_omega_endpoints_bit_identical(model, rng):
    x0 = np.array([0.0, 0.0, 0.0, 10.0, 0.0])
    U = rng.normal(0, [0.1, 1.0], (50, 50, 2))
    mixed = make_context(model, ai_shift=1.0)
    ai_only = make_context(model, ai_shift=1.0)
    # replacing the fallback by the AI prediction isolates the pure AI path
    ai_only = type(ai_only)(ai_only.model, ai_only.params, ai_only.seg0, ai_only.dlat0, ai_only.u_prev,
                            ai_only.ai, ai_only.ai, ai_only.dims, ai_only.agent_ids)
    fb_only = type(mixed)(mixed.model, mixed.params, mixed.seg0, mixed.dlat0, mixed.u_prev,
                          mixed.fallback, mixed.fallback, mixed.dims, mixed.agent_ids)
    assert np.array_equal(mixed.evaluate(x0, U), ai_only.evaluate(x0, U))
    assert np.array_equal(mixed.with_omega(0.0).evaluate(x0, U), fb_only.evaluate(x0, U))
    a = mixed.evaluate(x0, U)
    f = mixed.with_omega(0.0).evaluate(x0, U)
    h = mixed.with_omega(0.5).evaluate(x0, U)
    # the traffic term is linear in omega; the other terms do not depend on it
    np.testing.assert_allclose(h, 0.5 * (a + f), rtol=1e-12)
    with pytest.raises(ValueError):
        mixed.with_omega(-0.1)


def test_missing_ai_prediction_uses_fallback(model):
    ego = EgoState(0.0, 0.0, 0.0, 10.0, 0.0)
    agent = AgentState(1, 25.0, 0.0, math.pi, 5.0, 1.9, 4.5)
    ctx = model.context(ego, 0.0, 50, [agent], {}, {})
    assert ctx.agent_ids == (1,)
    np.testing.assert_array_equal(ctx.ai[0], ctx.fallback[0])
    far = AgentState(2, 500.0, 0.0, 0.0, 5.0, 1.9, 4.5)
    assert model.context(ego, 0.0, 50, [far], {}, {}).agent_ids == ()
