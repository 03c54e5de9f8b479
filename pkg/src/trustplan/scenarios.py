"""Built-in desk-scale scenarios: overtaking, junction and urban."""

from __future__ import annotations

import math

from .scenario import AgentScript, EgoSpawn, RouteSpec, ScenarioConfig

LANE_WIDTH = 3.5
# ego centre limits: own lane only, or own lane plus the adjacent one
_LANE = (-0.8, 0.8)
_TWO_LANES = (-0.8, 4.3)


def junction() -> ScenarioConfig:
    """Straight approach through a perpendicular two-lane crossing road.

    Both crossing agents are timed to reach the ego's path roughly when the
    ego does, so the crossing is the scenario's main interaction.
    """
    route = RouteSpec(((-70.0, 0.0), (140.0, 0.0)), *_LANE, goal_arclength=150.0)
    half = LANE_WIDTH / 2
    agents = (
        AgentScript(1, ((half, -160.0), (half, 160.0)), speed=11.0, start_offset=50.0,
                    start_jitter=1.0, speed_jitter=0.1, lane="north"),
        AgentScript(2, ((-half, 160.0), (-half, -160.0)), speed=11.0, start_offset=40.0,
                    start_jitter=1.0, speed_jitter=0.1, lane="south"),
    )
    return ScenarioConfig("junction", route, EgoSpawn(-60.0, 0.0, 0.0, 6.0), agents,
                          duration=100.0, desired_speed=6.0)


def overtaking() -> ScenarioConfig:
    """Two-lane straight with a slower lead vehicle and oncoming traffic."""
    route = RouteSpec(((0.0, 0.0), (1100.0, 0.0)), *_TWO_LANES, goal_arclength=900.0)
    agents = [
        AgentScript(1, ((30.0, 0.0), (1200.0, 0.0)), speed=5.0, lane="east",
                    start_jitter=0.5, speed_jitter=0.1),
        AgentScript(2, ((110.0, 0.0), (1200.0, 0.0)), speed=6.0, lane="east",
                    start_jitter=0.5, speed_jitter=0.1),
    ]
    for k in range(7):
        agents.append(AgentScript(10 + k, ((1200.0, LANE_WIDTH), (-100.0, LANE_WIDTH)),
                                  speed=10.0, start_time=12.0 * k, start_offset=300.0 + 60.0 * k,
                                  lane="west", start_jitter=2.0, speed_jitter=0.1))
    return ScenarioConfig("overtaking", route, EgoSpawn(0.0, 0.0, 0.0, 6.0), tuple(agents),
                          duration=100.0, desired_speed=10.0)


def _arc(cx, cy, r, a0, a1, n=24):
    return [(cx + r * math.cos(a0 + (a1 - a0) * i / n), cy + r * math.sin(a0 + (a1 - a0) * i / n))
            for i in range(n + 1)]


def urban() -> ScenarioConfig:
    """Short urban segment with a left-hand bend, a crossing street and mixed traffic."""
    r = 25.0
    bend = _arc(60.0, r, r, -math.pi / 2, 0.0)
    ego_path = [(-40.0, 0.0)] + bend + [(60.0 + r, 160.0)]
    route = RouteSpec(tuple(ego_path), *_LANE, goal_arclength=180.0)
    oncoming = [(p[0] - LANE_WIDTH * math.cos(a), p[1] - LANE_WIDTH * math.sin(a))
                for p, a in zip(bend, [-math.pi / 2 + (math.pi / 2) * i / 24 for i in range(25)])]
    oncoming_path = [(60.0 + r - LANE_WIDTH, 160.0)] + oncoming[::-1] + [(-60.0, LANE_WIDTH)]
    lead_path = [(-40.0, 0.0)] + bend + [(60.0 + r, 260.0)]
    half = LANE_WIDTH / 2
    agents = [
        AgentScript(1, tuple(lead_path), speed=6.0, start_offset=35.0, lane="main",
                    start_jitter=0.5, speed_jitter=0.1),
        AgentScript(2, tuple(lead_path), speed=7.0, start_offset=60.0, lane="main",
                    start_jitter=0.5, speed_jitter=0.1),
        AgentScript(3, ((25.0 + half, -70.0), (25.0 + half, 80.0)), speed=6.0, start_offset=25.0,
                    lane="cross_n", start_jitter=1.0, speed_jitter=0.1),
        AgentScript(4, ((25.0 - half, 80.0), (25.0 - half, -70.0)), speed=6.0, start_offset=40.0,
                    lane="cross_s", start_jitter=1.0, speed_jitter=0.1),
        AgentScript(5, ((25.0 + half, -70.0), (25.0 + half, 80.0)), speed=7.0, start_time=8.0,
                    lane="cross_n", start_jitter=1.0, speed_jitter=0.1),
    ]
    for k in range(5):
        agents.append(AgentScript(10 + k, tuple(oncoming_path), speed=8.0, start_time=6.0 * k,
                                  start_offset=20.0 + 10.0 * k, lane="oncoming",
                                  start_jitter=1.0, speed_jitter=0.1))
    return ScenarioConfig("urban", route, EgoSpawn(-30.0, 0.0, 0.0, 5.0), tuple(agents),
                          duration=35.0, desired_speed=8.0)


def empty_road() -> ScenarioConfig:
    route = RouteSpec(((0.0, 0.0), (400.0, 0.0)), *_LANE, goal_arclength=300.0)
    return ScenarioConfig("empty", route, EgoSpawn(0.0, 0.0, 0.0, 5.0), (), duration=40.0,
                          desired_speed=10.0)


BUILTIN = {
    "junction": junction,
    "overtaking": overtaking,
    "urban": urban,
    "empty": empty_road,
}


def builtin_scenario(name: str) -> ScenarioConfig:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(BUILTIN)}") from None
