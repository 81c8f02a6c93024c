import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ogr.sim import traffic
from ogr.sim.geometry import Polyline, box_corners, boxes_overlap, wrap_angle
from ogr.sim.routing import NoRoute, astar, path_cost, plan_reference
from ogr.sim.traffic import (
    SENTINEL,
    ControlCommand,
    RouteTooShort,
    SpawnFailure,
    Status,
    SteppedTerminalEpisode,
    VehicleState,
    nearest_waypoints,
    observe,
    reset,
    step,
)
from ogr.sim.world import BUILTIN, Scenario, get_scenario, load_scenario, save_scenario

OVERTAKING = get_scenario("overtaking")


def brute_force_cost(nodes, edges, start, goals):
    """Cheapest simple path by enumerating every simple path (small graphs only)."""
    adj = {}
    for a, b, c in edges:
        adj.setdefault(a, []).append((b, c))
    best = math.inf

    def dfs(u, seen, cost):
        nonlocal best
        if u in goals:
            best = min(best, cost)
            return
        for v, c in adj.get(u, ()):
            if v not in seen:
                dfs(v, seen | {v}, cost + c)

    dfs(start, {start}, 0.0)
    return best


def test_wrap_angle_range():
    for a in np.linspace(-20, 20, 401):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    assert wrap_angle(-math.pi) == math.pi


def test_polyline_projection_and_extrapolation():
    pl = Polyline([(0, 0), (5, 0), (10, 0), (10, 10)])
    assert pl.length == pytest.approx(20.0)
    assert len(pl.points) == 3  # collinear midpoint dropped
    s, lat, tangent = pl.project(4.0, 1.5)
    assert (s, lat, tangent) == pytest.approx((4.0, 1.5, 0.0))
    s, lat, _ = pl.project(-3.0, -1.0)
    assert s == pytest.approx(-3.0) and lat == pytest.approx(-1.0)
    assert pl.pose_at(15.0) == pytest.approx((10.0, 5.0, math.pi / 2))
    assert pl.pose_at(25.0)[:2] == pytest.approx((10.0, 15.0))


def test_boxes_overlap_cases():
    a = box_corners(0, 0, 0, 4.5, 1.8)
    assert boxes_overlap(a, box_corners(4.0, 0, 0, 4.5, 1.8))
    assert not boxes_overlap(a, box_corners(4.6, 0, 0, 4.5, 1.8))
    assert not boxes_overlap(a, box_corners(0, 1.9, 0, 4.5, 1.8))
    assert boxes_overlap(a, box_corners(2.5, 1.5, math.pi / 4, 4.5, 1.8))


def test_vehicle_state_invariants():
    with pytest.raises(ValueError):
        VehicleState(0, 0, -1.0, 0)
    assert VehicleState(0, 0, 1.0, 3 * math.pi).psi == pytest.approx(math.pi)


# --- routing -----------------------------------------------------------------

def test_straight_lane_route_is_lane_order():
    nodes = [(float(k), 0.0, 0.0) for k in range(10)]
    edges = [(k, k + 1, 1.0) for k in range(9)]
    assert astar(nodes, edges, 0, {9}) == list(range(10))


def test_disconnected_goal_raises():
    nodes = [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0), (5.0, 0.0, 0.0)]
    with pytest.raises(NoRoute):
        astar(nodes, [(0, 1, 1.0)], 0, {2})
    with pytest.raises(NoRoute):
        astar(nodes, [(0, 1, 1.0)], 0, set())


def grid(n, costs):
    nodes = [(float(c), float(r), 0.0) for r in range(n) for c in range(n)]
    edges = []
    k = 0
    for r in range(n):
        for c in range(n):
            u = r * n + c
            if c + 1 < n:
                edges.append((u, u + 1, costs[k % len(costs)]))
                k += 1
            if r + 1 < n:
                edges.append((u, u + n, costs[k % len(costs)]))
                k += 1
    return nodes, edges


def test_grid_route_matches_enumeration():
    nodes, edges = grid(4, [1.0, 3.0, 1.5, 2.0, 1.0])
    path = astar(nodes, edges, 0, {15})
    assert path[0] == 0 and path[-1] == 15
    assert path_cost(edges, path) == pytest.approx(brute_force_cost(nodes, edges, 0, {15}))


@st.composite
def small_graphs(draw):
    n = draw(st.integers(2, 12))
    nodes = [(draw(st.floats(-10, 10)), draw(st.floats(-10, 10)), 0.0) for _ in range(n)]
    pairs = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=30))
    edges = []
    for a, b in pairs:
        if a != b:
            length = math.hypot(nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1])
            edges.append((a, b, length * draw(st.floats(1.0, 3.0)) + draw(st.floats(0.0, 2.0))))
    goals = set(draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=3)))
    return nodes, edges, goals


@settings(max_examples=200, deadline=None)
@given(small_graphs())
def test_astar_cost_equals_enumeration(g):
    nodes, edges, goals = g
    best = brute_force_cost(nodes, edges, 0, goals)
    if math.isinf(best):
        with pytest.raises(NoRoute):
            astar(nodes, edges, 0, goals)
    else:
        path = astar(nodes, edges, 0, goals)
        assert path[0] == 0 and path[-1] in goals
        assert path_cost(edges, path) == pytest.approx(best, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_builtin_worlds_route_to_goal(name):
    sc = get_scenario(name)
    for j in range(len(sc.l2_labels)):
        world = sc.world_for(j)
        route = plan_reference(world)
        assert len(route) >= 5
        assert route == plan_reference(world)
        assert world.v_limit > 0


# --- reset / step ---------------------------------------------------------------

def test_empty_density_spawns_no_svs():
    for j in range(3):
        ep = reset(OVERTAKING, (0, j), 7)
        assert ep.n_valid == 0
        assert ep.sv.shape == (OVERTAKING.n_sv_max, 4)
        assert np.all(ep.sv == 0)


def test_reset_is_deterministic():
    a = reset(OVERTAKING, (3, 2), 11).state_matrix().as_array()
    b = reset(OVERTAKING, (3, 2), 11).state_matrix().as_array()
    assert a.tobytes() == b.tobytes()
    c = reset(OVERTAKING, (3, 2), 12).state_matrix().as_array()
    assert a.tobytes() != c.tobytes()


def test_reset_rejects_out_of_range_task():
    with pytest.raises(ValueError):
        reset(OVERTAKING, (4, 0), 0)
    with pytest.raises(ValueError):
        reset(OVERTAKING, (0, 3), 0)


@pytest.mark.parametrize("name", sorted(BUILTIN))
def test_high_density_spawns_are_disjoint_and_in_zone(name):
    sc = get_scenario(name)
    top = len(sc.density_counts) - 1
    for seed in range(100):
        ep = reset(sc, (top, seed % len(sc.l2_labels)), seed)
        assert ep.n_valid == sc.density_counts[top]
        boxes = [box_corners(*ep.ego[:2], ep.ego[3], traffic.VEH_LENGTH, traffic.VEH_WIDTH)]
        for k in np.flatnonzero(ep.valid):
            x, y, v, psi = ep.sv[k]
            boxes.append(box_corners(x, y, psi, traffic.VEH_LENGTH, traffic.VEH_WIDTH))
            zones = [z for z in ep.world.sv_spawn if z.lane == ep.sv_lane[k]]
            assert any(z.s[0] <= ep.sv_s[k] <= z.s[1] for z in zones)
            assert v >= 0
        for a, b in itertools.combinations(boxes, 2):
            assert not boxes_overlap(a, b)


def test_spawn_failure_when_zone_is_too_small():
    d = OVERTAKING.to_dict()
    for z in d["worlds"][0]["spawn"]["sv"]:
        z["s"] = [60.0, 62.0]
    d["worlds"] = [d["worlds"][0]] * 3
    tight = Scenario.from_dict(d)
    with pytest.raises(SpawnFailure):
        reset(tight, (3, 0), 0)


def _free_episode(x=50.0, v=0.0, psi=0.0):
    ep = reset(OVERTAKING, (0, 0), 0)
    ep.ego = np.array([x, 0.0, v, psi])
    ep.progress = ep.route_line.project(x, 0.0)[0]
    return ep


def test_step_fixed_point_and_closed_form():
    ep = _free_episode()
    new, _ = step(ep, ControlCommand(0.0, 0.0))
    assert np.array_equal(new.ego, ep.ego)
    ep = _free_episode(v=2.0)
    new, info = step(ep, ControlCommand(0.0, 0.0), 0.1)
    assert new.ego[0] - ep.ego[0] == pytest.approx(0.2)
    assert new.ego[1] == ep.ego[1] and new.ego[3] == ep.ego[3]
    assert info.variables["delta_s"] == pytest.approx(0.2)


def test_overlap_is_collision():
    ep = reset(OVERTAKING, (1, 0), 3)
    k = int(np.flatnonzero(ep.valid)[0])
    ep.ego = np.array([ep.sv[k, 0] - 2.0, ep.sv[k, 1], 0.0, ep.sv[k, 3]])
    new, info = step(ep, ControlCommand(0.0, 0.0))
    assert new.status is Status.COLLISION
    assert info.variables["collision_flag"] == 1.0
    with pytest.raises(SteppedTerminalEpisode):
        step(new, ControlCommand(0.0, 0.0))


def test_leaving_road_is_collision():
    ep = _free_episode()
    ep.ego = np.array([50.0, -7.0, 0.0, 0.0])
    new, _ = step(ep, ControlCommand(0.0, 0.0))
    assert new.status is Status.COLLISION


def test_goal_entry_is_success_and_timeout_at_max_steps():
    ep = _free_episode(x=168.0, v=10.0)
    for _ in range(10):
        ep, info = step(ep, ControlCommand(0.0, 0.0))
        if ep.status is not Status.RUNNING:
            break
    assert ep.status is Status.SUCCESS and info.variables["success_flag"] == 1.0
    ep = reset(OVERTAKING, (0, 0), 0, max_steps=3)
    ep.ego[2] = 0.0
    for _ in range(3):
        ep, info = step(ep, ControlCommand(0.0, 0.0))
    assert ep.status is Status.TIMEOUT and ep.step_count == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2), st.integers(0, 10**6),
       st.lists(st.tuples(st.floats(-0.6, 0.6), st.floats(-6, 3)), min_size=1, max_size=8))
def test_episode_invariants(i, j, seed, cmds):
    """Trichotomy, count conservation, finite registry variables, bounded length."""
    ep = reset(OVERTAKING, (i, j), seed, max_steps=120)
    n = ep.n_valid
    steps = 0
    while ep.status is Status.RUNNING:
        steer, acc = cmds[steps % len(cmds)]
        ep, info = step(ep, ControlCommand(steer, acc))
        steps += 1
        assert ep.n_valid == n
        assert ep.step_count <= ep.max_steps
        assert all(math.isfinite(v) for v in info.variables.values())
        assert set(info.variables) == set(traffic.IMPLEMENTABLE)
        flags = [info.variables[k] for k in ("collision_flag", "success_flag", "timeout_flag")]
        assert sum(flags) == (0 if ep.status is Status.RUNNING else 1)
    assert steps <= ep.max_steps
    assert ep.status in (Status.SUCCESS, Status.COLLISION, Status.TIMEOUT)


def test_trace_determinism(tmp_path):
    def run(path):
        ep = reset(OVERTAKING, (2, 1), 5)
        recs = []
        k = 0
        while ep.status is Status.RUNNING and k < 60:
            cmd = ControlCommand(0.05 * math.sin(k / 5), 1.0)
            ep, _ = step(ep, cmd)
            recs.append(traffic.trace_record(ep, cmd))
            k += 1
        traffic.dump_trace(recs, path)
        return path.read_bytes()

    assert run(tmp_path / "a.jsonl") == run(tmp_path / "b.jsonl")
    json.loads((tmp_path / "a.jsonl").read_text().splitlines()[0])


# --- observation ------------------------------------------------------------------

def test_observe_at_route_end_is_zero():
    ep = reset(OVERTAKING, (0, 0), 0)
    x, y, psi = ep.route_line.pose_at(ep.route_line.length)
    ep.ego = np.array([x, y, 0.0, psi])
    obs = observe(ep)
    assert obs[0] == pytest.approx([0.0, 0.0, 0.0, 0.0], abs=1e-9)
    assert np.all(obs[1:] == SENTINEL)


def test_observe_orders_svs_by_distance():
    ep = reset(OVERTAKING, (1, 0), 0)
    ep.ego = np.array([100.0, 0.0, 5.0, 0.0])
    ep.sv[0] = (108.0, 0.0, 4.0, 0.0)
    ep.sv[1] = (103.0, 0.0, 6.0, 0.0)
    obs = observe(ep)
    assert obs[1] == pytest.approx([3.0, 0.0, 1.0, 0.0])
    assert obs[2] == pytest.approx([8.0, 0.0, -1.0, 0.0])
    assert np.all(obs[3:] == SENTINEL)


def oracle_observation(state, n_obs):
    """Independent recomputation from the raw state matrix."""
    ego, svs = state[0], state[1:]
    rows = []
    for x, y, v, psi, valid in svs:
        if valid:
            dx, dy = x - ego[0], y - ego[1]
            rot = np.array([[math.cos(-ego[3]), -math.sin(-ego[3])], [math.sin(-ego[3]), math.cos(-ego[3])]])
            bx, by = rot @ np.array([dx, dy])
            rows.append((math.hypot(dx, dy), [bx, by, v - ego[2], wrap_angle(psi - ego[3])]))
    rows.sort(key=lambda r: r[0])
    out = [r[1] for r in rows[:n_obs]]
    return np.array(out + [list(SENTINEL)] * (n_obs - len(out)))


def test_observe_matches_oracle_on_random_states():
    rng = np.random.default_rng(0)
    ep0 = reset(OVERTAKING, (3, 2), 1)
    for _ in range(1000):
        ep = reset(OVERTAKING, (3, 2), 1) if rng.random() < 0.01 else ep0
        ep.ego = np.array([rng.uniform(0, 200), rng.uniform(-5, 5), rng.uniform(0, 15), rng.uniform(-math.pi, math.pi)])
        ep.sv = np.column_stack([rng.uniform(0, 200, 6), rng.uniform(-5, 5, 6), rng.uniform(0, 15, 6),
                                 rng.uniform(-math.pi, math.pi, 6)])
        ep.valid = rng.random(6) < 0.7
        state = np.vstack([np.append(ep.ego, 1.0), np.column_stack([ep.sv, ep.valid])])
        obs = observe(ep)
        assert obs[1:] == pytest.approx(oracle_observation(state, traffic.N_OBS_MAX), abs=1e-9)
        assert np.all(np.abs(obs[:, 3]) <= math.pi)


def test_nearest_waypoints_at_route_start():
    ep = reset(OVERTAKING, (0, 0), 0)
    x, y, psi = ep.route[0]
    ep.ego = np.array([x - 1.0, y, 0.0, psi])
    assert nearest_waypoints(ep) == ep.route[:5]


def test_nearest_waypoints_tie_goes_to_lower_index():
    ep = reset(OVERTAKING, (0, 0), 0)
    ep.route = [(float(x), 0.0, 0.0) for x in (0, 2, 4, 6, 8, 10, 12)]
    ep.ego = np.array([5.0, 0.0, 0.0, 0.0])
    wps = nearest_waypoints(ep)
    assert len(wps) == 5
    dist = [abs(w[0] - 5.0) for w in ep.route]
    oracle = sorted(range(len(ep.route)), key=lambda k: (dist[k], k))[:5]
    assert wps == [ep.route[k] for k in oracle]
    assert wps[0][0] == 4.0 and wps[1][0] == 6.0


def test_short_route_raises():
    ep = reset(OVERTAKING, (0, 0), 0)
    ep.route = ep.route[:4]
    with pytest.raises(RouteTooShort):
        nearest_waypoints(ep)


def test_scenario_file_round_trip(tmp_path):
    for name in BUILTIN:
        sc = get_scenario(name)
        path = tmp_path / f"{name}.json"
        save_scenario(sc, path)
        back = load_scenario(path)
        assert back.to_dict() == sc.to_dict()
        a = reset(sc, (2, 1), 4).state_matrix().as_array()
        b = reset(back, (2, 1), 4).state_matrix().as_array()
        assert np.array_equal(a, b)
        assert get_scenario(str(path)).to_dict() == sc.to_dict()
