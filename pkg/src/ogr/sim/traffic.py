"""Episode lifecycle: reset, kinematic stepping, observation, waypoint selection.

The ego vehicle follows a forward-Euler kinematic bicycle model.  Surrounding
vehicles (SVs) travel along lane centerlines under an IDM-style car-following
law whose parameters depend on a per-vehicle driving style.  SV-SV contact is
not simulated; only ego contacts terminate an episode.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .geometry import Polyline, box_corners, boxes_overlap, point_in_polygon, wrap_angle
from .routing import plan_reference
from .world import RoadWorld, Scenario

DT = 0.1
MAX_STEPS = 400
N_OBS_MAX = 4
SENTINEL = (1e3, 1e3, 0.0, 0.0)
SPAWN_ATTEMPTS = 100

VEH_LENGTH = 4.5
VEH_WIDTH = 1.8
WHEELBASE = 2.7
SPAWN_GAP = 8.0
OFFROAD_FRACTION = 0.75


class Status(str, Enum):
    RUNNING = "Running"
    SUCCESS = "Success"
    COLLISION = "Collision"
    TIMEOUT = "Timeout"


class SpawnFailure(Exception):
    pass


class SteppedTerminalEpisode(Exception):
    pass


class RouteTooShort(Exception):
    pass


@dataclass(frozen=True)
class Style:
    name: str
    speed_factor: float
    headway: float
    a_max: float
    b_comf: float
    corridor: float  # lateral half-width within which the ego counts as a leader


STYLES = (
    Style("aggressive", 1.15, 0.8, 3.0, 3.5, 1.2),
    Style("normal", 1.0, 1.5, 2.0, 2.5, 1.75),
    Style("cautious", 0.85, 2.2, 1.2, 2.0, 2.5),
)


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    v: float
    psi: float

    def __post_init__(self):
        if self.v < 0:
            raise ValueError("speed must be non-negative")
        object.__setattr__(self, "psi", wrap_angle(self.psi))


@dataclass(frozen=True)
class StateMatrix:
    ego: VehicleState
    svs: tuple[tuple[VehicleState, bool], ...]

    def as_array(self) -> np.ndarray:
        rows = [(self.ego.x, self.ego.y, self.ego.v, self.ego.psi)]
        rows += [(s.x, s.y, s.v, s.psi) for s, _ in self.svs]
        return np.array(rows)


@dataclass(frozen=True)
class ControlCommand:
    steering: float
    acceleration: float


@dataclass
class EpisodeState:
    world: RoadWorld
    task: tuple[int, int]
    ego: np.ndarray  # x, y, v, psi
    sv: np.ndarray  # (n_sv_max, 4); invalid rows are zero
    valid: np.ndarray
    sv_lane: tuple[str, ...]
    sv_s: np.ndarray
    sv_v0: np.ndarray
    sv_style: tuple[str, ...]
    route: list[tuple[float, float, float]]
    step_count: int = 0
    max_steps: int = MAX_STEPS
    status: Status = Status.RUNNING
    progress: float = 0.0
    seed: int = 0
    _route_line: Polyline | None = field(default=None, repr=False, compare=False)

    @property
    def route_line(self) -> Polyline:
        if self._route_line is None:
            self._route_line = Polyline([(x, y) for x, y, _ in self.route])
        return self._route_line

    def state_matrix(self) -> StateMatrix:
        ego = VehicleState(*self.ego)
        svs = tuple((VehicleState(*(row if ok else (0.0, 0.0, 0.0, 0.0))), bool(ok)) for row, ok in zip(self.sv, self.valid))
        return StateMatrix(ego, svs)

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


@dataclass
class StepInfo:
    status: Status
    variables: dict[str, float]


# Variables the simulator can compute every step.  Reward programs may only
# see the subset named in the active observation registry.
IMPLEMENTABLE = {
    "speed": ("m/s", "ego speed"),
    "delta_s": ("m", "progress along the reference route during the last step"),
    "dy": ("m", "signed lateral deviation from the reference route, left positive"),
    "dpsi": ("rad", "heading deviation from the route tangent"),
    "dist_nearest_sv": ("m", "center distance to the nearest SV, capped at 100"),
    "collision_flag": ("1", "1 on the step the ego collides or leaves the road"),
    "success_flag": ("1", "1 on the step the ego enters the goal region"),
    "timeout_flag": ("1", "1 on the step the episode times out"),
    "step_fraction": ("1", "elapsed steps divided by max_steps"),
    "ttc_front": ("s", "time to collision with the nearest SV ahead in the ego corridor, capped at 10"),
    "front_gap": ("m", "bumper gap to the nearest SV ahead in the ego corridor, capped at 100"),
    "rel_speed_front": ("m/s", "speed of the nearest SV ahead minus ego speed, 0 when none"),
    "dist_to_goal": ("m", "remaining route length"),
    "accel_cmd": ("m/s^2", "commanded acceleration"),
    "steer_cmd": ("rad", "commanded steering angle"),
}


def _route(world: RoadWorld):
    key = "__route__"
    if key not in world._poly:
        world._poly[key] = plan_reference(world)
    return world._poly[key]


def _footprint(x, y, psi, pad=0.0):
    return box_corners(x, y, psi, VEH_LENGTH + pad, VEH_WIDTH)


def reset(scenario: Scenario, task: tuple[int, int], seed: int, world: RoadWorld | None = None,
          max_steps: int = MAX_STEPS) -> EpisodeState:
    i, j = task
    if not (0 <= i < len(scenario.density_counts) and 0 <= j < len(scenario.l2_labels)):
        raise ValueError(f"task {task} outside the task set")
    world = world or scenario.world_for(j)
    rng = np.random.default_rng(seed)
    zone = world.ego_spawn[int(rng.integers(len(world.ego_spawn)))]
    pl = world.polyline(zone.lane)
    ex, ey, epsi = pl.pose_at(rng.uniform(*zone.s))
    ego = np.array([ex, ey, rng.uniform(*zone.v), epsi])

    n_max = scenario.n_sv_max
    sv = np.zeros((n_max, 4))
    valid = np.zeros(n_max, dtype=bool)
    sv_s = np.zeros(n_max)
    sv_v0 = np.zeros(n_max)
    lanes, styles = [], []
    placed = [_footprint(ex, ey, epsi, 2 * SPAWN_GAP)]
    lo, hi = scenario.sv_speed[j]
    for k in range(scenario.density_counts[i]):
        for _ in range(SPAWN_ATTEMPTS):
            z = world.sv_spawn[int(rng.integers(len(world.sv_spawn)))]
            s = rng.uniform(*z.s)
            x, y, psi = world.polyline(z.lane).pose_at(s)
            box = _footprint(x, y, psi, 2 * SPAWN_GAP)
            if not any(boxes_overlap(box, other) for other in placed):
                break
        else:
            raise SpawnFailure(f"could not place SV {k} in {SPAWN_ATTEMPTS} attempts")
        placed.append(box)
        style = STYLES[int(rng.integers(len(STYLES)))]
        v0 = style.speed_factor * rng.uniform(lo, hi) * world.v_limit
        sv[k] = (x, y, v0 * rng.uniform(0.8, 1.0), psi)
        valid[k] = True
        sv_s[k] = s
        sv_v0[k] = v0
        lanes.append(z.lane)
        styles.append(style.name)
    lanes += [""] * (n_max - len(lanes))
    styles += [""] * (n_max - len(styles))
    ep = EpisodeState(
        world=world, task=(i, j), ego=ego, sv=sv, valid=valid, sv_lane=tuple(lanes),
        sv_s=sv_s, sv_v0=sv_v0, sv_style=tuple(styles), route=list(_route(world)),
        max_steps=max_steps, seed=seed,
    )
    ep.progress = ep.route_line.project(ex, ey)[0]
    return ep


def _idm(v, v0, gap, dv, style: Style) -> float:
    s_star = 2.0 + v * style.headway + v * dv / (2.0 * math.sqrt(style.a_max * style.b_comf))
    free = 1.0 - (v / max(v0, 0.1)) ** 4
    if gap <= 0.1:
        return -8.0
    return max(-8.0, style.a_max * (free - (max(s_star, 0.0) / gap) ** 2))


_STYLE = {s.name: s for s in STYLES}


def _sv_accels(ep: EpisodeState) -> np.ndarray:
    acc = np.zeros(len(ep.valid))
    ex, ey, ev, _ = ep.ego
    for k in np.flatnonzero(ep.valid):
        lane, s, v = ep.sv_lane[k], ep.sv_s[k], ep.sv[k, 2]
        style = _STYLE[ep.sv_style[k]]
        gap, lead_v = math.inf, 0.0
        for m in np.flatnonzero(ep.valid):
            if m != k and ep.sv_lane[m] == lane and ep.sv_s[m] > s:
                g = ep.sv_s[m] - s - VEH_LENGTH
                if g < gap:
                    gap, lead_v = g, ep.sv[m, 2]
        pl = ep.world.polyline(lane)
        es, elat, _ = pl.project(ex, ey)
        if abs(elat) < style.corridor and 0.0 < es - s < 60.0:
            g = es - s - VEH_LENGTH
            if g < gap:
                gap, lead_v = g, ev
        if math.isinf(gap):
            acc[k] = _idm(v, ep.sv_v0[k], 1e9, 0.0, style)
        else:
            acc[k] = _idm(v, ep.sv_v0[k], gap, v - lead_v, style)
    return acc


def _offroad(world: RoadWorld, x: float, y: float) -> bool:
    lim = OFFROAD_FRACTION * world.lane_width
    return all(world.polyline(name).distance(x, y) > lim for name in world.lanes)


def step(ep: EpisodeState, cmd: ControlCommand, dt: float = DT) -> tuple[EpisodeState, StepInfo]:
    if ep.status is not Status.RUNNING:
        raise SteppedTerminalEpisode(f"episode already ended with {ep.status.value}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    acc = _sv_accels(ep)

    x, y, v, psi = ep.ego
    ego = np.array([
        x + v * math.cos(psi) * dt,
        y + v * math.sin(psi) * dt,
        max(0.0, v + cmd.acceleration * dt),
        wrap_angle(psi + v / WHEELBASE * math.tan(cmd.steering) * dt),
    ])

    sv = ep.sv.copy()
    sv_s = ep.sv_s.copy()
    for k in np.flatnonzero(ep.valid):
        sv_s[k] = ep.sv_s[k] + ep.sv[k, 2] * dt
        nx, ny, npsi = ep.world.polyline(ep.sv_lane[k]).pose_at(sv_s[k])
        sv[k] = (nx, ny, max(0.0, ep.sv[k, 2] + acc[k] * dt), npsi)

    new = replace(ep, ego=ego, sv=sv, sv_s=sv_s, step_count=ep.step_count + 1, _route_line=ep._route_line)
    route_s, lat, tangent = new.route_line.project(ego[0], ego[1])
    delta_s = route_s - ep.progress
    new.progress = route_s

    ebox = _footprint(ego[0], ego[1], ego[3])
    collided = _offroad(ep.world, ego[0], ego[1])
    for k in np.flatnonzero(new.valid):
        if collided:
            break
        if math.hypot(sv[k, 0] - ego[0], sv[k, 1] - ego[1]) < VEH_LENGTH + VEH_WIDTH:
            collided = boxes_overlap(ebox, _footprint(sv[k, 0], sv[k, 1], sv[k, 3]))
    if collided:
        new.status = Status.COLLISION
    elif point_in_polygon(ego[0], ego[1], ep.world.goal):
        new.status = Status.SUCCESS
    elif new.step_count >= new.max_steps:
        new.status = Status.TIMEOUT

    info = StepInfo(new.status, _variables(new, cmd, delta_s, lat, tangent))
    return new, info


def _variables(ep: EpisodeState, cmd: ControlCommand, delta_s, lat, tangent) -> dict[str, float]:
    x, y, v, psi = ep.ego
    c, s = math.cos(psi), math.sin(psi)
    nearest, gap, ttc, rel = 100.0, 100.0, 10.0, 0.0
    for k in np.flatnonzero(ep.valid):
        dx, dy = ep.sv[k, 0] - x, ep.sv[k, 1] - y
        nearest = min(nearest, math.hypot(dx, dy))
        lon, lat_k = c * dx + s * dy, -s * dx + c * dy
        if lon > 0 and abs(lat_k) < VEH_WIDTH + 0.2:
            g = max(lon - VEH_LENGTH, 0.0)
            if g < gap:
                gap = g
                sv_lon_v = ep.sv[k, 2] * math.cos(ep.sv[k, 3] - psi)
                rel = sv_lon_v - v
                ttc = min(10.0, g / -rel) if rel < 0 else 10.0
    return {
        "speed": float(v),
        "delta_s": float(delta_s),
        "dy": float(lat),
        "dpsi": wrap_angle(psi - tangent),
        "dist_nearest_sv": float(nearest),
        "collision_flag": float(ep.status is Status.COLLISION),
        "success_flag": float(ep.status is Status.SUCCESS),
        "timeout_flag": float(ep.status is Status.TIMEOUT),
        "step_fraction": ep.step_count / ep.max_steps,
        "ttc_front": float(ttc),
        "front_gap": float(gap),
        "rel_speed_front": float(rel),
        "dist_to_goal": max(0.0, ep.route_line.length - ep.progress),
        "accel_cmd": float(cmd.acceleration),
        "steer_cmd": float(cmd.steering),
    }


def observe(ep: EpisodeState, n_obs: int = N_OBS_MAX) -> np.ndarray:
    """(n_obs + 1) x 4 observation matrix.

    Row 0 is the ego pose relative to the route end in route coordinates:
    (arc length minus route length, lateral offset, speed, heading error).
    Rows 1.. are SV states minus the ego state, positions rotated into the ego
    body frame, nearest SV first; missing rows hold ``SENTINEL``.
    """
    x, y, v, psi = ep.ego
    line = ep.route_line
    s, lat, tangent = line.project(x, y)
    obs = np.empty((n_obs + 1, 4))
    obs[0] = (s - line.length, lat, v, wrap_angle(psi - tangent))
    idx = np.flatnonzero(ep.valid)
    d = np.hypot(ep.sv[idx, 0] - x, ep.sv[idx, 1] - y)
    order = idx[np.argsort(d, kind="stable")]
    c, sn = math.cos(psi), math.sin(psi)
    for r in range(n_obs):
        if r < len(order):
            k = order[r]
            dx, dy = ep.sv[k, 0] - x, ep.sv[k, 1] - y
            obs[r + 1] = (c * dx + sn * dy, -sn * dx + c * dy, ep.sv[k, 2] - v, wrap_angle(ep.sv[k, 3] - psi))
        else:
            obs[r + 1] = SENTINEL
    return obs


def nearest_waypoints(ep: EpisodeState, k: int = 5) -> list[tuple[float, float, float]]:
    if len(ep.route) < k:
        raise RouteTooShort(f"route has {len(ep.route)} waypoints, need {k}")
    pts = np.array([(wx, wy) for wx, wy, _ in ep.route])
    d = np.hypot(pts[:, 0] - ep.ego[0], pts[:, 1] - ep.ego[1])
    order = np.argsort(d, kind="stable")[:k]
    return [ep.route[i] for i in order]


def trace_record(ep: EpisodeState, cmd: ControlCommand | None = None, action=None) -> dict:
    rec = {
        "step": ep.step_count,
        "status": ep.status.value,
        "ego": [float(a) for a in ep.ego],
        "svs": [[float(a) for a in row] for row in ep.sv],
        "valid": [bool(b) for b in ep.valid],
    }
    if cmd is not None:
        rec["cmd"] = [cmd.steering, cmd.acceleration]
    if action is not None:
        rec["action"] = [int(a) for a in action]
    return rec


def dump_trace(records, path) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")
