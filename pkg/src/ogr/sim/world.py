"""Road worlds and scenario families, with JSON scenario files."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Polyline

LANE_WIDTH = 3.5


@dataclass(frozen=True)
class SpawnZone:
    lane: str
    s: tuple[float, float]
    v: tuple[float, float] = (0.0, 0.0)


@dataclass
class RoadWorld:
    kind: str
    lanes: dict[str, list[tuple[float, float]]]
    v_limit: float
    goal: list[tuple[float, float]]
    ego_spawn: list[SpawnZone]
    sv_spawn: list[SpawnZone]
    nodes: list[tuple[float, float, float]]
    edges: list[tuple[int, int, float]]
    lane_width: float = LANE_WIDTH
    _poly: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.v_limit <= 0:
            raise ValueError("v_limit must be positive")
        for zone in self.ego_spawn + self.sv_spawn:
            if zone.lane not in self.lanes:
                raise ValueError(f"spawn zone on unknown lane {zone.lane!r}")

    def polyline(self, lane: str) -> Polyline:
        if lane not in self._poly:
            self._poly[lane] = Polyline(self.lanes[lane])
        return self._poly[lane]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "v_limit": self.v_limit,
            "lane_width": self.lane_width,
            "lanes": {k: [list(p) for p in v] for k, v in self.lanes.items()},
            "goal": [list(p) for p in self.goal],
            "spawn": {
                "ego": [_zone_dict(z) for z in self.ego_spawn],
                "sv": [_zone_dict(z) for z in self.sv_spawn],
            },
            "graph": {
                "nodes": [list(n) for n in self.nodes],
                "edges": [list(e) for e in self.edges],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoadWorld":
        return cls(
            kind=d["kind"],
            lanes={k: [tuple(map(float, p)) for p in v] for k, v in d["lanes"].items()},
            v_limit=float(d["v_limit"]),
            goal=[tuple(map(float, p)) for p in d["goal"]],
            ego_spawn=[_zone(z) for z in d["spawn"]["ego"]],
            sv_spawn=[_zone(z) for z in d["spawn"]["sv"]],
            nodes=[tuple(map(float, n)) for n in d["graph"]["nodes"]],
            edges=[(int(a), int(b), float(c)) for a, b, c in d["graph"]["edges"]],
            lane_width=float(d.get("lane_width", LANE_WIDTH)),
        )


def _zone_dict(z: SpawnZone) -> dict:
    return {"lane": z.lane, "s": list(z.s), "v": list(z.v)}


def _zone(d: dict) -> SpawnZone:
    return SpawnZone(d["lane"], tuple(d["s"]), tuple(d.get("v", (0.0, 0.0))))


@dataclass
class Scenario:
    """A scenario family: the worlds plus the two-level task set that indexes them.

    Level-1 always indexes traffic density.  Level-2 is either an SV speed mode
    (``level2 == "speed_mode"``) or a task variant selecting among ``worlds``.
    """

    name: str
    worlds: list[RoadWorld]
    l1_labels: list[str]
    l2_labels: list[str]
    density_counts: list[int]
    level2: str
    # per level-2 index, desired-speed band for SVs as fractions of v_limit
    sv_speed: list[tuple[float, float]]

    def world_for(self, j: int) -> RoadWorld:
        if self.level2 == "variant":
            return self.worlds[j]
        return self.worlds[0]

    @property
    def n_sv_max(self) -> int:
        return max(self.density_counts)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "task_set": {
                "level1": self.l1_labels,
                "level2": self.l2_labels,
                "level2_kind": self.level2,
            },
            "density_counts": self.density_counts,
            "sv_speed": [list(b) for b in self.sv_speed],
            "worlds": [w.to_dict() for w in self.worlds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        ts = d["task_set"]
        sc = cls(
            name=d["name"],
            worlds=[RoadWorld.from_dict(w) for w in d["worlds"]],
            l1_labels=list(ts["level1"]),
            l2_labels=list(ts["level2"]),
            density_counts=[int(c) for c in d["density_counts"]],
            level2=ts["level2_kind"],
            sv_speed=[tuple(b) for b in d["sv_speed"]],
        )
        if len(sc.density_counts) != len(sc.l1_labels):
            raise ValueError("density_counts must match level-1 labels")
        if len(sc.sv_speed) != len(sc.l2_labels):
            raise ValueError("sv_speed must match level-2 labels")
        if sc.level2 == "variant" and len(sc.worlds) != len(sc.l2_labels):
            raise ValueError("variant scenarios need one world per level-2 label")
        return sc


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_dict(json.loads(Path(path).read_text()))


def save_scenario(sc: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sc.to_dict(), indent=1) + "\n")


# --- built-in families ---------------------------------------------------

SPACING = 4.0


def _straight(x0, x1, y, step=10.0):
    xs = np.arange(x0, x1 + 1e-9, step)
    return [(float(x), float(y)) for x in xs]


def _lane_graph(lanes: dict[str, Polyline], order: list[str], s_end: float):
    """Nodes every SPACING m along each lane, forward edges and lane-change edges."""
    nodes, index = [], {}
    for name in order:
        pl = lanes[name]
        n = int(math.floor(min(s_end, pl.length) / SPACING))
        for k in range(n + 1):
            x, y, psi = pl.pose_at(k * SPACING)
            index[(name, k)] = len(nodes)
            nodes.append((round(x, 6), round(y, 6), round(psi, 6)))
    edges = []
    for (name, k), i in index.items():
        j = index.get((name, k + 1))
        if j is not None:
            edges.append((i, j, SPACING))
    for a, b in zip(order, order[1:]):
        for src, dst in ((a, b), (b, a)):
            for (name, k), i in index.items():
                if name != src:
                    continue
                j = index.get((dst, k + 2))
                if j is not None:
                    (x0, y0, _), (x1, y1, _) = nodes[i], nodes[j]
                    edges.append((i, j, math.hypot(x1 - x0, y1 - y0) + 2.0))
    return nodes, edges


def overtaking_world(v_limit: float = 15.0) -> RoadWorld:
    ys = {"right": -LANE_WIDTH, "middle": 0.0, "left": LANE_WIDTH}
    lanes = {k: _straight(-20.0, 240.0, y) for k, y in ys.items()}
    polys = {k: Polyline(v) for k, v in lanes.items()}
    nodes, edges = _lane_graph(polys, ["right", "middle", "left"], 200.0)
    return RoadWorld(
        kind="overtaking",
        lanes=lanes,
        v_limit=v_limit,
        goal=[(170.0, -5.25), (190.0, -5.25), (190.0, 5.25), (170.0, 5.25)],
        ego_spawn=[SpawnZone("middle", (20.0, 30.0), (3.0, 8.0))],
        sv_spawn=[SpawnZone(k, (40.0, 165.0)) for k in ys],
        nodes=nodes,
        edges=edges,
    )


def merging_world(v_limit: float = 15.0) -> RoadWorld:
    main_r = _straight(-40.0, 260.0, 0.0)
    main_l = _straight(-40.0, 260.0, LANE_WIDTH)
    ramp = [(-10.0, -24.0), (20.0, -14.0), (50.0, -5.0), (75.0, -0.6), (85.0, 0.0)]
    ramp += [(x, 0.0) for x, _ in _straight(95.0, 260.0, 0.0)]
    lanes = {"main_right": main_r, "main_left": main_l, "ramp": ramp}
    polys = {k: Polyline(v) for k, v in lanes.items()}
    nodes, edges = _lane_graph({"ramp": polys["ramp"]}, ["ramp"], 230.0)
    return RoadWorld(
        kind="merging",
        lanes=lanes,
        v_limit=v_limit,
        goal=[(180.0, -1.75), (200.0, -1.75), (200.0, 5.25), (180.0, 5.25)],
        ego_spawn=[SpawnZone("ramp", (0.0, 10.0), (3.0, 8.0))],
        sv_spawn=[SpawnZone("main_right", (20.0, 150.0)), SpawnZone("main_left", (20.0, 150.0))],
        nodes=nodes,
        edges=edges,
    )


def _arc(cx, cy, r, a0, a1, n=8):
    return [(cx + r * math.cos(a0 + (a1 - a0) * k / n), cy + r * math.sin(a0 + (a1 - a0) * k / n)) for k in range(n + 1)]


def intersection_world(variant: str, v_limit: float = 12.0) -> RoadWorld:
    h = LANE_WIDTH / 2
    e = 7.0  # stop-line offset from the center
    approach = [(h, -70.0), (h, -e)]
    paths = {
        "straight": approach + [(h, 70.0)],
        "left": approach + _arc(-e, -e, e + h, 0.0, math.pi / 2)[1:] + [(-70.0, h)],
        "right": approach + _arc(e, -e, e - h, math.pi, math.pi / 2)[1:] + [(70.0, -h)],
    }
    lanes = {
        "ego_" + variant: paths[variant],
        "eastbound": [(-80.0, -h), (80.0, -h)],
        "westbound": [(80.0, h), (-80.0, h)],
        "southbound": [(-h, 80.0), (-h, -80.0)],
        "northbound_far": [(h, 0.0), (h, 80.0)],
    }
    poly = Polyline(paths[variant])
    nodes, edges = _lane_graph({"p": poly}, ["p"], poly.length)
    goals = {
        "straight": [(-h - 1.75, 40.0), (h + 1.75, 40.0), (h + 1.75, 55.0), (-h - 1.75, 55.0)],
        "left": [(-55.0, -h - 1.75), (-40.0, -h - 1.75), (-40.0, h + 1.75), (-55.0, h + 1.75)],
        "right": [(40.0, -h - 1.75), (55.0, -h - 1.75), (55.0, h + 1.75), (40.0, h + 1.75)],
    }
    return RoadWorld(
        kind="intersection-" + variant,
        lanes=lanes,
        v_limit=v_limit,
        goal=goals[variant],
        ego_spawn=[SpawnZone("ego_" + variant, (5.0, 15.0), (2.0, 6.0))],
        sv_spawn=[
            SpawnZone("eastbound", (30.0, 75.0)),
            SpawnZone("westbound", (30.0, 75.0)),
            SpawnZone("southbound", (30.0, 75.0)),
        ],
        nodes=nodes,
        edges=edges,
    )


DENSITY_LABELS = ["empty", "low", "medium", "high"]


def overtaking() -> Scenario:
    return Scenario(
        name="overtaking",
        worlds=[overtaking_world()],
        l1_labels=list(DENSITY_LABELS),
        l2_labels=["fast", "moderate", "mixed"],
        density_counts=[0, 2, 4, 6],
        level2="speed_mode",
        sv_speed=[(0.55, 0.65), (0.35, 0.45), (0.1, 0.6)],
    )


def merging() -> Scenario:
    return Scenario(
        name="merging",
        worlds=[merging_world()],
        l1_labels=list(DENSITY_LABELS),
        l2_labels=["fast", "moderate", "mixed"],
        density_counts=[0, 2, 4, 6],
        level2="speed_mode",
        sv_speed=[(0.7, 0.8), (0.45, 0.55), (0.3, 0.8)],
    )


def intersection() -> Scenario:
    variants = ["left", "straight", "right"]
    return Scenario(
        name="intersection",
        worlds=[intersection_world(v) for v in variants],
        l1_labels=list(DENSITY_LABELS),
        l2_labels=variants,
        density_counts=[0, 1, 2, 3],
        level2="variant",
        sv_speed=[(0.4, 0.7)] * 3,
    )


BUILTIN = {"overtaking": overtaking, "merging": merging, "intersection": intersection}


def get_scenario(name_or_path: str) -> Scenario:
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]()
    return load_scenario(name_or_path)
