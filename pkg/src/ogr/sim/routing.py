"""A* reference planning over a world's waypoint graph."""

from __future__ import annotations

import heapq
import math

from .geometry import point_in_polygon
from .world import RoadWorld


class NoRoute(Exception):
    pass


def goal_nodes(world: RoadWorld) -> set[int]:
    return {i for i, (x, y, _) in enumerate(world.nodes) if point_in_polygon(x, y, world.goal)}


def start_node(world: RoadWorld) -> int:
    zone = world.ego_spawn[0]
    x, y, _ = world.polyline(zone.lane).pose_at(zone.s[0])
    return min(range(len(world.nodes)), key=lambda i: (math.hypot(world.nodes[i][0] - x, world.nodes[i][1] - y), i))


def astar(nodes, edges, start: int, goals: set[int]) -> list[int]:
    """Minimal-cost node path from ``start`` to any node in ``goals``.

    The Euclidean heuristic is scaled by the smallest cost/length ratio over all
    edges so it stays admissible for arbitrary non-negative edge costs.
    """
    if not goals:
        raise NoRoute("goal region contains no graph node")
    adj: dict[int, list[tuple[int, float]]] = {}
    ratio = math.inf
    for a, b, c in edges:
        if c < 0:
            raise ValueError("negative edge cost")
        adj.setdefault(a, []).append((b, c))
        length = math.hypot(nodes[b][0] - nodes[a][0], nodes[b][1] - nodes[a][1])
        if length > 0:
            ratio = min(ratio, c / length)
    if not math.isfinite(ratio):
        ratio = 0.0
    gxy = [(nodes[g][0], nodes[g][1]) for g in goals]

    def h(i):
        x, y = nodes[i][0], nodes[i][1]
        return ratio * min(math.hypot(x - gx, y - gy) for gx, gy in gxy)

    best = {start: 0.0}
    parent: dict[int, int] = {}
    frontier = [(h(start), 0.0, start)]
    closed = set()
    while frontier:
        _, g, u = heapq.heappop(frontier)
        if u in closed:
            continue
        if u in goals:
            path = [u]
            while path[-1] != start:
                path.append(parent[path[-1]])
            return path[::-1]
        closed.add(u)
        for v, c in adj.get(u, ()):
            ng = g + c
            # ties resolved toward the lower node index for determinism
            if v not in best or ng < best[v] - 1e-12 or (abs(ng - best[v]) <= 1e-12 and u < parent.get(v, u + 1)):
                if v in closed:
                    continue
                best[v] = ng
                parent[v] = u
                heapq.heappush(frontier, (ng + h(v), ng, v))
    raise NoRoute(f"no path from node {start} to the goal region")


def plan_reference(world: RoadWorld) -> list[tuple[float, float, float]]:
    """Waypoint sequence (x, y, psi) from the ego spawn to the goal region."""
    path = astar(world.nodes, world.edges, start_node(world), goal_nodes(world))
    return [world.nodes[i] for i in path]


def path_cost(edges, path: list[int]) -> float:
    cost = {}
    for a, b, c in edges:
        cost[(a, b)] = min(c, cost.get((a, b), math.inf))
    return sum(cost[(a, b)] for a, b in zip(path, path[1:]))
