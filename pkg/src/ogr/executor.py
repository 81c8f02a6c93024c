"""Action decoding and low-level tracking control.

A multi-discrete action (waypoint index, speed index, lane index) is decoded
into a tracking target, which pure pursuit plus a proportional speed law turn
into steering and acceleration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .sim.geometry import wrap_angle
from .sim.traffic import WHEELBASE, ControlCommand

N_WAYPOINTS = 5
N_SPEEDS = 5
LANE_DECISIONS = (-1, 0, 1)  # left change, keep, right change
HEAD_SIZES = (N_WAYPOINTS, N_SPEEDS, len(LANE_DECISIONS))


@dataclass(frozen=True)
class TrackingTarget:
    x: float
    y: float
    psi: float
    v_ref: float
    lane_shift: int


@dataclass(frozen=True)
class ControllerParams:
    lookahead_min: float = 2.0
    lookahead_gain: float = 0.5
    k_v: float = 1.0
    steer_max: float = 0.6
    accel_min: float = -6.0
    accel_max: float = 3.0
    lane_width: float = 3.5
    wheelbase: float = WHEELBASE


def decode(action, wps, v_limit: float, lane_width: float = 3.5) -> TrackingTarget:
    i1, i2, i3 = (int(a) for a in action)
    x, y, psi = wps[i1]
    shift = LANE_DECISIONS[i3]
    if shift:
        # a left change (-1) moves the target along the waypoint's left normal
        x += -shift * lane_width * -math.sin(psi)
        y += -shift * lane_width * math.cos(psi)
    return TrackingTarget(x, y, psi, i2 * v_limit / (N_SPEEDS - 1), shift)


def pure_pursuit(x: float, y: float, v: float, psi: float, target: TrackingTarget,
                 params: ControllerParams = ControllerParams()) -> ControlCommand:
    accel = min(max(params.k_v * (target.v_ref - v), params.accel_min), params.accel_max)
    dx, dy = target.x - x, target.y - y
    if math.hypot(dx, dy) < 1e-9:
        # degenerate target: nothing to steer toward
        return ControlCommand(0.0, accel)
    alpha = wrap_angle(math.atan2(dy, dx) - psi)
    ld = max(params.lookahead_min, params.lookahead_gain * v)
    steer = math.atan2(2.0 * params.wheelbase * math.sin(alpha), ld)
    steer = min(max(steer, -params.steer_max), params.steer_max)
    return ControlCommand(steer, accel)
