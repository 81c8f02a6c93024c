"""Policy-facing environment wrapper and episode rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..executor import ControllerParams, decode, pure_pursuit
from ..rewardlang import CompiledProgram
from ..rl.network import ActorCritic
from ..rl.ppo import RolloutBuffer
from ..sim import traffic
from ..sim.traffic import Status
from ..sim.world import Scenario

OBS_CLIP = 5.0


def obs_scales(world, n_obs: int = traffic.N_OBS_MAX) -> np.ndarray:
    """Fixed per-column scales for standardizing the observation matrix."""
    length = max(_route_length(world), 1.0)
    scales = np.empty((n_obs + 1, 4))
    scales[0] = (length, 2.0 * world.lane_width, world.v_limit, math.pi)
    scales[1:] = (50.0, 10.0, world.v_limit, math.pi)
    return scales


def _route_length(world) -> float:
    pts = np.array([(x, y) for x, y, _ in traffic._route(world)])
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def flatten_obs(obs: np.ndarray, scales: np.ndarray) -> np.ndarray:
    return np.clip((obs / scales).ravel(), -OBS_CLIP, OBS_CLIP)


OBS_DIM = (traffic.N_OBS_MAX + 1) * 4


class DrivingEnv:
    """One scenario family bound to a reward program and an observation registry.

    Reward programs only ever see the variables named in ``visible``.
    """

    def __init__(self, scenario: Scenario, reward: CompiledProgram, visible, controller=ControllerParams(),
                 max_steps: int = traffic.MAX_STEPS):
        self.scenario, self.reward, self.visible = scenario, reward, frozenset(visible)
        self.controller, self.max_steps = controller, max_steps
        self._scales = {}
        self.ep: traffic.EpisodeState | None = None

    def scales(self, world):
        key = id(world)
        if key not in self._scales:
            self._scales[key] = obs_scales(world)
        return self._scales[key]

    def reset(self, task, seed: int) -> np.ndarray:
        self.ep = traffic.reset(self.scenario, task, seed, max_steps=self.max_steps)
        return self.observation()

    def observation(self) -> np.ndarray:
        return flatten_obs(traffic.observe(self.ep), self.scales(self.ep.world))

    def step(self, action):
        ep = self.ep
        wps = traffic.nearest_waypoints(ep)
        target = decode(action, wps, ep.world.v_limit, self.controller.lane_width)
        x, y, v, psi = ep.ego
        cmd = pure_pursuit(x, y, v, psi, target, self.controller)
        self.ep, info = traffic.step(ep, cmd)
        env = {k: info.variables[k] for k in self.visible if k in info.variables}
        total, parts = self.reward(env)
        return self.observation(), total, self.ep.status is not Status.RUNNING, info, parts, cmd


@dataclass
class EpisodeResult:
    task: tuple[int, int]
    seed: int
    status: Status
    length: int
    total_reward: float
    term_sums: dict[str, float]
    frames: list = field(default_factory=list)


def run_episode(policy: ActorCritic, env: DrivingEnv, task, seed: int, rng=None, greedy=False,
                buffer: RolloutBuffer | None = None, record=False) -> EpisodeResult:
    obs = env.reset(task, seed)
    total, sums, frames = 0.0, {name: 0.0 for name in env.reward.program.names}, []
    done = False
    while not done:
        action, logp, value = policy.act(obs, rng, greedy=greedy)
        next_obs, r, done, info, parts, cmd = env.step(action)
        if buffer is not None:
            buffer.add(obs, action, logp, r, value, done)
        total += r
        for k, v in parts.items():
            sums[k] += v
        if record:
            frames.append({
                "step": env.ep.step_count,
                "ego": [round(float(a), 4) for a in env.ep.ego],
                "svs": [[round(float(a), 4) for a in row] for row, ok in zip(env.ep.sv, env.ep.valid) if ok],
                "action": list(action),
                "reward": {k: round(v, 6) for k, v in parts.items()},
            })
        obs = next_obs
    return EpisodeResult(tuple(task), seed, env.ep.status, env.ep.step_count, total, sums, frames)
