"""Curriculum versus direct training under a fixed hand-written reward."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..curriculum import CurriculumSpec, TaskSet, baseline_curriculum, schedule
from ..rewardlang import CompiledProgram, parse_program
from ..rl.network import ActorCritic
from ..rl.ppo import PPOConfig, PPOLearner
from .env import OBS_DIM, DrivingEnv
from .evaluate import evaluate_policy
from .training import EXPERT_REWARD, TrainLog, train_on_tasks


@dataclass(frozen=True)
class TrendConfig:
    episodes: int = 500
    eval_episodes: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    density_ratio: tuple[int, ...] = (1, 2, 2, 5)
    mode_ratio: tuple[int, ...] = (1, 1, 3)
    episodes_per_update: int = 10
    ppo: PPOConfig = field(default_factory=lambda: PPOConfig(epochs_per_update=10))


def direct_spec(ts: TaskSet, mode_ratio) -> CurriculumSpec:
    """Top density band only, level-2 weighted as in the curriculum."""
    top = ts.n_l1_max
    return CurriculumSpec(tuple(((top, j), float(w)) for j, w in enumerate(mode_ratio) if w > 0))


def train_fixed(scenario, spec: CurriculumSpec, episodes: int, seed: int, cfg: TrendConfig,
                reward_source: str = EXPERT_REWARD) -> tuple[ActorCritic, TrainLog]:
    prog = parse_program(reward_source)
    env = DrivingEnv(scenario, CompiledProgram(prog), prog.variables())
    policy = ActorCritic(OBS_DIM, seed=seed, dtype=np.float32)
    log = train_on_tasks(PPOLearner(policy, cfg.ppo), env, schedule(spec, episodes, seed), seed,
                         cfg.episodes_per_update)
    return policy, log


def compare(scenario, cfg: TrendConfig = TrendConfig(), progress=None) -> dict:
    """Top-band SR per seed for both arms, and the mean gap (curriculum minus direct)."""
    ts = TaskSet.from_scenario(scenario)
    arms = {"curriculum": baseline_curriculum(ts, cfg.density_ratio, cfg.mode_ratio),
            "direct": direct_spec(ts, cfg.mode_ratio)}
    top = ts.n_l1_max
    rows = []
    t0 = time.perf_counter()
    for seed in cfg.seeds:
        row = {"seed": seed}
        for name, spec in arms.items():
            policy, log = train_fixed(scenario, spec, cfg.episodes, seed, cfg)
            rep = evaluate_policy(policy, scenario, cfg.eval_episodes, 10_000 + seed, bands=[top])
            row[name] = rep[ts.l1_labels[top]].to_dict()
            if progress:
                progress(seed, name, row[name], time.perf_counter() - t0)
        rows.append(row)
    sr = {a: [r[a]["SR"] for r in rows] for a in arms}
    return {"rows": rows, "mean_sr": {a: float(np.mean(v)) for a, v in sr.items()},
            "gap": float(np.mean(sr["curriculum"]) - np.mean(sr["direct"])),
            "wins": sum(c > d for c, d in zip(sr["curriculum"], sr["direct"])),
            "seconds": time.perf_counter() - t0}
