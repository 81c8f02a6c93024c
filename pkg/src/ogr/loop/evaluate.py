"""Per-density evaluation of a trained policy."""

from __future__ import annotations

import numpy as np

from ..rewardlang import CompiledProgram, parse_program
from ..rl.network import ActorCritic
from .env import DrivingEnv, run_episode
from .training import EXPERT_REWARD, TestReport, episode_seeds, report


def evaluate_policy(policy: ActorCritic, scenario, n_per_density: int, seed: int, reward_source: str = EXPERT_REWARD,
                    bands=None) -> dict[str, TestReport]:
    """Greedy rollouts per density band; the level-2 index is drawn uniformly per episode.

    ``bands`` restricts the table to some level-1 indices.  The reward program
    only feeds the per-term means; it never affects actions.
    """
    prog = parse_program(reward_source)
    env = DrivingEnv(scenario, CompiledProgram(prog), prog.variables())
    n_l2 = len(scenario.l2_labels)
    table = {}
    for i, label in enumerate(scenario.l1_labels):
        if bands is not None and i not in bands:
            continue
        rng = np.random.default_rng([seed, i])
        modes = rng.integers(0, n_l2, size=n_per_density)
        seeds = episode_seeds(seed * 1000 + i, n_per_density)
        results = [run_episode(policy, env, (i, int(j)), s, greedy=True) for j, s in zip(modes, seeds)]
        table[label] = report(results)
    return table


def format_table(table: dict[str, TestReport]) -> str:
    lines = [f"{'density':<10}{'SR':>8}{'CR':>8}{'TOR':>8}{'n':>6}"]
    for label, r in table.items():
        lines.append(f"{label:<10}{r.sr:>8.3f}{r.cr:>8.3f}{r.tor:>8.3f}{r.episodes:>6d}")
    return "\n".join(lines)
