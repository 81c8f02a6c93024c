"""Policy training over a scheduled task sequence, and greedy testing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..curriculum import CurriculumSpec, hardest_task
from ..rl.network import ActorCritic
from ..rl.ppo import NonFiniteLoss, PPOLearner, RolloutBuffer
from ..sim.traffic import Status
from .env import DrivingEnv, EpisodeResult, run_episode

EXPERT_REWARD = """\
term progress weight 0.05 = delta_s
term success weight 10.0 = success_flag
term collision weight -10.0 = collision_flag
term timeout weight -5.0 = timeout_flag
term lateral weight -0.01 = abs(dy)
term heading weight -0.05 = abs(dpsi)
"""


@dataclass
class TrainLog:
    episodes: list[EpisodeResult] = field(default_factory=list)
    updates: list[dict] = field(default_factory=list)
    aborted_updates: int = 0

    def outcome_rates(self, last: int | None = None) -> dict[str, float]:
        eps = self.episodes[-last:] if last else self.episodes
        n = max(len(eps), 1)
        return {s.value: sum(e.status is s for e in eps) / n for s in (Status.SUCCESS, Status.COLLISION, Status.TIMEOUT)}


def episode_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31 - 1, size=n)]


def train_on_tasks(learner: PPOLearner, env: DrivingEnv, tasks, seed: int, episodes_per_update: int,
                   log: TrainLog | None = None) -> TrainLog:
    """Roll out one episode per scheduled task, updating every ``episodes_per_update`` episodes."""
    log = log if log is not None else TrainLog()
    rng = np.random.default_rng(seed)
    seeds = episode_seeds(seed + 1, len(tasks))
    buf = RolloutBuffer()
    for k, (task, s) in enumerate(zip(tasks, seeds)):
        log.episodes.append(run_episode(learner.policy, env, task, s, rng, buffer=buf))
        if (k + 1) % episodes_per_update == 0 or k == len(tasks) - 1:
            try:
                log.updates.append(learner.update(buf, rng))
            except NonFiniteLoss:
                log.aborted_updates += 1
    return log


@dataclass
class TestReport:
    sr: float
    cr: float
    tor: float
    episodes: int
    mean_length: float
    mean_reward: float
    term_means: dict[str, float]
    task: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        return {"SR": self.sr, "CR": self.cr, "TOR": self.tor, "episodes": self.episodes,
                "mean_length": self.mean_length, "mean_reward": self.mean_reward,
                "term_means": self.term_means, "task": list(self.task) if self.task else None}

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        return cls(d["SR"], d["CR"], d["TOR"], d["episodes"], d["mean_length"], d["mean_reward"],
                   d["term_means"], tuple(d["task"]) if d.get("task") else None)


def report(results: list[EpisodeResult], task=None) -> TestReport:
    n = len(results)
    counts = {s: sum(r.status is s for r in results) for s in (Status.SUCCESS, Status.COLLISION, Status.TIMEOUT)}
    if sum(counts.values()) != n:
        raise RuntimeError("episode ended without a terminal status")
    names = list(results[0].term_sums) if results else []
    return TestReport(
        sr=counts[Status.SUCCESS] / n, cr=counts[Status.COLLISION] / n, tor=counts[Status.TIMEOUT] / n, episodes=n,
        mean_length=float(np.mean([r.length for r in results])),
        mean_reward=float(np.mean([r.total_reward for r in results])),
        term_means={k: float(np.mean([r.term_sums[k] for r in results])) for k in names},
        task=tuple(task) if task else None,
    )


def greedy_test(policy: ActorCritic, env: DrivingEnv, task, n: int, seed: int, record=False) -> list[EpisodeResult]:
    return [run_episode(policy, env, task, s, greedy=True, record=record) for s in episode_seeds(seed, n)]


def in_training_test(policy: ActorCritic, env: DrivingEnv, spec: CurriculumSpec, n_test: int, seed: int,
                     n_clips: int):
    """Greedy test on the hardest task of ``spec``; returns (report, clip episodes)."""
    if n_test < 1:
        raise ValueError("n_test must be at least 1")
    task = hardest_task(spec)
    results = greedy_test(policy, env, task, n_test, seed, record=True)
    rng = np.random.default_rng(seed)
    if n_test <= n_clips:
        picks = list(range(n_test))
    else:
        picks = sorted(int(i) for i in rng.choice(n_test, size=n_clips, replace=False))
    return report(results, task), [results[i] for i in picks]
