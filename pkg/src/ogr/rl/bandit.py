"""Stateless contextual bandit over the 5x5x3 action space, for sanity checks."""

from __future__ import annotations

import numpy as np

from .network import HEADS, ActorCritic
from .ppo import PPOConfig, PPOLearner, RolloutBuffer


class TripleBandit:
    """Random contexts; reward 1 only for one fixed action triple."""

    def __init__(self, seed: int, obs_dim: int = 20, context_scale: float = 0.3):
        self.rng = np.random.default_rng(seed)
        self.target = tuple(int(self.rng.integers(k)) for k in HEADS)
        self.obs_dim, self.scale = obs_dim, context_scale
        self.eval_contexts = self.contexts(200)

    def contexts(self, n):
        return self.rng.normal(0.0, self.scale, (n, self.obs_dim))

    def target_probability(self, policy: ActorCritic) -> float:
        probs, _ = policy.forward(self.eval_contexts)
        p = np.ones(len(self.eval_contexts))
        for h, a in enumerate(self.target):
            p *= probs[h][:, a]
        return float(p.mean())

    def greedy_accuracy(self, policy: ActorCritic) -> float:
        probs, _ = policy.forward(self.eval_contexts)
        greedy = np.stack([q.argmax(axis=1) for q in probs], axis=1)
        return float(np.mean(np.all(greedy == np.array(self.target), axis=1)))


def _sample(q, rng):
    c = q.cumsum(axis=1)
    c[:, -1] = 1.0
    return (c > rng.random((len(q), 1))).argmax(axis=1)


def train_bandit(seed: int, updates: int = 200, batch: int = 512, cfg: PPOConfig = PPOConfig(),
                 stop_at: float | None = 0.95, dtype=np.float32):
    """Run PPO on a fresh bandit.  Returns (target-probability history, greedy accuracy, updates used)."""
    bandit = TripleBandit(seed)
    policy = ActorCritic(bandit.obs_dim, seed=seed, dtype=dtype)
    learner = PPOLearner(policy, cfg)
    rng = np.random.default_rng(seed + 1)
    history, acc = [], 0.0
    for u in range(updates):
        obs = bandit.contexts(batch).astype(dtype)
        probs, values = policy.forward(obs)
        acts = np.stack([_sample(q, rng) for q in probs], axis=1)
        logp = sum(np.log(q[np.arange(batch), acts[:, h]]) for h, q in enumerate(probs))
        rewards = np.all(acts == np.array(bandit.target), axis=1).astype(float)
        buf = RolloutBuffer()
        for i in range(batch):
            buf.add(obs[i], acts[i], float(logp[i]), float(rewards[i]), float(values[i]), True)
        learner.update(buf, rng)
        history.append(bandit.target_probability(policy))
        acc = bandit.greedy_accuracy(policy)
        if stop_at is not None and acc >= stop_at:
            return history, acc, u + 1
    return history, acc, updates
