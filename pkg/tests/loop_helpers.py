"""Small fixtures for stage-machine tests: a tiny config and hand-built policies."""

import numpy as np

from ogr.loop.env import OBS_DIM
from ogr.loop.stage import StageConfig
from ogr.rl import ActorCritic, PPOConfig

TINY = StageConfig(n_stages=2, n_branches=3, n_clips=1, episodes_per_stage=4, refresh_every=2, n_test=2,
                   episodes_per_update=2, requery=1, seed=0, ppo=PPOConfig(epochs_per_update=1))


def fixed_policy(action=(2, 2, 1)) -> ActorCritic:
    """A policy whose greedy action is always ``action``."""
    net = ActorCritic(OBS_DIM, hidden=(8, 8), zero=True, dtype=np.float64)
    W, b = net.actor[-1]
    offsets = np.cumsum((0,) + net.heads[:-1])
    for off, a in zip(offsets, action):
        b[off + a] = 5.0
    return net
