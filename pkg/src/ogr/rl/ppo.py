"""Rollout buffer, advantage estimation, and clipped-objective updates."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .network import ActorCritic


@dataclass(frozen=True)
class PPOConfig:
    gamma: float = 0.99
    clip_eps: float = 0.2
    lr_actor: float = 5e-4
    lr_critic: float = 1e-3
    epochs_per_update: int = 50
    gae_lambda: float = 0.95
    minibatch: int = 64
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def clipped_objective(ratio, adv, eps):
    """Per-sample clipped surrogate min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates and returns.

    ``values[t]`` is V(s_t); ``last_value`` bootstraps the step after the final
    record unless that record is terminal.  A done flag cuts the recursion.
    """
    T = len(rewards)
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - float(dones[t])
        next_v = last_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * nonterminal * next_v - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + np.asarray(values, dtype=float)


@dataclass
class RolloutBuffer:
    obs: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def add(self, obs, action, logp, reward, value, done):
        self.obs.append(obs)
        self.actions.append(action)
        self.logp.append(logp)
        self.rewards.append(reward)
        self.values.append(value)
        self.dones.append(done)

    def __len__(self):
        return len(self.rewards)

    def finish(self, gamma, lam, last_value=0.0):
        self.advantages, self.returns = gae(self.rewards, self.values, self.dones, last_value, gamma, lam)

    def clear(self):
        self.__init__()


class Adam:
    """Moment-estimate optimizer over a dict of parameter arrays, in place."""

    def __init__(self, params: dict, lrs: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lrs, self.beta1, self.beta2, self.eps = lrs, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            lr = self.lrs[k.split(".", 1)[0]]
            params[k] -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state(self):
        return ({k: a.copy() for k, a in self.m.items()}, {k: a.copy() for k, a in self.v.items()}, self.t)

    def restore(self, state):
        m, v, self.t = state
        for k in m:
            self.m[k][...] = m[k]
            self.v[k][...] = v[k]


class NonFiniteLoss(FloatingPointError):
    pass


def _clip_norm(grads: dict, prefix: str, max_norm: float):
    keys = [k for k in grads if k.startswith(prefix)]
    norm = np.sqrt(sum(float(np.sum(grads[k] ** 2)) for k in keys))
    if norm > max_norm > 0:
        for k in keys:
            grads[k] = grads[k] * (max_norm / norm)


class PPOLearner:
    def __init__(self, policy: ActorCritic, cfg: PPOConfig = PPOConfig()):
        self.policy, self.cfg = policy, cfg
        self.opt = Adam(policy.params(), {"actor": cfg.lr_actor, "critic": cfg.lr_critic},
                        cfg.beta1, cfg.beta2, cfg.adam_eps)

    def update(self, buf: RolloutBuffer, rng: np.random.Generator) -> dict:
        """Several epochs of shuffled minibatch steps on one buffer, then clear it.

        A non-finite loss restores the parameters and optimizer state held
        before the update and raises ``NonFiniteLoss``.
        """
        cfg = self.cfg
        if len(buf) == 0:
            raise ValueError("empty rollout buffer")
        if buf.advantages is None:
            buf.finish(cfg.gamma, cfg.gae_lambda)
        obs = np.asarray(buf.obs, dtype=self.policy.dtype)
        actions = np.asarray(buf.actions, dtype=np.int64)
        old_logp = np.asarray(buf.logp, dtype=float)
        adv = buf.advantages
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        returns = buf.returns
        params = self.policy.params()
        snapshot = ({k: v.copy() for k, v in params.items()}, self.opt.state())

        n = len(buf)
        totals = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0}
        count = 0
        for _ in range(cfg.epochs_per_update):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                mb = perm[start:start + cfg.minibatch]
                loss, stats, grads = self.policy.ppo_loss(
                    obs[mb], actions[mb], old_logp[mb], adv[mb], returns[mb],
                    cfg.clip_eps, cfg.ent_coef, cfg.vf_coef)
                if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                    self.policy.set_params(snapshot[0])
                    self.opt.restore(snapshot[1])
                    buf.clear()
                    raise NonFiniteLoss("non-finite PPO loss; update aborted")
                _clip_norm(grads, "actor", cfg.max_grad_norm)
                _clip_norm(grads, "critic", cfg.max_grad_norm)
                self.opt.step(params, grads)
                for k in totals:
                    totals[k] += stats[k]
                count += 1
        buf.clear()
        return {k: v / max(count, 1) for k, v in totals.items()}


def ppo_update(policy: ActorCritic, buf: RolloutBuffer, cfg: PPOConfig, rng=None, learner=None):
    """Functional form: returns (updated policy copy, loss statistics)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if learner is None:
        learner = PPOLearner(policy.copy(), cfg)
    stats = learner.update(buf, rng)
    return learner.policy, stats
