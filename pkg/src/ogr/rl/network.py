"""Actor-critic MLPs with hand-written backpropagation."""

from __future__ import annotations

import numpy as np

HEADS = (5, 5, 3)
HIDDEN = (256, 128)


def _init_layers(rng, sizes, out_scale, dtype):
    layers = []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = out_scale if k == len(sizes) - 2 else 1.0
        W = rng.normal(0.0, scale / np.sqrt(a), size=(a, b)).astype(dtype)
        layers.append((W, np.zeros(b, dtype=dtype)))
    return layers


def mlp_forward(layers, x):
    """tanh hidden layers, linear output.  Returns (output, activations)."""
    acts = [x]
    h = x
    for k, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if k == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return h, acts


def mlp_backward(layers, acts, dout):
    grads = [None] * len(layers)
    g = dout
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        h_in = acts[k]
        grads[k] = (h_in.T @ g, g.sum(axis=0))
        if k > 0:
            g = (g @ W.T) * (1.0 - acts[k] ** 2)
    return grads


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class ActorCritic:
    """Three categorical heads (sizes ``HEADS``) plus a scalar value head.

    Actor and critic have separate trunks of identical shape.  Parameters are
    exposed as a flat ``{name: array}`` mapping for optimizers and checkpoints.
    """

    def __init__(self, obs_dim: int, hidden=HIDDEN, heads=HEADS, seed: int = 0, dtype=np.float64, zero=False):
        rng = np.random.default_rng(seed)
        self.obs_dim, self.hidden, self.heads, self.dtype = obs_dim, tuple(hidden), tuple(heads), dtype
        sizes = (obs_dim, *hidden)
        self.actor = _init_layers(rng, (*sizes, sum(heads)), 0.01, dtype)
        self.critic = _init_layers(rng, (*sizes, 1), 1.0, dtype)
        if zero:
            for layers in (self.actor, self.critic):
                for W, b in layers:
                    W[...] = 0.0
                    b[...] = 0.0
        self._split = np.cumsum(heads)[:-1]

    # parameter views ------------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for net, layers in (("actor", self.actor), ("critic", self.critic)):
            for k, (W, b) in enumerate(layers):
                out[f"{net}.W{k}"] = W
                out[f"{net}.b{k}"] = b
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for name, arr in params.items():
            self.params()[name][...] = arr

    def copy(self) -> "ActorCritic":
        other = ActorCritic.__new__(ActorCritic)
        other.__dict__.update(self.__dict__)
        other.actor = [(W.copy(), b.copy()) for W, b in self.actor]
        other.critic = [(W.copy(), b.copy()) for W, b in self.critic]
        return other

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params().values())

    # forward ----------------------------------------------------------------

    def logits(self, obs):
        out, _ = mlp_forward(self.actor, np.atleast_2d(obs).astype(self.dtype, copy=False))
        return np.split(out, self._split, axis=1)

    def forward(self, obs):
        """Per-head probabilities (list of B x k arrays) and values (B,)."""
        if not self.is_finite():
            raise NonFiniteParams("policy parameters contain non-finite values")
        x = np.atleast_2d(obs).astype(self.dtype, copy=False)
        out, _ = mlp_forward(self.actor, x)
        v, _ = mlp_forward(self.critic, x)
        probs = [np.exp(log_softmax(z)) for z in np.split(out, self._split, axis=1)]
        return probs, v[:, 0]

    def act(self, obs, rng=None, greedy=False):
        """Single observation -> (action tuple, joint log-prob, value)."""
        x = np.asarray(obs, dtype=self.dtype)[None, :]
        out, _ = mlp_forward(self.actor, x)
        v, _ = mlp_forward(self.critic, x)
        action, logp = [], 0.0
        for z in np.split(out[0], self._split):
            lp = log_softmax(z[None, :])[0]
            if greedy:
                a = int(np.argmax(lp))
            else:
                p = np.exp(lp)
                a = int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"), len(p) - 1))
            action.append(a)
            logp += float(lp[a])
        return tuple(action), logp, float(v[0, 0])

    def log_prob(self, obs, actions):
        lps = [log_softmax(z) for z in self.logits(obs)]
        actions = np.asarray(actions)
        idx = np.arange(len(actions))
        return sum(lp[idx, actions[:, h]] for h, lp in enumerate(lps))

    # loss -----------------------------------------------------------------

    def ppo_loss(self, obs, actions, old_logp, adv, returns, clip_eps, ent_coef, vf_coef, grads=True):
        """Combined PPO loss (to minimize) and its gradient.

        loss = -mean(min(r*A, clip(r, 1-eps, 1+eps)*A)) - ent_coef*mean(H) + vf_coef*mean((V-R)^2)
        """
        x = np.atleast_2d(obs).astype(self.dtype, copy=False)
        B = x.shape[0]
        idx = np.arange(B)
        out, a_acts = mlp_forward(self.actor, x)
        vout, c_acts = mlp_forward(self.critic, x)
        values = vout[:, 0]

        logp = np.zeros(B, dtype=self.dtype)
        ent = np.zeros(B, dtype=self.dtype)
        head_lp = []
        for h, z in enumerate(np.split(out, self._split, axis=1)):
            lp = log_softmax(z)
            p = np.exp(lp)
            head_lp.append((lp, p))
            logp += lp[idx, actions[:, h]]
            ent -= (p * lp).sum(axis=1)

        ratio = np.exp(logp - old_logp)
        clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
        surr1, surr2 = ratio * adv, clipped * adv
        obj = np.minimum(surr1, surr2)
        vf = (values - returns) ** 2
        loss = -obj.mean() - ent_coef * ent.mean() + vf_coef * vf.mean()
        stats = {
            "policy_loss": float(-obj.mean()),
            "value_loss": float(vf.mean()),
            "entropy": float(ent.mean()),
            "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        }
        if not grads:
            return float(loss), stats, None

        # d loss / d logp: only where the unclipped surrogate is the minimum
        active = surr1 <= surr2
        d_logp = np.where(active, -ratio * adv, 0.0) / B
        d_out = []
        for h, (lp, p) in enumerate(head_lp):
            onehot = np.zeros_like(p)
            onehot[idx, actions[:, h]] = 1.0
            g = d_logp[:, None] * (onehot - p)
            # entropy gradient wrt logits: -p * (log p + H_head)
            h_head = -(p * lp).sum(axis=1, keepdims=True)
            g += (ent_coef / B) * p * (lp + h_head)
            d_out.append(g)
        d_actor = np.concatenate(d_out, axis=1).astype(self.dtype, copy=False)
        d_value = (2.0 * vf_coef / B * (values - returns))[:, None].astype(self.dtype, copy=False)

        grads_out = {}
        for net, layers, acts, d in (("actor", self.actor, a_acts, d_actor), ("critic", self.critic, c_acts, d_value)):
            for k, (gW, gb) in enumerate(mlp_backward(layers, acts, d)):
                grads_out[f"{net}.W{k}"] = gW
                grads_out[f"{net}.b{k}"] = gb
        return float(loss), stats, grads_out


class NonFiniteParams(FloatingPointError):
    pass
