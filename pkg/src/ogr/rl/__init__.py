from .network import HEADS, ActorCritic, NonFiniteParams
from .ppo import Adam, NonFiniteLoss, PPOConfig, PPOLearner, RolloutBuffer, clipped_objective, gae, ppo_update


def policy_forward(policy: ActorCritic, obs):
    """Per-head categorical distributions and state values for a batch."""
    return policy.forward(obs)


__all__ = [
    "HEADS", "ActorCritic", "Adam", "NonFiniteLoss", "NonFiniteParams", "PPOConfig", "PPOLearner",
    "RolloutBuffer", "clipped_objective", "gae", "policy_forward", "ppo_update",
]
