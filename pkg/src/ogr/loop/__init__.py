"""Stage machine, training driver, evaluation harness and review queue."""

from .env import OBS_DIM, DrivingEnv, EpisodeResult, run_episode
from .evaluate import evaluate_policy, format_table
from .review import NotImplementable, ReviewQueue, UnknownProposal
from .stage import BranchOutcome, Runner, RunState, StageAbort, StageConfig, fallback_choice
from .training import EXPERT_REWARD, TestReport, in_training_test, report

__all__ = [
    "BranchOutcome", "DrivingEnv", "EXPERT_REWARD", "EpisodeResult", "NotImplementable", "OBS_DIM", "ReviewQueue",
    "RunState", "Runner", "StageAbort", "StageConfig", "TestReport", "UnknownProposal", "evaluate_policy",
    "fallback_choice", "format_table", "in_training_test", "report", "run_episode",
]
