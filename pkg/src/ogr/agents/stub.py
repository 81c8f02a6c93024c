"""Built-in scripted replies so a full run works offline.

Replies depend only on role, stage, branch and (for the scorer) the clip
outcome, so runs against the stub are reproducible.
"""

from __future__ import annotations

import re
from pathlib import Path

from .prompts import PromptBundle, Role

BASE_REWARD = [
    "term progress weight 0.05 = delta_s",
    "term success weight 10.0 = success_flag",
    "term collision weight -10.0 = collision_flag",
    "term timeout weight -5.0 = timeout_flag",
    "term lateral weight -0.01 = abs(dy)",
]

BRANCH_EXTRA = [
    ["term heading weight -0.05 = abs(dpsi)"],
    ["term speed weight 0.01 = clip(speed / 10, 0, 1)", "term heading weight -0.05 = abs(dpsi)"],
    ["term headway weight 0.2 = -exp(-ttc_front / 2)",
     "term proximity weight 0.05 = -exp(-dist_nearest_sv / 5)"],
]

SCORES = {"Success": 8, "Timeout": 4, "Collision": 1}


def reward_source(branch: int) -> str:
    return "\n".join(BASE_REWARD + BRANCH_EXTRA[branch % len(BRANCH_EXTRA)]) + "\n"


def _task_extent(text: str) -> tuple[int, int]:
    """Largest level-1 and level-2 indices named in a task-set listing."""
    l1 = re.search(r"^level-1[^:\n]*:(.*)$", text, re.M)
    l2 = re.search(r"^level-2[^:\n]*:(.*)$", text, re.M)
    n1 = len(re.findall(r"\d+=", l1.group(1))) if l1 else 4
    n2 = len(re.findall(r"\d+=", l2.group(1))) if l2 else 3
    return max(n1 - 1, 0), max(n2 - 1, 0)


def curriculum_lines(stage: int, branch: int, n1: int, n2: int) -> list[str]:
    """Density weights shift toward the top band as stages advance; branches vary the tilt."""
    tilt = stage + branch % 3
    lines = []
    for i in range(n1 + 1):
        w_i = 1 + i * tilt
        for j in range(n2 + 1):
            w = w_i * (3 if j == n2 else 1)
            lines.append(f"({i}, {j}) weight {w}")
    return lines


def default_reply(bundle: PromptBundle) -> str:
    s, b = bundle.stage, bundle.branch if bundle.branch is not None else 0
    role = bundle.role
    if role is Role.ORCHESTRATOR:
        return (f"```PLAN\nStage {s}: keep the ego moving toward the goal while reducing contacts "
                f"with surrounding traffic.\n```\n"
                "```REWARD_OBJECTIVE\nReward forward progress and arrival, penalize collisions and stalling.\n```\n"
                "```CURRICULUM_OBJECTIVE\nShift practice toward denser traffic as success improves.\n```\n")
    if role is Role.REWARD_ANALYST:
        return ("```REWARD_ANALYSIS\n"
                "progress | forward motion along the route | dense | 0.0, 2.0\n"
                "success | reaching the goal region | sparse | 0.0, 1.0\n"
                "collision | contact or leaving the road | sparse | -1.0, 0.0\n"
                "headway | time to collision with the leader | dense | -1.0, 0.0\n"
                "```\n")
    if role is Role.CURRICULUM_ANALYST:
        verdict = "keep" if s == 1 else "revise"
        return (f"```CURRICULUM_ANALYSIS\nverdict: {verdict}\n"
                "assessment: densities should rise with the success rate\n```\n")
    if role is Role.REWARD_GENERATOR:
        return f"```REWARD\n{reward_source(b)}```\n"
    if role is Role.CURRICULUM_GENERATOR:
        n1, n2 = _task_extent(bundle.user)
        return "```CURRICULUM\n" + "\n".join(curriculum_lines(s, b, n1, n2)) + "\n```\n"
    if role is Role.SCORER:
        m = re.search(r"outcome: (\w+)", bundle.user)
        return f"SCORE: {SCORES.get(m.group(1), 5) if m else 5}\n"
    # the default reflector abstains so the fallback ranking decides
    return "All branches look comparable; no preference.\n"


def write_corpus(root, stages: int = 5, n_branches: int = 3, n1: int = 3, n2: int = 2):
    """Materialize the default replies as an editable stub directory."""
    root = Path(root)
    for role in Role:
        (root / role.value).mkdir(parents=True, exist_ok=True)
    for s in range(1, stages + 1):
        for role in (Role.ORCHESTRATOR, Role.REWARD_ANALYST, Role.CURRICULUM_ANALYST):
            (root / role.value / f"s{s}.txt").write_text(default_reply(PromptBundle(role, s, "", "")))
        for b in range(n_branches):
            (root / Role.REWARD_GENERATOR.value / f"s{s}_b{b}.txt").write_text(f"```REWARD\n{reward_source(b)}```\n")
            (root / Role.CURRICULUM_GENERATOR.value / f"s{s}_b{b}.txt").write_text(
                "```CURRICULUM\n" + "\n".join(curriculum_lines(s, b, n1, n2)) + "\n```\n")
    (root / Role.SCORER.value / "default.txt").write_text("SCORE: 5\n")
    (root / Role.REFLECTOR.value / "default.txt").write_text(default_reply(PromptBundle(Role.REFLECTOR, 1, "", "")))
    return root
