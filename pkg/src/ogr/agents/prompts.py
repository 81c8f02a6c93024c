"""Roles, prompt templates and deterministic prompt assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from string import Template

TEMPLATE_DIR = Path(__file__).with_name("templates")


class Role(str, Enum):
    ORCHESTRATOR = "orchestrator"
    REWARD_ANALYST = "reward_analyst"
    CURRICULUM_ANALYST = "curriculum_analyst"
    REWARD_GENERATOR = "reward_generator"
    CURRICULUM_GENERATOR = "curriculum_generator"
    SCORER = "scorer"
    REFLECTOR = "reflector"


SYSTEM = {
    Role.ORCHESTRATOR: "You plan training objectives for a staged driving-policy training run.",
    Role.REWARD_ANALYST: "You analyze reward signals and propose reward terms.",
    Role.CURRICULUM_ANALYST: "You analyze training curricula against observed outcomes.",
    Role.REWARD_GENERATOR: "You write executable reward programs in a small expression language.",
    Role.CURRICULUM_GENERATOR: "You write curricula over a two-level task set.",
    Role.SCORER: "You rate recorded driving behavior on a 0-10 scale.",
    Role.REFLECTOR: "You select the best training branch from test results and behavior scores.",
}

# inputs each role's template needs besides goal/stage/history
REQUIRED = {
    Role.ORCHESTRATOR: ("n_stages", "registry", "tasks", "metrics"),
    Role.REWARD_ANALYST: ("objective", "registry", "program", "trajectories"),
    Role.CURRICULUM_ANALYST: ("objective", "tasks", "curriculum", "metrics"),
    Role.REWARD_GENERATOR: ("objective", "analysis", "registry", "program"),
    Role.CURRICULUM_GENERATOR: ("objective", "analysis", "tasks", "curriculum", "progress"),
    Role.SCORER: ("branch", "clip"),
    Role.REFLECTOR: ("branches", "last_index"),
}


class MissingContext(KeyError):
    def __init__(self, role: Role, name: str):
        super().__init__(f"{role.value} prompt needs input {name!r}")
        self.role, self.name = role, name


_templates: dict[Role, Template] = {}


def template(role: Role) -> Template:
    if role not in _templates:
        _templates[role] = Template((TEMPLATE_DIR / f"{role.value}.txt").read_text(encoding="utf-8"))
    return _templates[role]


@dataclass(frozen=True)
class PromptBundle:
    role: Role
    stage: int
    system: str
    user: str
    attachments: tuple[str, ...] = ()
    branch: int | None = None

    def to_dict(self) -> dict:
        return {"role": self.role.value, "stage": self.stage, "branch": self.branch, "system": self.system,
                "user": self.user, "attachments": list(self.attachments)}

    @classmethod
    def from_dict(cls, d: dict) -> "PromptBundle":
        return cls(Role(d["role"]), d["stage"], d["system"], d["user"], tuple(d["attachments"]), d["branch"])

    def requery(self, error: str) -> "PromptBundle":
        """The same request with a note about the previous unparseable reply."""
        note = f"\n\nYour previous reply could not be used: {error}\nReply again using exactly the requested format."
        return PromptBundle(self.role, self.stage, self.system, self.user + note, self.attachments, self.branch)


def _history_text(mem, role: Role, stage: int) -> str:
    if stage < 2 or mem is None:
        return ""
    recs = mem.history(role, stage)
    if not recs:
        return ""
    # replies only: the earlier requests already embed their own history
    parts = ["Dialogue from the previous stage:"]
    for r in recs:
        d = json.loads(r.payload)
        parts.append(f"--- your reply (branch {r.branch}) ---\n{d['response']}")
    return "\n".join(parts) + "\n"


def build_prompt(role: Role, stage: int, mem, inputs: dict, branch: int | None = None) -> PromptBundle:
    """Fill the role's template.  ``inputs`` must carry ``goal`` and the role's required fields.

    Stage-1 bundles never carry attachments; later stages embed the role's
    dialogue from the previous stage.
    """
    role = Role(role)
    if stage < 1:
        raise ValueError("stage numbering starts at 1")
    for name in ("goal",) + REQUIRED[role]:
        if name not in inputs:
            raise MissingContext(role, name)
    values = {k: _text(v) for k, v in inputs.items() if k != "attachments"}
    values.update(stage=str(stage), history=_history_text(mem, role, stage))
    user = template(role).substitute(values)
    attachments = () if stage == 1 else tuple(inputs.get("attachments", ()))
    return PromptBundle(role, stage, SYSTEM[role], user, attachments, branch)


def _text(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, dict):
        return "\n".join(f"{k}: {_text(x)}" for k, x in v.items()) or "(none)"
    if isinstance(v, (list, tuple)):
        return "\n".join(_text(x) for x in v) or "(none)"
    return str(v)
