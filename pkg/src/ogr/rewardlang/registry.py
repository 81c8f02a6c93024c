"""Observation registry, static checking and augmentation proposals."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum

from .lang import RewardProgram, variables

INITIAL_VARIABLES = (
    "speed", "delta_s", "dy", "dpsi", "dist_nearest_sv",
    "collision_flag", "success_flag", "timeout_flag", "step_fraction",
)


@dataclass(frozen=True)
class Entry:
    name: str
    unit: str
    description: str


@dataclass(frozen=True)
class ObservationRegistry:
    entries: tuple[Entry, ...]
    version: int = 1

    def __post_init__(self):
        names = [e.name for e in self.entries]
        if len(names) != len(set(names)):
            raise ValueError("duplicate registry names")

    @property
    def names(self) -> frozenset[str]:
        return frozenset(e.name for e in self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def with_entries(self, new: list[Entry]) -> "ObservationRegistry":
        """Registry with ``new`` appended; the version bumps once per call."""
        return ObservationRegistry(self.entries + tuple(new), self.version + 1)

    def listing(self) -> str:
        return "\n".join(f"- {e.name} [{e.unit}]: {e.description}" for e in self.entries)

    def to_json(self) -> str:
        return json.dumps({"version": self.version, "entries": [[e.name, e.unit, e.description] for e in self.entries]},
                          sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ObservationRegistry":
        d = json.loads(text)
        return cls(tuple(Entry(*e) for e in d["entries"]), int(d["version"]))


def initial_registry(catalog: dict[str, tuple[str, str]]) -> ObservationRegistry:
    """The expert-seeded registry drawn from the simulator's catalog."""
    return ObservationRegistry(tuple(Entry(n, *catalog[n]) for n in INITIAL_VARIABLES))


class ProposalStatus(str, Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class AugmentationProposal:
    variable: str
    term: str
    stage: int
    justification: str = ""
    status: ProposalStatus = ProposalStatus.PENDING
    branch: int | None = None

    def to_dict(self) -> dict:
        return {"variable": self.variable, "term": self.term, "stage": self.stage, "branch": self.branch,
                "justification": self.justification, "status": self.status.value}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentationProposal":
        return cls(d["variable"], d["term"], int(d["stage"]), d.get("justification", ""),
                   ProposalStatus(d.get("status", "Pending")), d.get("branch"))

    def closed(self, status: ProposalStatus) -> "AugmentationProposal":
        return replace(self, status=status)


@dataclass(frozen=True)
class CheckResult:
    evaluable: tuple[str, ...]
    suspended: tuple[str, ...]
    proposals: tuple[AugmentationProposal, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.proposals


def check(p: RewardProgram, reg: ObservationRegistry, stage: int = 0, branch: int | None = None) -> CheckResult:
    """Partition terms by whether every referenced variable is registered.

    Each unknown variable yields exactly one proposal, attributed to the first
    term that references it.  Unknown names never raise.
    """
    known = reg.names
    evaluable, suspended, proposals, seen = [], [], [], set()
    for t in p.terms:
        missing = sorted(variables(t.expr) - known)
        if not missing:
            evaluable.append(t.name)
            continue
        suspended.append(t.name)
        for name in missing:
            if name not in seen:
                seen.add(name)
                proposals.append(AugmentationProposal(
                    name, t.name, stage,
                    f"term {t.name!r} needs observation {name!r}, which is not in registry v{reg.version}",
                    branch=branch,
                ))
    return CheckResult(tuple(evaluable), tuple(suspended), tuple(proposals))
