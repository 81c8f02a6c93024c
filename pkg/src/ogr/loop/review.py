"""Human review of observation-augmentation proposals between stages."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..rewardlang import AugmentationProposal, Entry, ObservationRegistry, ProposalStatus
from ..sim.traffic import IMPLEMENTABLE


class UnknownProposal(KeyError):
    pass


class NotImplementable(ValueError):
    pass


@dataclass
class ReviewQueue:
    """Proposals keyed by variable name.

    Approvals are only staged here; ``apply`` folds them into the registry and
    is called by the stage machine at a stage boundary.
    """

    proposals: list[AugmentationProposal] = field(default_factory=list)
    staged: list[str] = field(default_factory=list)
    catalog: dict = field(default_factory=lambda: dict(IMPLEMENTABLE))

    def pending(self) -> list[AugmentationProposal]:
        return [p for p in self.proposals if p.status is ProposalStatus.PENDING]

    def list(self) -> list[str]:
        return sorted({p.variable for p in self.pending()})

    def submit(self, p: AugmentationProposal, registry: ObservationRegistry) -> bool:
        """Queue ``p`` unless its variable is registered or already pending/rejected."""
        if p.variable in registry or p.variable in self.staged:
            return False
        if any(q.variable == p.variable and q.status is not ProposalStatus.APPROVED for q in self.proposals):
            return False
        self.proposals.append(p)
        return True

    def _close(self, name: str, status: ProposalStatus):
        hits = [k for k, p in enumerate(self.proposals) if p.variable == name and p.status is ProposalStatus.PENDING]
        if not hits:
            raise UnknownProposal(name)
        for k in hits:
            self.proposals[k] = self.proposals[k].closed(status)

    def approve(self, name: str):
        if name not in self.catalog:
            raise NotImplementable(f"{name!r} is not computable by the simulator")
        self._close(name, ProposalStatus.APPROVED)
        self.staged.append(name)

    def reject(self, name: str):
        self._close(name, ProposalStatus.REJECTED)

    def apply(self, registry: ObservationRegistry) -> ObservationRegistry:
        """Registry with every staged approval exposed; unchanged (same version) when none."""
        new = [Entry(n, *self.catalog[n]) for n in self.staged if n not in registry]
        self.staged = []
        return registry.with_entries(new) if new else registry

    def to_dict(self) -> dict:
        return {"proposals": [p.to_dict() for p in self.proposals], "staged": list(self.staged)}

    @classmethod
    def from_dict(cls, d: dict) -> "ReviewQueue":
        return cls([AugmentationProposal.from_dict(p) for p in d["proposals"]], list(d["staged"]))
