from .lang import (
    LimitError,
    MissingVariable,
    ParseError,
    RewardProgram,
    Term,
    CompiledProgram,
    evaluate,
    parse_program,
    print_program,
)
from .registry import (
    AugmentationProposal,
    CheckResult,
    Entry,
    ObservationRegistry,
    ProposalStatus,
    check,
    initial_registry,
)

__all__ = [
    "AugmentationProposal", "CheckResult", "CompiledProgram", "Entry", "LimitError", "MissingVariable",
    "ObservationRegistry", "ParseError", "ProposalStatus", "RewardProgram", "Term", "check", "evaluate",
    "initial_registry", "parse_program", "print_program",
]
