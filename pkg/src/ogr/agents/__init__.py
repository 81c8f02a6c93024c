"""Prompt assembly, backend calls and reply parsing for the agent roles."""

from .backends import (
    AttachmentLimit,
    BackendError,
    BackendTimeout,
    RemoteBackend,
    StubBackend,
    TransportError,
    exchange,
    invoke,
)
from .parsing import AnalysisReport, ParseFailure, ProposedTerm, StagePlan, parse_response
from .prompts import MissingContext, PromptBundle, Role, build_prompt

__all__ = [
    "AnalysisReport", "AttachmentLimit", "BackendError", "BackendTimeout", "MissingContext", "ParseFailure",
    "PromptBundle", "ProposedTerm", "RemoteBackend", "Role", "StagePlan", "StubBackend", "TransportError",
    "build_prompt", "exchange", "invoke", "parse_response",
]
