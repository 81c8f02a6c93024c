"""Structured payloads extracted from backend replies.

Every parser either returns its payload or raises ``ParseFailure``; arbitrary
text never escapes as another exception type.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from ..curriculum import ParseFailure, TaskSet, fenced_block, parse_curriculum
from ..rewardlang import ParseError, parse_program
from .prompts import Role

SCORE_MIN, SCORE_MAX = 0, 10

_SCORE = re.compile(r"^[ \t]*SCORE:[ \t]*(-?\d{1,9})[ \t]*$", re.M)
_BEST = re.compile(r"^[ \t]*BEST_BRANCH:[ \t]*(-?\d{1,9})[ \t]*$", re.M)
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
VERDICTS = ("keep", "revise", "replace")
TERM_TYPES = ("dense", "sparse")


@dataclass(frozen=True)
class StagePlan:
    stage: int
    plan: str
    reward_objective: str
    curriculum_objective: str

    def to_dict(self) -> dict:
        return {"stage": self.stage, "plan": self.plan, "reward_objective": self.reward_objective,
                "curriculum_objective": self.curriculum_objective}


@dataclass(frozen=True)
class ProposedTerm:
    name: str
    meaning: str
    kind: str
    lo: float
    hi: float


@dataclass(frozen=True)
class AnalysisReport:
    """Reward analyses carry proposed terms; curriculum analyses carry a verdict and assessment."""

    kind: str
    terms: tuple[ProposedTerm, ...] = ()
    verdict: str = ""
    assessment: str = ""

    def __post_init__(self):
        if self.kind == "reward" and not self.terms:
            raise ValueError("a reward analysis lists at least one term")
        if self.kind == "curriculum" and self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    def block(self) -> str:
        """Canonical fenced block; parsing it gives back an equal report."""
        if self.kind == "reward":
            body = "".join(f"{t.name} | {t.meaning} | {t.kind} | {t.lo!r}, {t.hi!r}\n" for t in self.terms)
            return f"```REWARD_ANALYSIS\n{body}```\n"
        return f"```CURRICULUM_ANALYSIS\nverdict: {self.verdict}\nassessment: {self.assessment}\n```\n"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "block": self.block()}


def _block(text: str, tag: str) -> str:
    body = fenced_block(text, tag)
    if body is None:
        raise ParseFailure(f"missing fenced {tag} block")
    return body


def parse_plan(text: str, stage: int = 0) -> StagePlan:
    g_r = _block(text, "REWARD_OBJECTIVE").strip()
    g_c = _block(text, "CURRICULUM_OBJECTIVE").strip()
    if not g_r or not g_c:
        raise ParseFailure("empty stage objective")
    plan = fenced_block(text, "PLAN")
    return StagePlan(stage, (plan if plan is not None else text).strip(), g_r, g_c)


def _one_line(s: str) -> str:
    return " ".join(s.split())


def parse_reward_analysis(text: str) -> AnalysisReport:
    terms = []
    for line in _block(text, "REWARD_ANALYSIS").splitlines():
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 4:
            raise ParseFailure(f"analysis line needs 4 '|' separated fields: {line!r}")
        name, meaning, kind, rng = fields
        if not _IDENT.match(name):
            raise ParseFailure(f"bad term name {name!r}")
        kind = kind.lower()
        if kind not in TERM_TYPES:
            raise ParseFailure(f"term type must be dense or sparse, got {kind!r}")
        try:
            lo, hi = (float(x) for x in rng.split(","))
        except ValueError:
            raise ParseFailure(f"bad value range {rng!r}") from None
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ParseFailure(f"bad value range {rng!r}")
        terms.append(ProposedTerm(name, _one_line(meaning), kind, lo, hi))
    if not terms:
        raise ParseFailure("reward analysis lists no terms")
    return AnalysisReport("reward", tuple(terms))


def parse_curriculum_analysis(text: str) -> AnalysisReport:
    verdict, assessment = None, []
    for line in _block(text, "CURRICULUM_ANALYSIS").splitlines():
        key, sep, rest = line.partition(":")
        key = key.strip().lower()
        if sep and key == "verdict" and verdict is None:
            verdict = rest.strip().lower()
        elif sep and key == "assessment":
            assessment.append(rest)
        elif assessment and line.strip():
            assessment.append(line)
    if verdict not in VERDICTS:
        raise ParseFailure(f"verdict must be one of {VERDICTS}")
    return AnalysisReport("curriculum", verdict=verdict, assessment=_one_line(" ".join(assessment)))


def parse_reward_source(text: str):
    """The REWARD block, parsed into a program (DSL errors become ParseFailure)."""
    src = _block(text, "REWARD")
    try:
        return parse_program(src)
    except ParseError as e:
        raise ParseFailure(f"reward program: {e}") from None
    except RecursionError:
        raise ParseFailure("reward program nests too deeply") from None


def parse_score(text: str) -> int:
    m = _SCORE.search(text)
    if m is None:
        raise ParseFailure("missing 'SCORE: n' line")
    b = int(m.group(1))
    if not SCORE_MIN <= b <= SCORE_MAX:
        raise ParseFailure(f"score {b} outside {SCORE_MIN}..{SCORE_MAX}")
    return b


def parse_best_branch(text: str, n_branches: int | None = None) -> int:
    m = _BEST.search(text)
    if m is None:
        raise ParseFailure("missing 'BEST_BRANCH: n' line")
    i = int(m.group(1))
    if i < 0 or (n_branches is not None and i >= n_branches):
        raise ParseFailure(f"branch index {i} out of range")
    return i


def parse_response(role: Role, text: str, *, stage: int = 0, tasks: TaskSet | None = None,
                   n_branches: int | None = None):
    """Role-specific payload from a reply; raises ParseFailure on anything unusable."""
    role = Role(role)
    if not isinstance(text, str) or not text.strip():
        raise ParseFailure("empty reply")
    if role is Role.ORCHESTRATOR:
        return parse_plan(text, stage)
    if role is Role.REWARD_ANALYST:
        return parse_reward_analysis(text)
    if role is Role.CURRICULUM_ANALYST:
        return parse_curriculum_analysis(text)
    if role is Role.REWARD_GENERATOR:
        return parse_reward_source(text)
    if role is Role.CURRICULUM_GENERATOR:
        if tasks is None:
            raise ValueError("curriculum replies need the task set")
        return parse_curriculum(text, tasks, stage)
    if role is Role.SCORER:
        return parse_score(text)
    return parse_best_branch(text, n_branches)
