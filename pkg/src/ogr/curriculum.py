"""Two-level task set, curriculum blocks and episode scheduling."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

TaskId = tuple[int, int]


class ParseFailure(ValueError):
    pass


class OutOfRange(ParseFailure):
    pass


@dataclass(frozen=True)
class TaskSet:
    l1_labels: tuple[str, ...]
    l2_labels: tuple[str, ...]

    @property
    def n_l1_max(self) -> int:
        return len(self.l1_labels) - 1

    @property
    def n_l2_max(self) -> int:
        return len(self.l2_labels) - 1

    def tasks(self) -> list[TaskId]:
        return [(i, j) for i in range(self.n_l1_max + 1) for j in range(self.n_l2_max + 1)]

    def contains(self, t: TaskId) -> bool:
        return 0 <= t[0] <= self.n_l1_max and 0 <= t[1] <= self.n_l2_max

    def label(self, t: TaskId) -> str:
        return f"{self.l1_labels[t[0]]}/{self.l2_labels[t[1]]}"

    def listing(self) -> str:
        lines = [f"level-1 (density): " + ", ".join(f"{i}={n}" for i, n in enumerate(self.l1_labels)),
                 f"level-2: " + ", ".join(f"{j}={n}" for j, n in enumerate(self.l2_labels))]
        return "\n".join(lines)

    @classmethod
    def from_scenario(cls, sc) -> "TaskSet":
        return cls(tuple(sc.l1_labels), tuple(sc.l2_labels))


@dataclass(frozen=True)
class CurriculumSpec:
    tasks: tuple[tuple[TaskId, float], ...]
    stage: int = 0

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("curriculum needs at least one task")
        if any(w < 0 or not math.isfinite(w) for _, w in self.tasks) or sum(w for _, w in self.tasks) <= 0:
            raise ValueError("curriculum weights must be non-negative with a positive sum")

    @property
    def task_ids(self) -> list[TaskId]:
        return [t for t, _ in self.tasks]


BLOCK = "CURRICULUM"
_LINE = re.compile(r"^\(\s*(-?\d{1,9})\s*,\s*(-?\d{1,9})\s*\)\s*(?:weight\s+([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))?\s*$")


def fenced_block(text: str, tag: str) -> str | None:
    m = re.search(r"```[ \t]*" + re.escape(tag) + r"[ \t]*\n(.*?)```", text, re.S)
    return m.group(1) if m else None


def parse_curriculum(text: str, ts: TaskSet, stage: int = 0) -> CurriculumSpec:
    body = fenced_block(text, BLOCK)
    if body is None:
        raise ParseFailure(f"no ```{BLOCK} block found")
    weights: dict[TaskId, float] = {}
    for n, raw in enumerate(body.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if not m:
            raise ParseFailure(f"curriculum line {n} malformed: {raw.strip()!r}")
        t = (int(m.group(1)), int(m.group(2)))
        if not ts.contains(t):
            raise OutOfRange(f"task {t} outside the task set (max {ts.n_l1_max}, {ts.n_l2_max})")
        w = float(m.group(3)) if m.group(3) is not None else 1.0
        if w < 0 or not math.isfinite(w):
            raise ParseFailure(f"curriculum line {n}: weight must be finite and non-negative")
        weights[t] = weights.get(t, 0.0) + w
    if not weights:
        raise ParseFailure("curriculum block lists no tasks")
    if sum(weights.values()) <= 0:
        raise ParseFailure("curriculum weights sum to zero")
    return CurriculumSpec(tuple(sorted(weights.items())), stage)


def print_curriculum(spec: CurriculumSpec) -> str:
    lines = "".join(f"({i}, {j}) weight {w!r}\n" for (i, j), w in sorted(spec.tasks))
    return f"```{BLOCK}\n{lines}```\n"


def episode_counts(spec: CurriculumSpec, n_episodes: int) -> dict[TaskId, int]:
    """Largest-remainder apportionment; remainder ties go to the lower task.

    Quotas are exact rationals so that equal remainders really compare equal.
    """
    weights = {t: Fraction(w) for t, w in spec.tasks}
    total = sum(weights.values())
    quotas = {t: n_episodes * w / total for t, w in weights.items()}
    counts = {t: math.floor(q) for t, q in quotas.items()}
    left = n_episodes - sum(counts.values())
    for t in sorted(quotas, key=lambda t: (counts[t] - quotas[t], t))[:left]:
        counts[t] += 1
    return counts


def schedule(spec: CurriculumSpec, n_episodes: int, seed: int) -> list[TaskId]:
    if n_episodes < 1:
        raise ValueError("n_episodes must be at least 1")
    counts = episode_counts(spec, n_episodes)
    seq = [t for t, _ in spec.tasks for _ in range(counts[t])]
    perm = np.random.default_rng(seed).permutation(len(seq))
    return [seq[k] for k in perm]


def hardest_task(spec: CurriculumSpec) -> TaskId:
    """Density dominates, then level-2 index."""
    return max(spec.task_ids)


def merge(specs: list[CurriculumSpec]) -> CurriculumSpec:
    weights: dict[TaskId, float] = {}
    for s in specs:
        for t, w in s.tasks:
            weights[t] = weights.get(t, 0.0) + w
    return CurriculumSpec(tuple(sorted(weights.items())), specs[-1].stage)


def baseline_curriculum(ts: TaskSet, density_ratio=(1, 2, 2, 5), mode_ratio=(1, 1, 3)) -> CurriculumSpec:
    """Expert curriculum: product of per-level episode ratios."""
    if len(density_ratio) != ts.n_l1_max + 1 or len(mode_ratio) != ts.n_l2_max + 1:
        raise ValueError("ratios must cover the task set")
    return CurriculumSpec(tuple(((i, j), float(a * b)) for i, a in enumerate(density_ratio)
                                for j, b in enumerate(mode_ratio) if a * b > 0))


def single_task(t: TaskId, stage: int = 0) -> CurriculumSpec:
    return CurriculumSpec(((t, 1.0),), stage)
