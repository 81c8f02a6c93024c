"""Re-derive every artifact in a memory log and compare byte for byte."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..agents import PromptBundle
from ..agents.parsing import (
    StagePlan,
    parse_best_branch,
    parse_curriculum_analysis,
    parse_plan,
    parse_reward_analysis,
    parse_reward_source,
    parse_score,
)
from ..curriculum import TaskSet, parse_curriculum
from ..memory import Kind, Memory, MemoryRecord, canonical
from ..rewardlang import AugmentationProposal, ObservationRegistry, parse_program, print_program
from ..rl.checkpoint import sha256_file
from .stage import spec_payload
from .training import TestReport


@dataclass
class ReplayReport:
    records: int = 0
    derived: int = 0
    problems: list[str] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return not self.problems


def _analysis(block_text: str):
    if "```REWARD_ANALYSIS" in block_text:
        return parse_reward_analysis(block_text)
    return parse_curriculum_analysis(block_text)


class _Replayer:
    def __init__(self, mem: Memory):
        self.mem = mem
        meta = mem.meta
        self.ts = TaskSet(tuple(meta["l1_labels"]), tuple(meta["l2_labels"])) if "l1_labels" in meta else None
        self.registry: ObservationRegistry | None = None
        self.rep = ReplayReport()

    def fail(self, rec: MemoryRecord, msg: str):
        self.rep.problems.append(f"record {rec.id} ({rec.kind.value}): {msg}")

    def response(self, rec: MemoryRecord) -> str | None:
        src = rec.derived_from
        if src is None:
            return None
        if not 1 <= src < rec.id or self.mem.get(src).kind is not Kind.DIALOGUE:
            raise ValueError(f"derived_from {src} is not an earlier dialogue")
        return json.loads(self.mem.get(src).payload)["response"]

    # canonical re-serialization of the payload alone, and re-derivation from the source dialogue
    def check(self, rec: MemoryRecord):
        k, p = rec.kind, rec.payload
        resp = self.response(rec)
        derived = None
        if k is Kind.DIALOGUE:
            d = json.loads(p)
            bundle = PromptBundle.from_dict(d["prompt"])
            if not d["response"]:
                raise ValueError("empty response")
            same = canonical({"prompt": bundle.to_dict(), "response": d["response"]})
        elif k is Kind.STAGE_PLAN:
            d = json.loads(p)
            same = canonical(StagePlan(**d).to_dict())
            if resp is not None:
                derived = canonical(parse_plan(resp, rec.stage).to_dict())
        elif k is Kind.ANALYSIS:
            same = canonical(_analysis(json.loads(p)["block"]).to_dict())
            if resp is not None:
                derived = canonical(_analysis_from_role(rec.role, resp).to_dict())
        elif k is Kind.REWARD_PROGRAM:
            same = print_program(parse_program(p))
            if resp is not None:
                derived = print_program(parse_reward_source(resp))
        elif k is Kind.CURRICULUM_SPEC:
            d = json.loads(p)
            same = canonical(spec_payload(parse_curriculum(d["block"], self.ts, d["stage"])))
            if resp is not None:
                derived = canonical(spec_payload(parse_curriculum(resp, self.ts, rec.stage)))
        elif k is Kind.SCORE:
            d = json.loads(p)
            same = canonical(d)
            if resp is not None:
                derived = canonical({"score": parse_score(resp), "clip": d["clip"]})
        elif k is Kind.SELECTION:
            d = json.loads(p)
            same = canonical(d)
            src = d["reflector_dialogue"]
            if src is not None:
                text = json.loads(self.mem.get(src).payload)["response"]
                winner = parse_best_branch(text, len(d["SR"]))
            elif d["method"] == "single":
                winner = 0
            else:
                n = len(d["SR"])
                winner = max(range(n), key=lambda i: (d["SR"][i], d["B"][i], -i))
            derived = canonical(dict(d, winner=winner))
        elif k is Kind.CLIP:
            d = json.loads(p)
            same = canonical(d)
            body = self.mem.clip_bytes(d["frames"])
            if hashlib.sha256(body).hexdigest() != d["frames"]:
                raise ValueError("clip frames do not match their hash")
            if len(json.loads(body)) != d["n_frames"] or d["n_frames"] > d["length"]:
                raise ValueError("clip frame count inconsistent")
        elif k is Kind.TEST_REPORT:
            r = TestReport.from_dict(json.loads(p))
            if abs(r.sr + r.cr + r.tor - 1.0) > 1e-9:
                raise ValueError("SR + CR + TOR != 1")
            same = canonical(r.to_dict())
        elif k is Kind.PROPOSAL:
            same = canonical(AugmentationProposal.from_dict(json.loads(p)).to_dict())
        elif k is Kind.REGISTRY:
            self.registry = ObservationRegistry.from_json(p)
            same = self.registry.to_json()
        elif k is Kind.EVALUATION:
            d = json.loads(p)
            same = canonical(d)
            if self.registry is None or d["registry_version"] != self.registry.version:
                raise ValueError("evaluation stamped with a registry version that was not current")
            if not set(d["reads"]) <= self.registry.names:
                raise ValueError("evaluation read variables outside the registry")
        elif k is Kind.CHECKPOINT:
            d = json.loads(p)
            same = canonical(d)
            path = self.mem.path.parent / "checkpoints" / d["path"]
            if d["winner"] and path.exists() and sha256_file(path) != d["sha256"]:
                raise ValueError("winning checkpoint hash mismatch")
        else:
            same = canonical(json.loads(p))
        if same != p:
            self.fail(rec, "payload is not in canonical form")
        if derived is not None:
            self.rep.derived += 1
            if derived != p:
                self.fail(rec, "re-derived artifact differs from the stored payload")
        if rec.fallback_of is not None:
            src = rec.fallback_of
            if not 1 <= src < rec.id or self.mem.get(src).payload != p:
                self.fail(rec, f"fallback copy differs from record {src}")

    def run(self) -> ReplayReport:
        for n, rec in enumerate(self.mem.records, 1):
            self.rep.records += 1
            if rec.id != n:
                self.rep.problems.append(f"id gap: expected {n}, found {rec.id}")
                continue
            try:
                self.check(rec)
            except Exception as e:  # noqa: BLE001 - every failure is a verification problem
                self.fail(rec, f"{type(e).__name__}: {e}")
        return self.rep


def _analysis_from_role(role: str | None, text: str):
    return parse_reward_analysis(text) if role == "reward_analyst" else parse_curriculum_analysis(text)


def replay(path) -> ReplayReport:
    if not Path(path).exists():
        raise FileNotFoundError(path)
    return _Replayer(Memory(path)).run()
