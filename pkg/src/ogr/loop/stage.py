"""The staged generate-train-test-reflect machine."""

from __future__ import annotations

import json
import math
import shutil
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..agents import BackendError, ParseFailure, Role, build_prompt, exchange, parse_response
from ..agents.parsing import AnalysisReport, ProposedTerm, StagePlan, parse_plan
from ..curriculum import (
    CurriculumSpec,
    TaskSet,
    baseline_curriculum,
    merge,
    parse_curriculum,
    print_curriculum,
    schedule,
)
from ..memory import Kind, Memory
from ..rewardlang import CompiledProgram, ObservationRegistry, check, initial_registry, parse_program, print_program
from ..rewardlang.lang import variables
from ..rl import checkpoint
from ..rl.network import ActorCritic
from ..rl.ppo import PPOConfig, PPOLearner
from ..sim.traffic import IMPLEMENTABLE
from .env import OBS_DIM, DrivingEnv, EpisodeResult
from .review import ReviewQueue
from .training import EXPERT_REWARD, TestReport, TrainLog, in_training_test, train_on_tasks

GOAL = ("Drive the ego vehicle to the goal region quickly and smoothly without colliding with "
        "surrounding traffic or leaving the road, across all traffic densities.")

DEFAULT_PLAN = StagePlan(0, "Reach the goal safely.", "Reward progress and arrival; penalize collisions.",
                         "Start with light traffic and raise density as success improves.")
DEFAULT_REWARD_ANALYSIS = AnalysisReport("reward", (
    ProposedTerm("progress", "forward motion along the route", "dense", 0.0, 2.0),
    ProposedTerm("success", "reaching the goal region", "sparse", 0.0, 1.0),
    ProposedTerm("collision", "contact or leaving the road", "sparse", -1.0, 0.0),
))
DEFAULT_CURRICULUM_ANALYSIS = AnalysisReport("curriculum", verdict="keep",
                                             assessment="no analysis available; keep the current curriculum")


class StageAbort(RuntimeError):
    pass


@dataclass(frozen=True)
class StageConfig:
    n_stages: int = 4
    n_branches: int = 5
    n_clips: int = 4
    episodes_per_stage: int = 1000
    refresh_every: int = 100
    n_test: int = 20
    episodes_per_update: int = 10
    requery: int = 3
    seed: int = 0
    clip_lines: int = 40
    goal: str = GOAL
    ppo: PPOConfig = field(default_factory=PPOConfig)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "ppo"}
        d["ppo"] = self.ppo.to_dict()
        return d


@dataclass
class BranchOutcome:
    index: int
    program: str
    curriculum: CurriculumSpec
    checkpoint: str
    report: TestReport
    scores: list[int]
    program_id: int
    curriculum_id: int
    trajectories: dict
    generation_failed: bool = False

    @property
    def bbar(self) -> float:
        return float(np.mean(self.scores)) if self.scores else 0.0


@dataclass
class RunState:
    stage: int = 1
    checkpoint: str | None = None
    winners: list[str] = field(default_factory=list)
    registry: ObservationRegistry = field(default_factory=lambda: initial_registry(IMPLEMENTABLE))
    queue: ReviewQueue = field(default_factory=ReviewQueue)
    last: dict[str, int] = field(default_factory=dict)  # slot -> memory id of the previous winning artifact
    history: list[dict] = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"stage": self.stage, "checkpoint": self.checkpoint, "winners": self.winners,
                "registry": json.loads(self.registry.to_json()), "queue": self.queue.to_dict(),
                "last": self.last, "history": self.history, "trajectories": self.trajectories}

    @classmethod
    def from_dict(cls, d: dict) -> "RunState":
        return cls(d["stage"], d["checkpoint"], list(d["winners"]),
                   ObservationRegistry.from_json(json.dumps(d["registry"])), ReviewQueue.from_dict(d["queue"]),
                   dict(d["last"]), list(d["history"]), dict(d["trajectories"]))

    def save(self, path):
        tmp = Path(path).with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "RunState":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fallback_choice(outcomes: list[BranchOutcome]) -> int:
    """Highest SR, then highest mean behavior score, then lowest index."""
    return max(range(len(outcomes)), key=lambda k: (outcomes[k].report.sr, outcomes[k].bbar, -k))


def clip_text(ep: EpisodeResult, max_lines: int = 40) -> str:
    lines = [f"outcome: {ep.status.value}", f"length: {ep.length} steps"]
    n = len(ep.frames)
    picks = sorted({round(k * (n - 1) / max(max_lines - 1, 1)) for k in range(min(max_lines, n))}) if n else []
    for k in picks:
        f = ep.frames[k]
        x, y, v, psi = f["ego"]
        near = sorted(f["svs"], key=lambda s: math.hypot(s[0] - x, s[1] - y))[:2]
        svs = " ".join(f"({s[0] - x:+.1f},{s[1] - y:+.1f},{s[2]:.1f})" for s in near) or "-"
        r = sum(f["reward"].values())
        lines.append(f"t={f['step']} ego {x:.1f} {y:.1f} {v:.1f} {psi:+.2f} | {svs} | {tuple(f['action'])} | {r:+.3f}")
    return "\n".join(lines)


def _windows(values: list[float], width: int = 25) -> list[float]:
    return [round(float(np.mean(values[k:k + width])), 4) for k in range(0, len(values), width)]


def trajectory_summary(log: TrainLog, width: int = 25) -> dict:
    eps = log.episodes
    out = {"total (mean per 25 episodes)": _windows([e.total_reward for e in eps], width)}
    for name in (eps[0].term_sums if eps else {}):
        out[name] = _windows([e.term_sums[name] for e in eps], width)
    return out


def _history_text(history: list[dict]) -> str:
    if not history:
        return "(no results yet)"
    return "\n".join(f"stage {h['stage']}: winner branch {h['winner']}, SR {h['SR']:.2f}, CR {h['CR']:.2f}, "
                     f"TOR {h['TOR']:.2f}, B {h['B']:.2f}" for h in history)


def spec_payload(spec: CurriculumSpec) -> dict:
    return {"stage": spec.stage, "block": print_curriculum(spec)}


class Runner:
    """Runs stages against one scenario, backend and memory log, writing into ``out``."""

    def __init__(self, scenario, backend, mem: Memory, out, cfg: StageConfig, hooks: dict | None = None):
        self.scenario, self.backend, self.mem, self.cfg = scenario, backend, mem, cfg
        self.out = Path(out)
        self.ts = TaskSet.from_scenario(scenario)
        self.hooks = hooks or {}
        (self.out / "checkpoints").mkdir(parents=True, exist_ok=True)

    def _hook(self, name, *args):
        if name in self.hooks:
            self.hooks[name](self, *args)

    # --- backend exchanges -------------------------------------------------

    def ask(self, role: Role, stage: int, inputs: dict, branch: int | None = None, n_branches=None):
        """Query with re-queries on unusable replies; returns (payload, dialogue id) or (None, None)."""
        bundle = build_prompt(role, stage, self.mem, {"goal": self.cfg.goal, **inputs}, branch)
        for _ in range(1 + self.cfg.requery):
            try:
                text, rid = exchange(self.backend, bundle, self.mem)
            except BackendError as e:
                bundle = bundle.requery(f"backend error: {e}")
                continue
            try:
                return parse_response(role, text, stage=stage, tasks=self.ts, n_branches=n_branches), rid
            except ParseFailure as e:
                bundle = bundle.requery(str(e))
        return None, None

    def _artifact(self, rs: RunState, slot: str, kind: Kind, stage: int, value, rid, payload_of, default,
                  branch=None, role=None):
        """Record a derived artifact, or fall back to the previous stage's one (or ``default``)."""
        if value is not None:
            return value, self.mem.append(stage, kind, payload_of(value), branch, role, derived_from=rid), False
        if slot in rs.last:
            prev = self.mem.get(rs.last[slot])
            return None, self.mem.append(stage, kind, prev.payload, branch, role, fallback_of=prev.id), True
        return default, self.mem.append(stage, kind, payload_of(default), branch, role), True

    # --- one stage -----------------------------------------------------------

    def run_stage(self, rs: RunState) -> tuple[RunState, dict]:
        cfg, s = self.cfg, rs.stage
        if s > cfg.n_stages:
            raise StageAbort(f"all {cfg.n_stages} stages already ran")
        registry = rs.queue.apply(rs.registry)
        self.mem.append(s, Kind.REGISTRY, json.loads(registry.to_json()))
        rs = replace(rs, registry=registry)

        plan, rid = self.ask(Role.ORCHESTRATOR, s, {
            "n_stages": cfg.n_stages, "registry": registry.listing(), "tasks": self.ts.listing(),
            "metrics": _history_text(rs.history)})
        plan, plan_id, _ = self._artifact(rs, "plan", Kind.STAGE_PLAN, s, plan, rid, lambda p: p.to_dict(),
                                          replace(DEFAULT_PLAN, stage=s), role=Role.ORCHESTRATOR.value)
        if plan is None:
            plan = parse_plan(self._plan_text(plan_id), s)

        prev_program = self.mem.get(rs.last["reward"]).payload if "reward" in rs.last else "(none yet)"
        prev_curr = json.loads(self.mem.get(rs.last["curriculum"]).payload)["block"] if "curriculum" in rs.last \
            else "(none yet)"
        ra, rid = self.ask(Role.REWARD_ANALYST, s, {
            "objective": plan.reward_objective, "registry": registry.listing(), "program": prev_program,
            "trajectories": rs.trajectories or "(no training yet)"})
        ra, ra_id, _ = self._artifact(rs, "reward_analysis", Kind.ANALYSIS, s, ra, rid, lambda a: a.to_dict(),
                                      DEFAULT_REWARD_ANALYSIS, role=Role.REWARD_ANALYST.value)
        ca, rid = self.ask(Role.CURRICULUM_ANALYST, s, {
            "objective": plan.curriculum_objective, "tasks": self.ts.listing(), "curriculum": prev_curr,
            "metrics": _history_text(rs.history)})
        ca, ca_id, _ = self._artifact(rs, "curriculum_analysis", Kind.ANALYSIS, s, ca, rid, lambda a: a.to_dict(),
                                      DEFAULT_CURRICULUM_ANALYSIS, role=Role.CURRICULUM_ANALYST.value)
        ra_text = self._analysis_block(ra, ra_id)
        ca_text = self._analysis_block(ca, ca_id)

        gens = []
        for i in range(cfg.n_branches):
            prog, rid_r = self.ask(Role.REWARD_GENERATOR, s, {
                "objective": plan.reward_objective, "analysis": ra_text, "registry": registry.listing(),
                "program": prev_program}, branch=i)
            spec, rid_c = self.ask(Role.CURRICULUM_GENERATOR, s, {
                "objective": plan.curriculum_objective, "analysis": ca_text, "tasks": self.ts.listing(),
                "curriculum": prev_curr, "progress": "(training not started)"}, branch=i)
            gens.append((prog, rid_r, spec, rid_c))
        aborted = all(g[0] is None or g[2] is None for g in gens)
        branches = range(1) if aborted else range(cfg.n_branches)

        seeds = np.random.SeedSequence([cfg.seed, s]).spawn(cfg.n_branches)
        outcomes = []
        for i in branches:
            prog, rid_r, spec, rid_c = gens[i]
            if aborted:
                prog = spec = None
            outcomes.append(self._branch(rs, i, prog, rid_r, spec, rid_c, plan, ca_text, seeds[i]))
            self._hook("after_branch", rs, i)

        winner, method, sel_rid = self._reflect(s, outcomes)
        w = outcomes[winner]
        winner_path = self.out / "checkpoints" / f"stage{s}_winner.ckpt"
        shutil.copyfile(w.checkpoint, winner_path)
        for o in outcomes:
            Path(o.checkpoint).unlink(missing_ok=True)
        sha = checkpoint.sha256_file(winner_path)
        self.mem.append(s, Kind.CHECKPOINT, {"path": winner_path.name, "sha256": sha, "winner": True}, branch=winner)

        summary = {
            "stage": s, "winner": winner, "method": method, "aborted": aborted,
            "registry_version": registry.version,
            "branches": [{"branch": o.index, "SR": o.report.sr, "CR": o.report.cr, "TOR": o.report.tor,
                          "B": o.bbar, "task": list(o.report.task), "generation_failed": o.generation_failed}
                         for o in outcomes],
            "pending_proposals": rs.queue.list(),
        }
        self.mem.append(s, Kind.SELECTION, {"winner": winner, "method": method, "reflector_dialogue": sel_rid,
                                            "SR": [o.report.sr for o in outcomes], "B": [o.bbar for o in outcomes]})
        self.mem.append(s, Kind.STAGE_SUMMARY, summary)
        last = dict(plan=plan_id, reward_analysis=ra_id, curriculum_analysis=ca_id, reward=w.program_id,
                    curriculum=w.curriculum_id)
        rs = replace(rs, stage=s + 1, checkpoint=str(winner_path), winners=rs.winners + [str(winner_path)],
                     last=last, trajectories=w.trajectories,
                     history=rs.history + [{"stage": s, "winner": winner, "SR": w.report.sr, "CR": w.report.cr,
                                            "TOR": w.report.tor, "B": w.bbar}])
        return rs, summary

    def _plan_text(self, rid: int) -> str:
        d = json.loads(self.mem.get(rid).payload)
        return (f"```PLAN\n{d['plan']}\n```\n```REWARD_OBJECTIVE\n{d['reward_objective']}\n```\n"
                f"```CURRICULUM_OBJECTIVE\n{d['curriculum_objective']}\n```\n")

    def _analysis_block(self, report: AnalysisReport | None, rid: int) -> str:
        if report is not None:
            return report.block()
        return json.loads(self.mem.get(rid).payload)["block"]

    # --- one branch ------------------------------------------------------------

    def _branch(self, rs: RunState, i: int, prog, rid_r, spec, rid_c, plan: StagePlan, ca_text: str,
                seed_seq) -> BranchOutcome:
        cfg, s, mem = self.cfg, rs.stage, self.mem
        failed = prog is None or spec is None
        prog, prog_id, _ = self._artifact(rs, "reward", Kind.REWARD_PROGRAM, s, prog, rid_r, print_program,
                                          parse_program(EXPERT_REWARD), branch=i, role=Role.REWARD_GENERATOR.value)
        if prog is None:
            prog = parse_program(mem.get(prog_id).payload)
        spec, spec_id, _ = self._artifact(rs, "curriculum", Kind.CURRICULUM_SPEC, s, spec, rid_c, spec_payload,
                                          replace(baseline_curriculum(self.ts), stage=s), branch=i,
                                          role=Role.CURRICULUM_GENERATOR.value)
        if spec is None:
            spec = parse_curriculum(json.loads(mem.get(spec_id).payload)["block"], self.ts, s)

        result = check(prog, rs.registry, s, i)
        for p in result.proposals:
            mem.append(s, Kind.PROPOSAL, p.to_dict(), branch=i)
            rs.queue.submit(p, rs.registry)
        compiled = CompiledProgram(prog, result.suspended)
        env = DrivingEnv(self.scenario, compiled, rs.registry.names)

        def stamp(phase):
            reads = sorted(set().union(*(variables(t.expr) for t in prog.terms if t.name in result.evaluable)))
            mem.append(s, Kind.EVALUATION, {"phase": phase, "registry_version": rs.registry.version,
                                            "evaluable": list(result.evaluable), "suspended": list(result.suspended),
                                            "reads": reads}, branch=i)

        if rs.checkpoint:
            policy, _ = checkpoint.load(rs.checkpoint)
        else:
            policy = ActorCritic(OBS_DIM, seed=cfg.seed, dtype=np.float32)
        learner = PPOLearner(policy, cfg.ppo)
        chunk_seeds = [int(x) for x in seed_seq.generate_state(64)]
        stamp("train")
        log, specs = TrainLog(), [spec]
        n_chunks = math.ceil(cfg.episodes_per_stage / cfg.refresh_every)
        for c in range(n_chunks):
            if c:
                rates = log.outcome_rates(cfg.refresh_every)
                new, rid = self.ask(Role.CURRICULUM_GENERATOR, s, {
                    "objective": plan.curriculum_objective, "analysis": ca_text, "tasks": self.ts.listing(),
                    "curriculum": print_curriculum(spec),
                    "progress": ", ".join(f"{k} {v:.2f}" for k, v in rates.items())}, branch=i)
                if new is not None:
                    spec, spec_id = new, mem.append(s, Kind.CURRICULUM_SPEC, spec_payload(new), i,
                                                    Role.CURRICULUM_GENERATOR.value, derived_from=rid)
                else:
                    spec_id = mem.append(s, Kind.CURRICULUM_SPEC, mem.get(spec_id).payload, i,
                                         Role.CURRICULUM_GENERATOR.value, fallback_of=spec_id)
                specs.append(spec)
            n = min(cfg.refresh_every, cfg.episodes_per_stage - c * cfg.refresh_every)
            tasks = schedule(spec, n, chunk_seeds[2 * c % 64])
            train_on_tasks(learner, env, tasks, chunk_seeds[(2 * c + 1) % 64], cfg.episodes_per_update, log)

        stamp("test")
        report, clips = in_training_test(policy, env, merge(specs), cfg.n_test, chunk_seeds[-1], cfg.n_clips)
        mem.append(s, Kind.TEST_REPORT, report.to_dict(), branch=i)
        scores = []
        for k, ep in enumerate(clips):
            digest = mem.put_clip(ep.frames)
            clip_id = mem.append(s, Kind.CLIP, {"branch": i, "episode": ep.seed, "outcome": ep.status.value,
                                               "length": ep.length, "n_frames": len(ep.frames), "frames": digest},
                                 branch=i)
            b, rid = self.ask(Role.SCORER, s, {"branch": i, "clip": clip_text(ep, cfg.clip_lines)}, branch=i)
            # an unusable scorer reply counts as the scale midpoint
            mem.append(s, Kind.SCORE, {"score": 5 if b is None else b, "clip": clip_id}, branch=i,
                       role=Role.SCORER.value, derived_from=rid)
            scores.append(5 if b is None else b)

        path = self.out / "checkpoints" / f"stage{s}_branch{i}.ckpt"
        sha = checkpoint.save(policy, path, cfg.to_dict(), {"stage": s, "branch": i})
        mem.append(s, Kind.CHECKPOINT, {"path": path.name, "sha256": sha, "winner": False}, branch=i)
        return BranchOutcome(i, print_program(prog), spec, str(path), report, scores, prog_id, spec_id,
                             trajectory_summary(log), failed)

    def _reflect(self, s: int, outcomes: list[BranchOutcome]) -> tuple[int, str, int | None]:
        if len(outcomes) == 1:
            return 0, "single", None
        lines = [f"branch {o.index}: SR {o.report.sr:.3f}, CR {o.report.cr:.3f}, TOR {o.report.tor:.3f}, "
                 f"B {o.bbar:.2f}, tested on task {o.report.task}" for o in outcomes]
        i, rid = self.ask(Role.REFLECTOR, s, {"branches": "\n".join(lines), "last_index": len(outcomes) - 1},
                          n_branches=len(outcomes))
        if i is None:
            return fallback_choice(outcomes), "fallback", None
        return i, "reflector", rid

    def run(self, rs: RunState, state_path=None, on_stage=None) -> RunState:
        while rs.stage <= self.cfg.n_stages:
            rs, summary = self.run_stage(rs)
            if state_path is not None:
                rs.save(state_path)
            if on_stage is not None:
                on_stage(summary)
        return rs
