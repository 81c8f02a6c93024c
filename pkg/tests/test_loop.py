import json
import shutil

import numpy as np
import pytest

from ogr.agents import StubBackend
from ogr.curriculum import CurriculumSpec, hardest_task, merge
from ogr.loop.evaluate import evaluate_policy, format_table
from ogr.loop.replay import replay
from ogr.loop.review import NotImplementable, ReviewQueue, UnknownProposal
from ogr.loop.stage import BranchOutcome, Runner, RunState, fallback_choice
from ogr.loop.training import TestReport as Report
from ogr.memory import Kind, Memory
from ogr.rewardlang import AugmentationProposal, ProposalStatus, initial_registry
from ogr.sim.traffic import IMPLEMENTABLE
from ogr.sim.world import get_scenario

from loop_helpers import TINY, fixed_policy

SC = get_scenario("overtaking")
REG = initial_registry(IMPLEMENTABLE)


def outcome(i, sr, scores):
    rep = Report(sr, 1.0 - sr, 0.0, 10, 1.0, 0.0, {}, (3, 2))
    return BranchOutcome(i, "", CurriculumSpec((((0, 0), 1.0),)), "", rep, scores, 0, 0, {})


def test_fallback_prefers_sr_then_score_then_index():
    assert fallback_choice([outcome(0, 0.5, [3]), outcome(1, 0.5, [8])]) == 1
    assert fallback_choice([outcome(0, 0.5, [8]), outcome(1, 0.5, [8])]) == 0
    assert fallback_choice([outcome(0, 0.4, [10]), outcome(1, 0.6, [0])]) == 1
    assert fallback_choice([outcome(0, 0.5, [])]) == 0


def scripted(tmp_path, files: dict):
    root = tmp_path / "stub"
    for rel, text in files.items():
        (root / rel).parent.mkdir(parents=True, exist_ok=True)
        (root / rel).write_text(text)
    return StubBackend(root)


def run_one_stage(tmp_path, backend, cfg=TINY, hooks=None):
    mem = Memory(tmp_path / "run" / "memory.jsonl", {"l1_labels": list(SC.l1_labels), "l2_labels": list(SC.l2_labels)})
    runner = Runner(SC, backend, mem, tmp_path / "run", cfg, hooks)
    rs, summary = runner.run_stage(RunState())
    return runner, rs, summary, mem


def test_tied_sr_goes_to_higher_mean_score(tmp_path, monkeypatch):
    """Reflector answers out of range, so the fallback ranking decides."""
    import ogr.loop.stage as stage_mod

    be = scripted(tmp_path, {"reflector/default.txt": "BEST_BRANCH: 7\n",
                             "scorer/s1_b0.txt": "SCORE: 3\n", "scorer/s1_b1.txt": "SCORE: 8\n",
                             "scorer/s1_b2.txt": "SCORE: 8\n"})
    real = stage_mod.in_training_test

    def same_sr(policy, env, spec, n, seed, n_clips):
        rep, clips = real(policy, env, spec, n, seed, n_clips)
        return Report(0.5, 0.5, 0.0, rep.episodes, rep.mean_length, rep.mean_reward, rep.term_means,
                          rep.task), clips

    monkeypatch.setattr(stage_mod, "in_training_test", same_sr)
    _, rs, summary, mem = run_one_stage(tmp_path, be)
    assert summary["method"] == "fallback" and summary["winner"] == 1
    assert replay(mem.path).verified


def test_scripted_reflector_choice_and_scores(tmp_path):
    be = scripted(tmp_path, {"reflector/default.txt": "Looks best.\nBEST_BRANCH: 2\n",
                             "scorer/s1_b0.txt": "SCORE: 2\n", "scorer/s1_b1.txt": "SCORE: 5\n",
                             "scorer/s1_b2.txt": "SCORE: 9\n"})
    _, rs, summary, mem = run_one_stage(tmp_path, be)
    assert summary["winner"] == 2 and summary["method"] == "reflector"
    assert [b["B"] for b in summary["branches"]] == [2.0, 5.0, 9.0]
    assert rs.stage == 2 and rs.winners[-1].endswith("stage1_winner.ckpt")
    ckpts = sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir())
    assert ckpts == ["stage1_winner.ckpt"]
    rep = replay(mem.path)
    assert rep.verified, rep.problems
    assert rep.derived > 0


def test_single_branch_wins_without_reflector(tmp_path):
    from dataclasses import replace

    be = StubBackend()
    _, _, summary, mem = run_one_stage(tmp_path, be, replace(TINY, n_branches=1))
    assert summary["winner"] == 0 and summary["method"] == "single"
    assert not any(c.role.value == "reflector" for c in be.calls)


def test_unusable_generators_abort_to_one_default_branch(tmp_path):
    be = scripted(tmp_path, {"reward_generator/default.txt": "no block here\n"})
    _, _, summary, mem = run_one_stage(tmp_path, be)
    assert summary["aborted"] and len(summary["branches"]) == 1
    assert replay(mem.path).verified


def test_unusable_scores_count_as_midpoint(tmp_path):
    be = scripted(tmp_path, {"scorer/default.txt": "I cannot tell.\n"})
    _, _, summary, _ = run_one_stage(tmp_path, be)
    assert all(b["B"] == 5.0 for b in summary["branches"])


def test_replay_detects_tampering(tmp_path):
    _, _, _, mem = run_one_stage(tmp_path, StubBackend())
    lines = mem.path.read_text().splitlines()
    for k, line in enumerate(lines[1:], 1):
        d = json.loads(line)
        if d["kind"] == "Score":
            p = json.loads(d["payload"])
            p["score"] = 10 - p["score"]
            d["payload"] = json.dumps(p, sort_keys=True, separators=(",", ":"))
            lines[k] = json.dumps(d, sort_keys=True, separators=(",", ":"))
            break
    bad = tmp_path / "bad" / "memory.jsonl"
    bad.parent.mkdir()
    shutil.copytree(tmp_path / "run" / "clips", bad.parent / "clips")
    bad.write_text("\n".join(lines) + "\n")
    rep = replay(bad)
    assert not rep.verified
    assert any("re-derived" in p for p in rep.problems)


def test_replay_detects_id_gap_and_missing_log(tmp_path):
    _, _, _, mem = run_one_stage(tmp_path, StubBackend())
    lines = mem.path.read_text().splitlines()
    del lines[3]
    mem.path.write_text("\n".join(lines) + "\n")
    assert not replay(mem.path).verified
    with pytest.raises(FileNotFoundError):
        replay(tmp_path / "nope.jsonl")


def test_approval_takes_effect_only_at_the_next_stage(tmp_path):
    """Branches 0 and 2 read ttc_front; it is approved right after branch 0 trains in stage 1."""
    from dataclasses import replace

    from ogr.agents.stub import reward_source

    def approve(runner, rs, i):
        if i == 0 and rs.stage == 1:
            rs.queue.approve("ttc_front")

    be = scripted(tmp_path, {"reward_generator/s1_b0.txt": f"```REWARD\n{reward_source(2)}```\n"})
    mem = Memory(tmp_path / "run" / "memory.jsonl", {"l1_labels": list(SC.l1_labels), "l2_labels": list(SC.l2_labels)})
    runner = Runner(SC, be, mem, tmp_path / "run", replace(TINY, n_stages=2), {"after_branch": approve})
    rs = runner.run(RunState())
    regs = [json.loads(r.payload)["version"] for r in mem.select(Kind.REGISTRY)]
    assert regs == [1, 2]
    checked = 0
    for r in mem.select(Kind.EVALUATION):
        e = json.loads(r.payload)
        assert e["registry_version"] == r.stage
        if r.branch == 2 or (r.branch == 0 and r.stage == 1):
            assert ("headway" in e["suspended"]) == (r.stage == 1)
            assert ("ttc_front" in e["reads"]) == (r.stage == 2)
            checked += 1
    assert checked == 6
    assert "ttc_front" in rs.registry
    rep = replay(mem.path)
    assert rep.verified, rep.problems


def test_review_queue_lifecycle():
    q = ReviewQueue()
    p = AugmentationProposal("ttc_front", "headway", 1)
    assert q.submit(p, REG)
    assert not q.submit(p, REG)
    assert not q.submit(AugmentationProposal("speed", "x", 1), REG)
    assert q.list() == ["ttc_front"]
    with pytest.raises(UnknownProposal):
        q.approve("accel_cmd")
    with pytest.raises(NotImplementable):
        q.approve("telepathy")
    q.approve("ttc_front")
    assert q.pending() == [] and q.proposals[0].status is ProposalStatus.APPROVED
    reg2 = q.apply(REG)
    assert reg2.version == REG.version + 1 and "ttc_front" in reg2
    assert q.apply(reg2) is reg2
    assert ReviewQueue.from_dict(q.to_dict()).to_dict() == q.to_dict()


def test_rejected_variable_is_not_requeued():
    q = ReviewQueue()
    q.submit(AugmentationProposal("gap_left", "g", 1), REG)
    q.reject("gap_left")
    assert not q.submit(AugmentationProposal("gap_left", "g", 2), REG)
    assert q.apply(REG) is REG


def test_hardest_task_of_merged_specs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        specs = []
        for _ in range(int(rng.integers(1, 4))):
            ts = {(int(rng.integers(4)), int(rng.integers(3))): float(rng.integers(1, 5)) for _ in range(3)}
            specs.append(CurriculumSpec(tuple(sorted(ts.items()))))
        every = [t for s in specs for t, _ in s.tasks]
        top = max(i for i, _ in every)
        assert hardest_task(merge(specs)) == (top, max(j for i, j in every if i == top))


def test_evaluation_rows_are_consistent_and_deterministic():
    pol = fixed_policy()
    a = evaluate_policy(pol, SC, 6, seed=3)
    b = evaluate_policy(pol, SC, 6, seed=3)
    assert list(a) == list(SC.l1_labels)
    for label, r in a.items():
        assert abs(r.sr + r.cr + r.tor - 1.0) <= 1e-9
        assert r.to_dict() == b[label].to_dict()
    assert "density" in format_table(a)


@pytest.mark.parametrize("name", ["overtaking", "merging", "intersection"])
def test_goal_reaching_policy_always_succeeds_in_empty_traffic(name):
    from ogr.loop.env import DrivingEnv, run_episode
    from ogr.loop.training import EXPERT_REWARD, episode_seeds
    from ogr.rewardlang import CompiledProgram, parse_program

    sc = get_scenario(name)
    prog = parse_program(EXPERT_REWARD)
    env = DrivingEnv(sc, CompiledProgram(prog), prog.variables())
    pol = fixed_policy()
    for mode in range(len(sc.l2_labels)):
        for s in episode_seeds(4242 + mode, 25):
            assert run_episode(pol, env, (0, mode), s, greedy=True).status.name.upper() == "SUCCESS", (mode, s)
    assert evaluate_policy(pol, sc, 10, seed=1)[sc.l1_labels[0]].sr == 1.0
