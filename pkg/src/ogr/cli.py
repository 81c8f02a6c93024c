"""Command-line entry points: train, evaluate, review, replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--backend", help="remote | stub | stub:DIR")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory (memory log, checkpoints, state)")
    p.add_argument("--profile", default="desk", choices=sorted(config_mod.PROFILES))


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ogr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("train", help="run (or resume) all training stages"))
    ev = sub.add_parser("evaluate", help="per-density evaluation table for a checkpoint")
    _common(ev)
    ev.add_argument("--checkpoint", help="defaults to the last winning checkpoint in --out")
    ev.add_argument("--episodes", type=int, help="episodes per density band")
    ev.add_argument("--json", action="store_true")
    rv = sub.add_parser("review", help="list, approve or reject observation proposals")
    _common(rv)
    rv.add_argument("action", choices=["list", "approve", "reject"])
    rv.add_argument("name", nargs="?")
    rp = sub.add_parser("replay", help="re-derive all artifacts from a memory log")
    _common(rp)
    rp.add_argument("log", nargs="?", help="memory log (defaults to OUT/memory.jsonl)")
    return ap


def _config(args):
    return config_mod.load(args.config, args.profile, backend=args.backend, seed=args.seed, out=args.out)


def make_backend(spec: str):
    from .agents import RemoteBackend, StubBackend

    kind, _, arg = spec.partition(":")
    if kind == "remote":
        return RemoteBackend()
    return StubBackend(arg or None)


def cmd_train(args) -> int:
    from .loop.stage import Runner, RunState
    from .memory import Memory
    from .sim.world import get_scenario

    cfg = _config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    scenario = get_scenario(cfg.scenario)
    state_path = out / "state.json"
    rs = RunState.load(state_path) if state_path.exists() else RunState()
    if rs.stage > cfg.n_stages:
        print(f"all {cfg.n_stages} stages already complete in {out}")
        return 0
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    mem = Memory(out / "memory.jsonl", {"scenario": cfg.scenario, "l1_labels": list(scenario.l1_labels),
                                        "l2_labels": list(scenario.l2_labels), "config": cfg.to_dict()})
    runner = Runner(scenario, make_backend(cfg.backend), mem, out, cfg.stage_config())
    rs.save(state_path)
    rs = runner.run(rs, state_path, on_stage=lambda s: print(json.dumps(s, sort_keys=True), flush=True))
    print(json.dumps({"done": True, "winners": rs.winners, "registry_version": rs.registry.version,
                      "pending_proposals": rs.queue.list()}, sort_keys=True))
    return 0


def cmd_evaluate(args) -> int:
    from .loop.evaluate import evaluate_policy, format_table
    from .rl import checkpoint
    from .sim.world import get_scenario

    cfg = _config(args)
    path = args.checkpoint
    if path is None:
        winners = sorted(Path(cfg.out, "checkpoints").glob("stage*_winner.ckpt"),
                         key=lambda p: int(p.name[5:].split("_")[0]))
        if not winners:
            raise FileNotFoundError(f"no winning checkpoint under {cfg.out}")
        path = winners[-1]
    policy, _ = checkpoint.load(path)
    table = evaluate_policy(policy, get_scenario(cfg.scenario), args.episodes or cfg.eval_episodes, cfg.seed)
    if args.json:
        print(json.dumps({k: r.to_dict() for k, r in table.items()}, sort_keys=True))
    else:
        print(format_table(table))
    return 0


def cmd_review(args) -> int:
    from .loop.stage import RunState

    cfg = _config(args)
    state_path = Path(cfg.out) / "state.json"
    rs = RunState.load(state_path) if state_path.exists() else RunState()
    if args.action == "list":
        for p in rs.queue.pending():
            print(f"{p.variable}\tstage {p.stage}\tbranch {p.branch}\tterm {p.term}\t{p.justification}")
        return 0
    if not args.name:
        raise config_mod.ConfigError(f"review {args.action} needs a variable name")
    getattr(rs.queue, args.action)(args.name)
    if not state_path.parent.exists():
        state_path.parent.mkdir(parents=True)
    rs.save(state_path)
    done = {"approve": "approved", "reject": "rejected"}[args.action]
    print(f"{done} {args.name}; takes effect at stage {rs.stage}")
    return 0


def cmd_replay(args) -> int:
    from .loop.replay import replay

    log = args.log or Path(args.out or config_mod.PROFILES[args.profile].out) / "memory.jsonl"
    rep = replay(log)
    if rep.verified:
        print(f"verified: {rep.records} records, {rep.derived} re-derived artifacts")
        return 0
    for p in rep.problems:
        print(p)
    print(f"FAILED: {len(rep.problems)} problems in {rep.records} records")
    return 1


COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "review": cmd_review, "replay": cmd_replay}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    from .agents import BackendError
    from .loop.review import NotImplementable, UnknownProposal
    from .memory import StorageFailure

    try:
        return COMMANDS[args.command](args)
    except (config_mod.ConfigError, FileNotFoundError, BackendError, StorageFailure, NotImplementable) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except UnknownProposal as e:
        print(f"error: no pending proposal named {e.args[0]!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
