"""Run configuration: named profiles, YAML overrides and validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .loop.stage import StageConfig
from .rl.ppo import PPOConfig
from .sim.world import BUILTIN


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "overtaking"
    backend: str = "stub"
    seed: int = 0
    out: str = "runs/ogr"
    n_stages: int = 4
    n_branches: int = 5
    n_clips: int = 4
    episodes_per_stage: int = 1000
    refresh_every: int = 100
    n_test: int = 20
    episodes_per_update: int = 10
    requery: int = 3
    eval_episodes: int = 100
    ppo: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.scenario not in BUILTIN and not Path(self.scenario).is_file():
            raise ConfigError(f"scenario {self.scenario!r} is neither built in nor an existing file")
        kind, _, arg = self.backend.partition(":")
        if kind not in ("stub", "remote") or (kind == "remote" and arg):
            raise ConfigError(f"backend must be 'remote', 'stub' or 'stub:DIR', got {self.backend!r}")
        if kind == "stub" and arg and not Path(arg).is_dir():
            raise ConfigError(f"stub directory {arg!r} does not exist")
        bounds = {"n_stages": (1, 100), "n_branches": (1, 32), "n_clips": (0, 64), "episodes_per_stage": (1, 10**6),
                  "refresh_every": (1, 10**6), "n_test": (1, 10**5), "episodes_per_update": (1, 10**4),
                  "requery": (0, 10), "eval_episodes": (1, 10**5), "seed": (0, 2**64 - 1)}
        for name, (lo, hi) in bounds.items():
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not lo <= v <= hi:
                raise ConfigError(f"{name} must be an integer in [{lo}, {hi}], got {v!r}")
        try:
            self.ppo_config()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"ppo: {e}") from None
        return self

    def ppo_config(self) -> PPOConfig:
        return PPOConfig(**self.ppo)

    def stage_config(self) -> StageConfig:
        return StageConfig(
            n_stages=self.n_stages, n_branches=self.n_branches, n_clips=self.n_clips,
            episodes_per_stage=self.episodes_per_stage, refresh_every=self.refresh_every, n_test=self.n_test,
            episodes_per_update=self.episodes_per_update, requery=self.requery, seed=self.seed % 2**32,
            ppo=self.ppo_config(),
        )

    def to_dict(self) -> dict:
        return asdict(self)


PROFILES = {
    "full": RunConfig(),
    "desk": RunConfig(n_stages=5, n_branches=3, episodes_per_stage=150, refresh_every=50, n_test=10,
                      ppo={"epochs_per_update": 10}),
}


def load(path=None, profile: str = "desk", **overrides) -> RunConfig:
    """Profile defaults, then the YAML file, then explicit overrides (``None`` values are skipped)."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = PROFILES[profile]
    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {path} not found")
        data = yaml.safe_load(p.read_text()) or {}
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "ppo" in data:
        data["ppo"] = {**cfg.ppo, **(data["ppo"] or {})}
    cfg = replace(cfg, **data, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()
