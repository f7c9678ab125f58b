"""Experiment configuration files.

A config is a YAML mapping with a versioned header. Every section is checked
for unknown keys; optional keys fall back to the defaults listed here::

    format: lvrep-experiment
    version: 1
    fixture: {name: flip, params: {eta: 1.0, horizon: 2}}   # or {file: path.yaml}
    agent:
      L: 1
      m: 2                       # defaults to the fixture's state count
      K: 50
      eval_episodes: 1
      track_model_tv: false
      fit: {max_iters: 200, tol: 1.0e-7, floor_prob: 1.0e-6}
      bonus: {truncate: true, truncation_cap: 2.0}
      schedule: {c_alpha: 1.0, c_lambda: 1.0}
    seeds: [0, 1, 2]
    variants: [bonusOn, bonusOff, uniformBaseline]
    final_eval_episodes: 1000
    workers: 1
    record_wall_clock: false
    output_dir: null
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..agent import AgentConfig
from ..errors import ConfigError
from ..exploration import BonusConfig, ScheduleConfig
from ..latent import FitConfig
from ..pomdp import TabularPomdp, load_pomdp, make_fixture
from ..pomdp.io import check_header

EXPERIMENT_FORMAT = "lvrep-experiment"
EXPERIMENT_VERSION = 1
VARIANTS = ("bonusOn", "bonusOff", "uniformBaseline")

_TOP_KEYS = {"format", "version", "fixture", "agent", "seeds", "variants", "final_eval_episodes",
             "workers", "record_wall_clock", "output_dir"}
_AGENT_KEYS = {"L", "m", "K", "eval_episodes", "track_model_tv", "fit", "bonus", "schedule"}
_FIT_KEYS = {"max_iters", "tol", "floor_prob"}
_BONUS_KEYS = {"truncate", "truncation_cap"}
_SCHEDULE_KEYS = {"c_alpha", "c_lambda"}


@dataclass
class FixtureSpec:
    name: str | None = None
    params: dict[str, Any] = field(default_factory=dict)
    file: str | None = None

    def build(self, base_dir: Path | None = None) -> TabularPomdp:
        if self.file is not None:
            path = Path(self.file)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return load_pomdp(path)
        try:
            return make_fixture(self.name, **dict(self.params))
        except KeyError as exc:
            raise ConfigError(f"fixture.name: {exc.args[0]}") from exc
        except TypeError as exc:
            raise ConfigError(f"fixture.params: {exc}") from exc


@dataclass
class ExperimentConfig:
    fixture: FixtureSpec
    agent: AgentConfig
    seeds: list[int]
    variants: list[str]
    final_eval_episodes: int = 1000
    workers: int = 1
    record_wall_clock: bool = False
    output_dir: str | None = None
    raw: dict[str, Any] = field(default_factory=dict)


def _check_keys(section: str, doc: Any, allowed: set[str], required: set[str] = frozenset()) -> None:
    if not isinstance(doc, dict):
        raise ConfigError(f"{section} must be a mapping")
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(map(str, unknown)))}")
    missing = set(required) - set(doc)
    if missing:
        raise ConfigError(f"missing key(s) in {section}: {', '.join(sorted(missing))}")


def _parse_fixture(doc: Any) -> FixtureSpec:
    _check_keys("fixture", doc, {"name", "params", "file"})
    if ("name" in doc) == ("file" in doc):
        raise ConfigError("fixture needs exactly one of 'name' or 'file'")
    params = doc.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("fixture.params must be a mapping")
    return FixtureSpec(doc.get("name"), dict(params), doc.get("file"))


def _parse_agent(doc: Any, n_states: int, seed: int) -> AgentConfig:
    _check_keys("agent", doc, _AGENT_KEYS, {"L", "K"})
    fit_doc = doc.get("fit") or {}
    bonus_doc = doc.get("bonus") or {}
    sched_doc = doc.get("schedule") or {}
    _check_keys("agent.fit", fit_doc, _FIT_KEYS)
    _check_keys("agent.bonus", bonus_doc, _BONUS_KEYS)
    _check_keys("agent.schedule", sched_doc, _SCHEDULE_KEYS)
    m = int(doc.get("m", n_states))
    try:
        return AgentConfig(
            L=int(doc["L"]), m=m, K=int(doc["K"]),
            fit=FitConfig(n_latent=m, seed=seed, **fit_doc),
            bonus=BonusConfig(**bonus_doc),
            schedule=ScheduleConfig(**sched_doc),
            eval_episodes=int(doc.get("eval_episodes", 1)),
            track_model_tv=bool(doc.get("track_model_tv", False)),
            seed=seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"agent: {exc}") from exc


def parse_config(doc: Any, base_dir: Path | None = None) -> tuple[ExperimentConfig, TabularPomdp]:
    """Validate a config mapping and build its fixture."""
    _check_keys("config", doc, _TOP_KEYS, {"format", "version", "fixture", "agent", "seeds"})
    check_header(doc, EXPERIMENT_FORMAT, EXPERIMENT_VERSION)
    fixture = _parse_fixture(doc["fixture"])
    pomdp = fixture.build(base_dir)
    seeds = doc["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a nonempty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    variants = doc.get("variants", ["bonusOn"])
    bad = [v for v in variants if v not in VARIANTS]
    if bad or not variants or len(set(variants)) != len(variants):
        raise ConfigError(f"variants must be distinct values from {list(VARIANTS)}, got {variants}")
    agent = _parse_agent(doc["agent"], pomdp.n_states, seeds[0])
    cfg = ExperimentConfig(fixture, agent, list(seeds), list(variants),
                           int(doc.get("final_eval_episodes", 1000)), int(doc.get("workers", 1)),
                           bool(doc.get("record_wall_clock", False)), doc.get("output_dir"), doc)
    if cfg.final_eval_episodes < 1 or cfg.workers < 1:
        raise ConfigError("final_eval_episodes and workers must be >= 1")
    return cfg, pomdp


def load_config(path: str | Path) -> tuple[ExperimentConfig, TabularPomdp]:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return parse_config(doc, path.parent)
