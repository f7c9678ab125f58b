"""YAML serialization of POMDP fixtures.

File layout (version 1)::

    format: lvrep-pomdp
    version: 1
    name: flip
    states: 2            # or a list of state names
    actions: 2
    observations: 2
    horizon: 2
    rho0: [0.5, 0.5]
    trans: [[[1, 0], [0, 1]], [[0, 1], [1, 0]]]   # trans[s][a][s']
    emit: [[1, 0], [0, 1]]                         # emit[s][o]
    reward: [[0, 0], [1, 1]]                       # reward[o][a]
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..errors import ConfigError
from .model import TabularPomdp
from .windows import WindowPolicy, WindowSpace

POMDP_FORMAT = "lvrep-pomdp"
POMDP_VERSION = 1
_KEYS = {"format", "version", "name", "states", "actions", "observations", "horizon",
         "rho0", "trans", "emit", "reward"}


def check_header(doc: dict[str, Any], fmt: str, version: int) -> None:
    if doc.get("format") != fmt:
        raise ConfigError(f"expected format {fmt!r}, got {doc.get('format')!r}")
    if doc.get("version") != version:
        raise ConfigError(f"unsupported {fmt} version {doc.get('version')!r}")


def pomdp_to_dict(pomdp: TabularPomdp) -> dict[str, Any]:
    return {
        "format": POMDP_FORMAT,
        "version": POMDP_VERSION,
        "name": pomdp.name,
        "states": list(pomdp.state_names) if pomdp.state_names else pomdp.n_states,
        "actions": pomdp.n_actions,
        "observations": pomdp.n_obs,
        "horizon": pomdp.horizon,
        "rho0": pomdp.rho0.tolist(),
        "trans": pomdp.trans.tolist(),
        "emit": pomdp.emit.tolist(),
        "reward": pomdp.reward.tolist(),
    }


def pomdp_from_dict(doc: dict[str, Any]) -> TabularPomdp:
    check_header(doc, POMDP_FORMAT, POMDP_VERSION)
    unknown = set(doc) - _KEYS
    if unknown:
        raise ConfigError(f"unknown keys in POMDP file: {sorted(unknown)}")
    missing = _KEYS - {"name"} - set(doc)
    if missing:
        raise ConfigError(f"missing keys in POMDP file: {sorted(missing)}")
    states = doc["states"]
    names = tuple(str(s) for s in states) if isinstance(states, list) else None
    n_states = len(names) if names else int(states)
    try:
        pomdp = TabularPomdp(np.asarray(doc["rho0"], float), np.asarray(doc["trans"], float),
                             np.asarray(doc["emit"], float), np.asarray(doc["reward"], float),
                             int(doc["horizon"]), name=str(doc.get("name", "pomdp")),
                             state_names=names)
    except ValueError as exc:
        raise ConfigError(f"invalid POMDP tables: {exc}") from exc
    dims = (pomdp.n_states, pomdp.n_actions, pomdp.n_obs)
    if dims != (n_states, int(doc["actions"]), int(doc["observations"])):
        raise ConfigError(f"declared sizes do not match tables {dims}")
    return pomdp


def dump_pomdp(pomdp: TabularPomdp, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(pomdp_to_dict(pomdp), sort_keys=False))


def load_pomdp(path: str | Path) -> TabularPomdp:
    with open(path) as f:
        return pomdp_from_dict(yaml.safe_load(f))


POLICY_FORMAT = "lvrep-window-policy"
POLICY_VERSION = 1


def policy_to_dict(policy: WindowPolicy) -> dict[str, Any]:
    space = policy.space
    return {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "n_obs": space.n_obs,
        "n_actions": space.n_actions,
        "L": space.L,
        "horizon": policy.horizon,
        "probs": policy.probs.tolist(),
    }


def policy_from_dict(doc: dict[str, Any]) -> WindowPolicy:
    check_header(doc, POLICY_FORMAT, POLICY_VERSION)
    space = WindowSpace(int(doc["n_obs"]), int(doc["n_actions"]), int(doc["L"]))
    probs = np.asarray(doc["probs"], float)
    if probs.shape[0] != int(doc["horizon"]):
        raise ConfigError("policy table does not match the declared horizon")
    return WindowPolicy(space, probs)


def dump_policy(policy: WindowPolicy, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(policy_to_dict(policy), sort_keys=False))


def load_policy(path: str | Path) -> WindowPolicy:
    with open(path) as f:
        return policy_from_dict(yaml.safe_load(f))
