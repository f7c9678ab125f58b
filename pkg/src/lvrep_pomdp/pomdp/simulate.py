"""Seeded rollouts of window policies in the true environment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TabularPomdp
from .windows import WindowPolicy


@dataclass(frozen=True)
class Trajectory:
    """One episode: ``o_0..o_H``, ``a_0..a_{H-1}``, rewards ``r(o_h, a_h)`` and the hidden states."""

    observations: tuple[int, ...]
    actions: tuple[int, ...]
    rewards: tuple[float, ...]
    latent_states: tuple[int, ...] | None = None

    @property
    def ret(self) -> float:
        return float(sum(self.rewards))


@dataclass
class EpisodeBatch:
    """Array form of many trajectories; rows are episodes."""

    observations: np.ndarray  # (N, H+1)
    actions: np.ndarray       # (N, H)
    rewards: np.ndarray       # (N, H)
    states: np.ndarray        # (N, H+1)

    def __len__(self) -> int:
        return self.observations.shape[0]

    @property
    def returns(self) -> np.ndarray:
        return self.rewards.sum(axis=1)

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(tuple(int(o) for o in self.observations[i]),
                          tuple(int(a) for a in self.actions[i]),
                          tuple(float(r) for r in self.rewards[i]),
                          tuple(int(s) for s in self.states[i]))


def _sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def sample_episodes(pomdp: TabularPomdp, policy: WindowPolicy, n: int,
                    rng: np.random.Generator | int, horizon: int | None = None) -> EpisodeBatch:
    """Simulate ``n`` episodes in lockstep."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    H = pomdp.horizon if horizon is None else horizon
    space = policy.space
    S, O = pomdp.n_states, pomdp.n_obs
    states = np.empty((n, H + 1), dtype=np.int64)
    obs = np.empty((n, H + 1), dtype=np.int64)
    acts = np.empty((n, H), dtype=np.int64)
    states[:, 0] = _sample_rows(rng, np.broadcast_to(pomdp.rho0, (n, S)))
    obs[:, 0] = _sample_rows(rng, pomdp.emit[states[:, 0]])
    widx = np.array([space.initial_index(o) for o in range(O)])[obs[:, 0]]
    for h in range(H):
        acts[:, h] = _sample_rows(rng, policy.probs[min(h, policy.horizon - 1), widx])
        states[:, h + 1] = _sample_rows(rng, pomdp.trans[states[:, h], acts[:, h]])
        obs[:, h + 1] = _sample_rows(rng, pomdp.emit[states[:, h + 1]])
        widx = space.next_index[widx, acts[:, h], obs[:, h + 1]]
    rewards = pomdp.reward[obs[:, :H], acts]
    return EpisodeBatch(obs, acts, rewards, states)


def sample_episode(pomdp: TabularPomdp, policy: WindowPolicy, seed: int) -> Trajectory:
    """A single seeded episode; identical seeds give identical trajectories."""
    return sample_episodes(pomdp, policy, 1, np.random.default_rng(seed)).trajectory(0)


def monte_carlo_value(pomdp: TabularPomdp, policy: WindowPolicy, n: int, seed: int) -> tuple[float, float]:
    """Mean return and its standard error over ``n`` seeded episodes."""
    returns = sample_episodes(pomdp, policy, n, np.random.default_rng(seed)).returns
    if n < 2:
        return float(returns.mean()), 0.0
    return float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(n))
