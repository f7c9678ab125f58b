"""L-step observation/action windows, their finite index space, and window policies."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from ..errors import BudgetExceeded

PAD = -1
"""Sentinel filling window slots that precede the first observation."""

DEFAULT_WINDOW_BUDGET = 10**6


@dataclass(frozen=True)
class Window:
    """``(o_{h-L+1}, a_{h-L+1}, ..., a_{h-1}, o_h)`` split into its observation and action slots."""

    obs: tuple[int, ...]
    acts: tuple[int, ...]

    def __post_init__(self) -> None:
        obs, acts = tuple(int(o) for o in self.obs), tuple(int(a) for a in self.acts)
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "acts", acts)
        if len(obs) < 1 or len(acts) != len(obs) - 1:
            raise ValueError(f"window needs L observations and L-1 actions, got {obs}, {acts}")
        n_pad = self.n_pad
        if obs[n_pad] == PAD or any(o == PAD for o in obs[n_pad:]):
            raise ValueError(f"padding must be a proper contiguous prefix: {obs}")
        if any(a != PAD for a in acts[:n_pad]) or any(a == PAD for a in acts[n_pad:]):
            raise ValueError(f"action slots inconsistent with observation padding: {obs}, {acts}")

    @property
    def length(self) -> int:
        return len(self.obs)

    @property
    def n_pad(self) -> int:
        n = 0
        for o in self.obs:
            if o != PAD:
                break
            n += 1
        return n

    @property
    def last_obs(self) -> int:
        return self.obs[-1]

    def interleaved(self) -> tuple[int, ...]:
        out: list[int] = []
        for i, o in enumerate(self.obs):
            out.append(o)
            if i < len(self.acts):
                out.append(self.acts[i])
        return tuple(out)

    def __repr__(self) -> str:
        sym = ["_" if v == PAD else str(v) for v in self.interleaved()]
        return f"Window({','.join(sym)})"


def initial_window(L: int, o0: int) -> Window:
    return Window((PAD,) * (L - 1) + (o0,), (PAD,) * (L - 1))


def window_shift(x: Window, a: int, o_next: int) -> Window:
    """Drop the oldest (o, a) pair and append (a, o_next)."""
    if x.length == 1:
        return Window((o_next,), ())
    return Window(x.obs[1:] + (o_next,), x.acts[1:] + (a,))


def window_from_history(history: Sequence[int], L: int) -> Window:
    """Last-L window of an interleaved history ``(o_0, a_0, o_1, ..., o_h)``."""
    obs = list(history[0::2])
    acts = list(history[1::2])
    obs = obs[-L:]
    acts = acts[-(L - 1):] if L > 1 else []
    n_pad = L - len(obs)
    return Window((PAD,) * n_pad + tuple(obs), (PAD,) * (L - 1 - len(acts)) + tuple(acts))


def windows_of_trajectory(observations: Sequence[int], actions: Sequence[int], L: int) -> list[Window]:
    """Windows ``x_0 .. x_H`` along a trajectory."""
    x = initial_window(L, observations[0])
    out = [x]
    for a, o in zip(actions, observations[1:]):
        x = window_shift(x, a, o)
        out.append(x)
    return out


class WindowSpace:
    """Enumeration of every padded window for given |O|, |A| and L.

    Windows are indexed ``0 .. n_windows-1``; fully padded windows come first.
    ``next_index[w, a, o]`` is the index of ``window_shift(windows[w], a, o)``.
    """

    def __init__(self, n_obs: int, n_actions: int, L: int, budget: int = DEFAULT_WINDOW_BUDGET):
        if L < 1:
            raise ValueError("window length must be >= 1")
        self.n_obs, self.n_actions, self.L = n_obs, n_actions, L
        size = sum(n_obs ** (L - p) * n_actions ** (L - 1 - p) for p in range(L))
        if size > budget:
            raise BudgetExceeded(f"{size} windows exceed the window budget {budget}")
        windows: list[Window] = []
        for p in range(L - 1, -1, -1):
            for obs in itertools.product(range(n_obs), repeat=L - p):
                for acts in itertools.product(range(n_actions), repeat=L - 1 - p):
                    windows.append(Window((PAD,) * p + obs, (PAD,) * p + acts))
        self.windows = windows
        self._index = {w: i for i, w in enumerate(windows)}

    def __len__(self) -> int:
        return len(self.windows)

    def __iter__(self) -> Iterator[Window]:
        return iter(self.windows)

    def index(self, x: Window) -> int:
        return self._index[x]

    def initial_index(self, o0: int) -> int:
        return self._index[initial_window(self.L, o0)]

    @cached_property
    def next_index(self) -> np.ndarray:
        nxt = np.empty((len(self), self.n_actions, self.n_obs), dtype=np.int64)
        for i, w in enumerate(self.windows):
            for a in range(self.n_actions):
                for o in range(self.n_obs):
                    nxt[i, a, o] = self._index[window_shift(w, a, o)]
        return nxt

    @cached_property
    def last_obs(self) -> np.ndarray:
        return np.array([w.last_obs for w in self.windows], dtype=np.int64)

    @cached_property
    def n_pad(self) -> np.ndarray:
        return np.array([w.n_pad for w in self.windows], dtype=np.int64)

    def valid_at(self, h: int) -> np.ndarray:
        """Mask of windows whose padding is consistent with step ``h``."""
        return self.n_pad == max(self.L - 1 - h, 0)


class WindowPolicy:
    """Step-indexed stochastic policy over L-windows, stored densely.

    ``probs[h, w, a]`` is the probability of action ``a`` at step ``h`` in window ``w``.
    """

    def __init__(self, space: WindowSpace, probs: np.ndarray):
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 3 or probs.shape[1:] != (len(space), space.n_actions):
            raise ValueError(f"policy table has shape {probs.shape}")
        if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=2) - 1.0) > 1e-9):
            raise ValueError("policy rows must be distributions")
        probs.setflags(write=False)
        self.space = space
        self.probs = probs

    @property
    def L(self) -> int:
        return self.space.L

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    def dist(self, h: int, x: Window) -> np.ndarray:
        return self.probs[h, self.space.index(x)]

    def greedy_actions(self) -> np.ndarray:
        return self.probs.argmax(axis=2)

    @classmethod
    def uniform(cls, space: WindowSpace, horizon: int) -> "WindowPolicy":
        probs = np.full((horizon, len(space), space.n_actions), 1.0 / space.n_actions)
        return cls(space, probs)

    @classmethod
    def constant(cls, space: WindowSpace, horizon: int, action: int) -> "WindowPolicy":
        probs = np.zeros((horizon, len(space), space.n_actions))
        probs[:, :, action] = 1.0
        return cls(space, probs)

    @classmethod
    def deterministic(cls, space: WindowSpace, actions: np.ndarray) -> "WindowPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros(actions.shape + (space.n_actions,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(space, probs)

    @classmethod
    def from_function(cls, space: WindowSpace, horizon: int,
                      fn: Callable[[int, Window], Sequence[float]]) -> "WindowPolicy":
        probs = np.array([[fn(h, w) for w in space.windows] for h in range(horizon)], dtype=float)
        return cls(space, probs)

    @classmethod
    def random_deterministic(cls, space: WindowSpace, horizon: int, seed: int) -> "WindowPolicy":
        rng = np.random.default_rng(seed)
        return cls.deterministic(space, rng.integers(space.n_actions, size=(horizon, len(space))))

    @classmethod
    def random_stochastic(cls, space: WindowSpace, horizon: int, seed: int) -> "WindowPolicy":
        rng = np.random.default_rng(seed)
        return cls(space, rng.dirichlet(np.ones(space.n_actions), size=(horizon, len(space))))
