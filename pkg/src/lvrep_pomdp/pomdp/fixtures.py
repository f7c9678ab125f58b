"""Built-in tabular fixtures.

``flip``
    Two hidden states, actions *stay*/*flip*, the observation reports the
    state correctly with probability ``eta``. Reward 1 for seeing observation 1.
``lock``
    Combination lock whose ghost states make it exactly L-decodable: a wrong
    action leads into a chain of L-1 ghost states that replay the observations
    of the correct path, then into an absorbing dead state.
``gridmask``
    Bouncing walker on a 1-D grid; the observation is the position only, the
    velocity is masked (2-decodable when noise is off).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .model import TabularPomdp

STAY, FLIP = 0, 1


def flip(eta: float = 1.0, horizon: int = 2) -> TabularPomdp:
    emit = np.array([[eta, 1.0 - eta], [1.0 - eta, eta]])
    trans = np.zeros((2, 2, 2))
    trans[:, STAY, :] = np.eye(2)
    trans[:, FLIP, :] = np.eye(2)[::-1]
    reward = np.array([[0.0, 0.0], [1.0, 1.0]])
    return TabularPomdp(np.array([0.5, 0.5]), trans, emit, reward, horizon,
                        name=f"flip(eta={eta:g})", state_names=("s0", "s1"))


def default_code(code_length: int, n_actions: int) -> tuple[int, ...]:
    return tuple((i + 1) % n_actions for i in range(code_length))


def lock(L: int = 2, code_length: int = 3, n_actions: int = 2, horizon: int | None = None,
         code: Sequence[int] | None = None) -> TabularPomdp:
    """Combination lock, exactly L-decodable (and not (L-1)-decodable for L >= 2).

    States: ``g0..g{n}`` on the correct path (``g{n}`` is the absorbing goal),
    ghost states ``f{i}.{k}`` (k-th ghost step, mimicking ``g{i}``) and ``dead``.
    Observations: 0 for ``dead``; ``i+1`` for ``g{i}`` and its ghosts.
    Reward 1 whenever the goal symbol ``n+1`` is observed.
    """
    n = code_length
    code = tuple(default_code(n, n_actions) if code is None else code)
    if len(code) != n or any(not 0 <= c < n_actions for c in code):
        raise ValueError(f"invalid code {code}")
    H = n + 2 if horizon is None else horizon

    names = [f"g{i}" for i in range(n + 1)]
    ghost_index: dict[tuple[int, int], int] = {}
    for k in range(1, L):
        for i in range(k, n):
            ghost_index[(i, k)] = len(names)
            names.append(f"f{i}.{k}")
    dead = len(names)
    names.append("dead")
    S, O = len(names), n + 2

    trans = np.zeros((S, n_actions, S))
    for i in range(n):
        for a in range(n_actions):
            if a == code[i]:
                trans[i, a, i + 1] = 1.0
            else:
                trans[i, a, ghost_index.get((i + 1, 1), dead)] = 1.0
    trans[n, :, n] = 1.0
    for (i, k), s in ghost_index.items():
        trans[s, :, ghost_index.get((i + 1, k + 1), dead)] = 1.0
    trans[dead, :, dead] = 1.0

    emit = np.zeros((S, O))
    for i in range(n + 1):
        emit[i, i + 1] = 1.0
    for (i, _), s in ghost_index.items():
        emit[s, i + 1] = 1.0
    emit[dead, 0] = 1.0

    reward = np.zeros((O, n_actions))
    reward[n + 1, :] = 1.0
    rho0 = np.zeros(S)
    rho0[0] = 1.0
    return TabularPomdp(rho0, trans, emit, reward, H,
                        name=f"lock(L={L},n={n},A={n_actions})", state_names=tuple(names))


def gridmask(n_cells: int = 4, horizon: int = 4, noise: float = 0.0) -> TabularPomdp:
    """Walker with velocity +-1 on ``n_cells`` cells; action 1 reverses the velocity.

    A move that would leave the grid bounces: position stays, velocity flips.
    The position is observed (uniformly corrupted with probability ``noise``);
    reward 1 for observing the rightmost cell.
    """
    S = 2 * n_cells  # s = 2 * pos + (vel == +1)
    trans = np.zeros((S, 2, S))
    for pos in range(n_cells):
        for up in (0, 1):
            for a in (0, 1):
                v = (1 if up else -1) * (-1 if a == 1 else 1)
                nxt = pos + v
                if not 0 <= nxt < n_cells:
                    nxt, v = pos, -v
                trans[2 * pos + up, a, 2 * nxt + (v > 0)] = 1.0
    emit = np.full((S, n_cells), noise / n_cells)
    for s in range(S):
        emit[s, s // 2] += 1.0 - noise
    reward = np.zeros((n_cells, 2))
    reward[n_cells - 1, :] = 1.0
    rho0 = np.zeros(S)
    rho0[2 * (n_cells // 2)] = rho0[2 * (n_cells // 2) + 1] = 0.5
    names = tuple(f"p{s // 2}{'+' if s % 2 else '-'}" for s in range(S))
    return TabularPomdp(rho0, trans, emit, reward, horizon,
                        name=f"gridmask(n={n_cells})", state_names=names)


BUILTINS: dict[str, Callable[..., TabularPomdp]] = {
    "flip": flip,
    "lock": lock,
    "gridmask": gridmask,
}


def make_fixture(name: str, **params) -> TabularPomdp:
    """Build a fixture by name; ``zero_reward=True`` replaces the reward with zeros."""
    key = name.lower()
    if key not in BUILTINS:
        raise KeyError(f"unknown fixture {name!r}; known: {sorted(BUILTINS)}")
    zero_reward = params.pop("zero_reward", False)
    pomdp = BUILTINS[key](**params)
    if zero_reward:
        pomdp = pomdp.with_reward(np.zeros_like(pomdp.reward))
    return pomdp
