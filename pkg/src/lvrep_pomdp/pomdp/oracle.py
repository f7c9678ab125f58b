"""Brute-force history-tree oracles.

Everything here enumerates the full action-observation tree, so it is only
usable on small fixtures; a node budget guards against accidental blow-ups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from ..errors import BudgetExceeded, NotDecodable
from .model import NORMALIZER_EPS, TabularPomdp, belief_init
from .windows import Window, WindowPolicy, window_from_history

DEFAULT_NODE_BUDGET = 10**7


@dataclass(frozen=True)
class HistoryNode:
    history: tuple[int, ...]
    belief: np.ndarray
    reach_prob: float


@dataclass
class TreeLevel:
    """All histories of one depth plus the edges that created them."""

    histories: list[tuple[int, ...]]
    beliefs: np.ndarray          # (N, S)
    reach: np.ndarray            # (N,)
    parent: np.ndarray           # (N,) index into previous level, -1 at the root
    action: np.ndarray           # (N,) action taken at the parent, -1 at the root
    branch_prob: np.ndarray      # (N,) P(o | parent belief, action), or P(o_0) at the root

    def __len__(self) -> int:
        return len(self.histories)

    def node(self, i: int) -> HistoryNode:
        return HistoryNode(self.histories[i], self.beliefs[i], float(self.reach[i]))

    @property
    def last_obs(self) -> np.ndarray:
        return np.array([hist[-1] for hist in self.histories], dtype=np.int64)


@dataclass
class HistoryTree:
    pomdp: TabularPomdp
    levels: list[TreeLevel] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return sum(len(lv) for lv in self.levels)


def _action_probs(policy: WindowPolicy | None, h: int, histories: list[tuple[int, ...]],
                  n_actions: int) -> np.ndarray:
    if policy is None:
        return np.full((len(histories), n_actions), 1.0 / n_actions)
    hp = min(h, policy.horizon - 1)
    idx = [policy.space.index(window_from_history(hist, policy.L)) for hist in histories]
    return policy.probs[hp, idx]


def build_history_tree(pomdp: TabularPomdp, depth: int, policy: WindowPolicy | None = None,
                       budget: int = DEFAULT_NODE_BUDGET) -> HistoryTree:
    """Enumerate every positive-probability history ``(o_0, a_0, ..., o_d)`` for ``d <= depth``.

    All actions are expanded; ``reach`` is the probability of the history under
    ``policy`` (uniform when ``None``) and may be zero for off-policy branches.
    """
    S, A, O = pomdp.n_states, pomdp.n_actions, pomdp.n_obs
    p0 = pomdp.rho0 @ pomdp.emit
    roots = [o for o in range(O) if p0[o] > NORMALIZER_EPS]
    tree = HistoryTree(pomdp)
    tree.levels.append(TreeLevel(
        histories=[(o,) for o in roots],
        beliefs=np.array([belief_init(pomdp, o) for o in roots]).reshape(len(roots), S),
        reach=p0[roots].copy(),
        parent=np.full(len(roots), -1),
        action=np.full(len(roots), -1),
        branch_prob=p0[roots].copy(),
    ))
    total = len(roots)
    for h in range(depth):
        lv = tree.levels[-1]
        pi = _action_probs(policy, h, lv.histories, A)
        # pushed[n, a, s'] and joint[n, a, o] = P(o | b_n, a)
        pushed = np.einsum("ns,sat->nat", lv.beliefs, pomdp.trans)
        joint = pushed @ pomdp.emit
        n_idx, a_idx, o_idx = np.nonzero(joint > NORMALIZER_EPS)
        total += len(n_idx)
        if total > budget:
            raise BudgetExceeded(f"history tree exceeds {budget} nodes at depth {h + 1}")
        probs = joint[n_idx, a_idx, o_idx]
        beliefs = pushed[n_idx, a_idx] * pomdp.emit[:, o_idx].T
        beliefs /= beliefs.sum(axis=1, keepdims=True)
        tree.levels.append(TreeLevel(
            histories=[lv.histories[n] + (int(a), int(o)) for n, a, o in zip(n_idx, a_idx, o_idx)],
            beliefs=beliefs,
            reach=lv.reach[n_idx] * pi[n_idx, a_idx] * probs,
            parent=n_idx,
            action=a_idx,
            branch_prob=probs,
        ))
    return tree


@dataclass
class ExactValues:
    """Result of exhaustive backward induction on the history tree.

    ``q_levels[h][n, a]`` is ``Q_h(history_n, a)`` and ``v_levels[h][n]`` its value
    under the evaluated policy (or the optimum).
    """

    value: float
    tree: HistoryTree
    q_levels: list[np.ndarray]
    v_levels: list[np.ndarray]

    @property
    def q_table(self) -> dict[tuple[int, tuple[int, ...], int], float]:
        table = {}
        for h, (lv, q) in enumerate(zip(self.tree.levels, self.q_levels)):
            for n, hist in enumerate(lv.histories):
                for a in range(q.shape[1]):
                    table[(h, hist, a)] = float(q[n, a])
        return table

    def __iter__(self):
        # allows ``value, q_table = exact_value_iteration(...)``
        return iter((self.value, self.q_table))


def exact_value_iteration(pomdp: TabularPomdp, policy: Union[WindowPolicy, str] = "optimal",
                          budget: int = DEFAULT_NODE_BUDGET) -> ExactValues:
    """Exact ``v^pi`` (or ``v*`` for ``policy="optimal"``) by full history-tree backup."""
    optimal = isinstance(policy, str)
    if optimal and policy != "optimal":
        raise ValueError(f"unknown policy spec {policy!r}")
    H, A = pomdp.horizon, pomdp.n_actions
    tree = build_history_tree(pomdp, H - 1, None if optimal else policy, budget)
    q_levels: list[np.ndarray] = [None] * H  # type: ignore[list-item]
    v_levels: list[np.ndarray] = [None] * H  # type: ignore[list-item]
    for h in range(H - 1, -1, -1):
        lv = tree.levels[h]
        q = pomdp.reward[lv.last_obs].copy()
        if h + 1 < H:
            child = tree.levels[h + 1]
            np.add.at(q, (child.parent, child.action), child.branch_prob * v_levels[h + 1])
        q_levels[h] = q
        if optimal:
            v_levels[h] = q.max(axis=1)
        else:
            v_levels[h] = (_action_probs(policy, h, lv.histories, A) * q).sum(axis=1)
    root = tree.levels[0]
    value = float(root.branch_prob @ v_levels[0])
    return ExactValues(value, tree, q_levels, v_levels)


def window_q_values(result: ExactValues, L: int, reachable_only: bool = True
                    ) -> dict[tuple[int, Window, int], float]:
    """Collapse history-indexed Q values onto ``(h, window, a)``.

    Histories sharing a window are averaged with their reach probabilities.
    Windows the policy never reaches are skipped unless ``reachable_only`` is
    off, in which case their histories are averaged with equal weights.
    """
    out = {}
    for h, (lv, q) in enumerate(zip(result.tree.levels, result.q_levels)):
        for x, members in _group_by_window(lv, L).items():
            w = lv.reach[members]
            if w.sum() <= 0.0:
                if reachable_only:
                    continue
                w = np.ones(len(members))
            avg = (w @ q[members]) / w.sum()
            for a, val in enumerate(avg):
                out[(h, x, a)] = float(val)
    return out


def _max_pairwise_tv(beliefs: np.ndarray) -> float:
    if beliefs.shape[0] < 2:
        return 0.0
    diff = np.abs(beliefs[:, None, :] - beliefs[None, :, :]).sum(axis=2)
    return 0.5 * float(diff.max())


def _group_by_window(level: TreeLevel, L: int) -> dict[Window, list[int]]:
    groups: dict[Window, list[int]] = {}
    for n, hist in enumerate(level.histories):
        groups.setdefault(window_from_history(hist, L), []).append(n)
    return groups


def decodability_gaps(pomdp: TabularPomdp, L: int, max_depth: int,
                      budget: int = DEFAULT_NODE_BUDGET) -> list[float]:
    """Per-depth maximum belief TV distance among histories sharing a window."""
    tree = build_history_tree(pomdp, max_depth, None, budget)
    gaps = []
    for lv in tree.levels:
        gap = 0.0
        for members in _group_by_window(lv, L).values():
            gap = max(gap, _max_pairwise_tv(lv.beliefs[members]))
        gaps.append(gap)
    return gaps


def decodability_gap(pomdp: TabularPomdp, L: int, max_depth: int,
                     budget: int = DEFAULT_NODE_BUDGET) -> float:
    """0 certifies that beliefs are a function of the last-L window up to ``max_depth``."""
    return max(decodability_gaps(pomdp, L, max_depth, budget))


def window_beliefs(pomdp: TabularPomdp, L: int, depth: int, budget: int = DEFAULT_NODE_BUDGET,
                   strict: bool = False, tol: float = 1e-9) -> list[dict[Window, np.ndarray]]:
    """Decoded belief ``p*(x)`` for every window reachable at each step ``0..depth``.

    For a non-decodable POMDP the returned belief is the posterior over states
    given the window under uniformly random actions; ``strict`` raises instead.
    """
    tree = build_history_tree(pomdp, depth, None, budget)
    out = []
    for h, lv in enumerate(tree.levels):
        table = {}
        for x, members in _group_by_window(lv, L).items():
            bs = lv.beliefs[members]
            if strict and _max_pairwise_tv(bs) > tol:
                raise NotDecodable(f"window {x} at step {h} maps to distinct beliefs")
            w = lv.reach[members]
            table[x] = (w @ bs) / w.sum()
        out.append(table)
    return out
