"""Linear Q-functions over latent features, L-step least-squares policy evaluation,
and a brute-force check that Q^pi is linear in the exact features.

Convention: the immediate reward ``r(o_h, a_h)`` is known to the agent and kept
outside the inner product, so ``Q_h(x, a) = r(o_h, a) + <p(.|x, a), w_h>``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .errors import MissingEndAction, NotDecodable, SingularSystem
from .latent import LatentModel
from .pomdp.model import NORMALIZER_EPS, TabularPomdp
from .pomdp.oracle import (DEFAULT_NODE_BUDGET, build_history_tree, decodability_gap,
                           exact_value_iteration, window_beliefs, window_q_values)
from .pomdp.simulate import sample_episodes
from .pomdp.windows import Window, WindowPolicy, WindowSpace, window_from_history, window_shift

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class WeightVector:
    step: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, step: int, m: int) -> "WeightVector":
        return cls(step, np.zeros(m))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    provenance: tuple[int, Window, int] | None = None  # (h, x, a)


@dataclass
class LRollout:
    """An L-step (possibly horizon-truncated) segment starting at ``(x_h, a_h)``."""

    step: int
    start_window: Window
    actions: tuple[int, ...]          # a_h .. a_{h+L-1}
    observations: tuple[int, ...]     # o_{h+1} .. o_{h+L}
    reward_sum: float                 # sum_{i=h}^{h+L-1} r(o_i, a_i)
    end_window: Window                # x_{h+L}
    end_action: int | None = None     # a_{h+L}
    weight: float = 1.0

    def __post_init__(self) -> None:
        x = self.start_window
        for a, o in zip(self.actions, self.observations):
            x = window_shift(x, a, o)
        if x != self.end_window:
            raise ValueError("end window is not the start window advanced by the recorded steps")


class TargetPair(NamedTuple):
    """Regression pair: fit ``<w, feature>`` to ``target - offset`` with the given weight."""

    feature: FeatureVector
    target: float
    offset: float = 0.0
    weight: float = 1.0


def q_value(model: LatentModel, w: WeightVector, x: Window, a: int) -> float:
    """``<p(.|x, a), w>`` for the step the weight vector belongs to."""
    enc, _ = model.encode_row(w.step, x, a)
    return float(enc @ w.weights)


def q_value_mc(model: LatentModel, w: WeightVector, x: Window, a: int, n_samples: int,
               seed: int) -> float:
    """Monte-Carlo estimate: mean of ``w(z_i)`` with ``z_i ~ p(.|x, a)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    enc, _ = model.encode_row(w.step, x, a)
    z = np.random.default_rng(seed).choice(len(enc), size=n_samples, p=enc)
    return float(w.weights[z].mean())


def full_q(model: LatentModel, reward: np.ndarray, w: WeightVector, x: Window, a: int) -> float:
    """Reward plus the linear continuation: the estimate of ``Q_h(x, a)``."""
    return float(reward[x.last_obs, a]) + q_value(model, w, x, a)


def lstep_targets(rollouts: Iterable[LRollout], model: LatentModel, w_next: WeightVector | None,
                  reward: np.ndarray) -> list[TargetPair]:
    """Bootstrapped L-step Bellman targets for the rollouts of one step.

    ``target = reward_sum + Q_{h+L}(x_{h+L}, a_{h+L})`` where the tail value is
    dropped when ``w_next`` is ``None`` (the segment reaches the horizon).
    The immediate reward ``r(o_h, a_h)`` is returned as the pair's offset.
    """
    pairs = []
    for ro in rollouts:
        enc, _ = model.encode_row(ro.step, ro.start_window, ro.actions[0])
        target = ro.reward_sum
        if w_next is not None:
            if ro.end_action is None:
                raise MissingEndAction(f"rollout at step {ro.step} has no end action")
            target += full_q(model, reward, w_next, ro.end_window, ro.end_action)
        offset = float(reward[ro.start_window.last_obs, ro.actions[0]])
        feat = FeatureVector(enc, (ro.step, ro.start_window, ro.actions[0]))
        pairs.append(TargetPair(feat, float(target), offset, ro.weight))
    return pairs


def normal_equations(pairs: Sequence[TargetPair], ridge: float) -> tuple[np.ndarray, np.ndarray]:
    F = np.array([p.feature.values for p in pairs])
    y = np.array([p.target - p.offset for p in pairs])
    wt = np.array([p.weight for p in pairs])
    gram = (F * wt[:, None]).T @ F + ridge * np.eye(F.shape[1])
    moment = F.T @ (wt * y)
    return gram, moment


def lspe_solve(pairs: Sequence[TargetPair], ridge: float = DEFAULT_RIDGE, step: int | None = None
               ) -> WeightVector:
    """Weighted ridge least squares by Cholesky on the normal equations."""
    if not pairs:
        raise ValueError("lspe_solve needs at least one pair")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    gram, moment = normal_equations(pairs, ridge)
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True)
        if ridge == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("Gram matrix is rank deficient; use ridge > 0") from exc
    w = scipy.linalg.cho_solve(factor, moment)
    if step is None:
        prov = pairs[0].feature.provenance
        step = prov[0] if prov else 0
    return WeightVector(step, w)


def rollouts_from_episodes(observations: np.ndarray, actions: np.ndarray, rewards: np.ndarray,
                           L: int, h: int) -> list[LRollout]:
    """The L-step segments starting at step ``h``, one per distinct segment.

    Identical segments are merged into one rollout whose ``weight`` is their
    count, which leaves the least-squares normal equations unchanged.
    """
    H = actions.shape[1]
    end = min(h + L, H)
    lo = max(0, h - L + 1)
    # everything a segment depends on: the window at h, the L steps, and the end action
    key = np.hstack([observations[:, lo:end + 1], actions[:, lo:min(end + 1, H)]])
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    out = []
    for i, c in zip(first, counts):
        obs, act, rew = observations[i], actions[i], rewards[i]
        x = window_from_history(_interleave(obs[:h + 1], act[:h]), L)
        y = window_from_history(_interleave(obs[:end + 1], act[:end]), L)
        out.append(LRollout(h, x, tuple(int(a) for a in act[h:end]),
                            tuple(int(o) for o in obs[h + 1:end + 1]), float(rew[h:end].sum()), y,
                            int(act[end]) if end < H else None, float(c)))
    return out


def _interleave(obs: Sequence[int], acts: Sequence[int]) -> tuple[int, ...]:
    out: list[int] = []
    for i, o in enumerate(obs):
        out.append(int(o))
        if i < len(acts):
            out.append(int(acts[i]))
    return tuple(out)


def backward_lspe(rollouts_by_step: Sequence[Sequence[LRollout]], model: LatentModel,
                  reward: np.ndarray, L: int, ridge: float = DEFAULT_RIDGE) -> list[WeightVector]:
    """Chain ``lstep_targets`` and ``lspe_solve`` for ``h = H-1, ..., 0``."""
    H = len(rollouts_by_step)
    weights: list[WeightVector | None] = [None] * H
    for h in range(H - 1, -1, -1):
        w_next = weights[h + L] if h + L < H else None
        pairs = lstep_targets(rollouts_by_step[h], model, w_next, reward)
        weights[h] = lspe_solve(pairs, ridge, step=h)
    return weights  # type: ignore[return-value]


def policy_evaluate(pomdp: TabularPomdp, policy: WindowPolicy, model: LatentModel,
                    n_rollouts: int, seed: int, ridge: float = DEFAULT_RIDGE
                    ) -> list[WeightVector]:
    """LSPE from ``n_rollouts`` seeded on-policy episodes in the true environment.

    Features come from ``model`` (its window length is the L of the L-step
    backup); ``policy`` generates the data and the bootstrap actions.
    """
    batch = sample_episodes(pomdp, policy, n_rollouts, np.random.default_rng(seed))
    L = model.space.L
    per_step = [rollouts_from_episodes(batch.observations, batch.actions, batch.rewards, L, h)
                for h in range(pomdp.horizon)]
    return backward_lspe(per_step, model, pomdp.reward, L, ridge)


def initial_value(model: LatentModel, weights: Sequence[WeightVector], policy: WindowPolicy,
                  reward: np.ndarray) -> float:
    """``sum_o0 P(o0) sum_a pi(a|x_0) Q_0(x_0, a)`` with ``P(o0)`` from the model."""
    space = model.space
    v = 0.0
    for o0, p in enumerate(model.init_obs):
        if p <= 0:
            continue
        x0 = window_from_history((o0,), space.L)
        pi = policy.dist(0, window_from_history((o0,), policy.L))
        v += p * sum(pi[a] * full_q(model, reward, weights[0], x0, a)
                     for a in range(space.n_actions))
    return float(v)


def exhaustive_lrollouts(pomdp: TabularPomdp, policy: WindowPolicy, L: int,
                         budget: int = DEFAULT_NODE_BUDGET) -> list[list[LRollout]]:
    """Every positive-probability L-step segment, weighted by its exact probability.

    Start windows are those reached by ``policy``; every action is tried at the
    start, and the continuation follows ``policy``.
    """
    H, A = pomdp.horizon, pomdp.n_actions
    tree = build_history_tree(pomdp, H - 1, policy, budget)
    out: list[list[LRollout]] = []
    for h, lv in enumerate(tree.levels):
        segs: list[LRollout] = []
        for n, hist in enumerate(lv.histories):
            if lv.reach[n] <= 0:
                continue
            x = window_from_history(hist, L)
            for a in range(A):
                _extend(pomdp, policy, L, h, hist, x, lv.beliefs[n], a, float(lv.reach[n]),
                        [], [], 0.0, segs)
        out.append(segs)
    return out


def _extend(pomdp: TabularPomdp, policy: WindowPolicy, L: int, h0: int, hist: tuple[int, ...],
            x0: Window, belief: np.ndarray, a: int, prob: float, acts: list[int], obs: list[int],
            rsum: float, out: list[LRollout]) -> None:
    H = pomdp.horizon
    t = h0 + len(acts)
    rsum = rsum + float(pomdp.reward[hist[-1], a])
    acts = acts + [a]
    pushed = belief @ pomdp.trans[:, a, :]
    po = pushed @ pomdp.emit
    for o in np.flatnonzero(po > NORMALIZER_EPS):
        o = int(o)
        b2 = pushed * pomdp.emit[:, o]
        b2 /= b2.sum()
        hist2 = hist + (a, o)
        obs2 = obs + [o]
        p2 = prob * float(po[o])
        if len(acts) == L or t + 1 == H:
            end_x = window_from_history(hist2, L)
            if t + 1 == H:
                out.append(LRollout(h0, x0, tuple(acts), tuple(obs2), rsum, end_x, None, p2))
                continue
            pi = policy.probs[t + 1, policy.space.index(window_from_history(hist2, policy.L))]
            for a_end in np.flatnonzero(pi > 0):
                out.append(LRollout(h0, x0, tuple(acts), tuple(obs2), rsum, end_x, int(a_end),
                                    p2 * float(pi[a_end])))
        else:
            pi = policy.probs[t + 1, policy.space.index(window_from_history(hist2, policy.L))]
            for a2 in np.flatnonzero(pi > 0):
                _extend(pomdp, policy, L, h0, hist2, x0, b2, int(a2), p2 * float(pi[a2]),
                        acts, obs2, rsum, out)


@dataclass
class RepresentabilityReport:
    step: int
    max_residual: float
    mean_residual: float
    n_points: int
    weights: WeightVector
    residuals: dict[tuple[Window, int], float] = field(default_factory=dict)

    def __iter__(self):
        # ``max_residual, w_fit = verify_linear_representability(...)``
        return iter((self.max_residual, self.weights))


def verify_linear_representability(pomdp: TabularPomdp, policy: WindowPolicy, L: int, h: int,
                                   budget: int = DEFAULT_NODE_BUDGET, gap_tol: float = 1e-9,
                                   exact=None) -> RepresentabilityReport:
    """Fit ``Q^pi_h(x, a) - r(o_h, a)`` by least squares on the exact features.

    The feature of ``(x, a)`` is ``sum_s p*(s|x) trans(.|s, a)``, i.e. the
    latent variable is taken to be the next hidden state. ``exact`` may carry a
    precomputed :func:`exact_value_iteration` result for ``policy``.
    """
    gap = decodability_gap(pomdp, L, h, budget)
    if gap > gap_tol:
        raise NotDecodable(f"decodability gap {gap:.3g} at L={L}, depth {h}")
    if exact is None:
        exact = exact_value_iteration(pomdp, policy, budget)
    qtab = window_q_values(exact, L)
    beliefs = window_beliefs(pomdp, L, h, budget)[h]
    keys, feats, targets = [], [], []
    for (hh, x, a), q in sorted(qtab.items(), key=lambda kv: (kv[0][0], kv[0][1].interleaved(), kv[0][2])):
        if hh != h:
            continue
        keys.append((x, a))
        feats.append(beliefs[x] @ pomdp.trans[:, a, :])
        targets.append(q - pomdp.reward[x.last_obs, a])
    F, y = np.array(feats), np.array(targets)
    w, *_ = np.linalg.lstsq(F, y, rcond=None)
    res = np.abs(F @ w - y)
    return RepresentabilityReport(h, float(res.max()), float(res.mean()), len(y), WeightVector(h, w),
                                  {k: float(r) for k, r in zip(keys, res)})


RESIDUAL_COLUMNS = ("step", "maxResidual", "meanResidual", "nPoints")


def write_residual_csv(reports: Sequence[RepresentabilityReport], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESIDUAL_COLUMNS)
        for r in reports:
            writer.writerow([r.step, repr(r.max_residual), repr(r.mean_residual), r.n_points])


def weights_to_list(weights: Sequence[WeightVector]) -> list[list[float]]:
    return [w.weights.tolist() for w in weights]
