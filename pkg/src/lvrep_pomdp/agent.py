"""Online exploration and offline pessimistic learning on top of the latent representation.

Each online episode: collect one segment per step with the previous policy,
refit the latent model, rebuild the per-step covariances and bonuses, and plan
greedily in the learned model with reward plus bonus.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetExceeded, EmptyDataset
from .exploration import (BonusConfig, CovarianceAccumulator, ScheduleConfig, accumulate_all,
                          bonus_table, schedule)
from .latent import FitConfig, LatentModel, TransitionDataset, fit_counts, model_tv_error
from .pomdp.model import TabularPomdp
from .pomdp.oracle import DEFAULT_NODE_BUDGET, window_beliefs
from .pomdp.simulate import _sample_rows, monte_carlo_value, sample_episodes
from .pomdp.windows import (Window, WindowPolicy, WindowSpace, initial_window, window_shift,
                            windows_of_trajectory)

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
DEFAULT_PLAN_BUDGET = 10**6


@dataclass
class AgentConfig:
    L: int = 1
    m: int = 2
    K: int = 10
    fit: FitConfig = field(default_factory=FitConfig)
    bonus: BonusConfig = field(default_factory=BonusConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    bonus_enabled: bool = True
    eval_episodes: int = 1
    track_model_tv: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.L < 1 or self.K < 1 or self.m < 1 or self.eval_episodes < 1:
            raise ValueError("L, K, m and eval_episodes must be >= 1")
        if self.fit.n_latent != self.m:
            self.fit = FitConfig(self.m, self.fit.max_iters, self.fit.tol, self.fit.floor_prob,
                                 self.fit.seed)


@dataclass
class EpisodeLog:
    episode: int
    ret: float
    planning_value: float
    model_tv: float | None
    bonus_mean: float
    bonus_max: float
    step_bonus: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class PlanResult:
    policy: WindowPolicy
    value: float
    q: np.ndarray   # (H, W, A)
    v: np.ndarray   # (H, W)


def plan(model: LatentModel, reward: np.ndarray, bonuses: np.ndarray | None = None,
         horizon: int | None = None, pessimism: bool = False,
         budget: int = DEFAULT_PLAN_BUDGET) -> PlanResult:
    """Exact backward induction over all padded windows in the learned model.

    The per-step reward is ``r + b``; with ``pessimism`` it is ``r - b`` and the
    backed-up Q is floored at 0. Ties go to the smallest action index.
    """
    space = model.space
    H = model.horizon if horizon is None else horizon
    W, A = len(space), space.n_actions
    if W * A * space.n_obs > budget:
        raise BudgetExceeded(f"planning table of {W * A * space.n_obs} entries exceeds {budget}")
    base = reward[space.last_obs]  # (W, A)
    nxt = space.next_index
    q = np.zeros((H, W, A))
    v = np.zeros((H + 1, W))
    actions = np.zeros((H, W), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        if bonuses is None:
            qh = base.copy()
        else:
            qh = base - bonuses[h] if pessimism else base + bonuses[h]
        if h + 1 < H:
            qh += np.einsum("wao,wao->wa", model.predictive(h), v[h + 1][nxt])
        if pessimism:
            qh = np.maximum(qh, 0.0)
        best = qh.max(axis=1)
        actions[h] = np.argmax(qh >= best[:, None] - TIE_TOL, axis=1)
        v[h] = best
        q[h] = qh
    init = np.array([space.initial_index(o) for o in range(space.n_obs)])
    value = float(model.init_obs @ v[0][init])
    return PlanResult(WindowPolicy.deterministic(space, actions), value, q, v[:H])


def evaluate_policy(pomdp: TabularPomdp, policy: WindowPolicy, n_episodes: int, seed: int
                    ) -> tuple[float, float]:
    """Seeded Monte-Carlo mean return and standard error in the true environment."""
    return monte_carlo_value(pomdp, policy, n_episodes, seed)


@dataclass
class CollectResult:
    main: tuple[int, tuple[Window, int, int]] | None
    extra: list[tuple[int, tuple[Window, int, int]]]
    observations: list[int]
    actions: list[int]


def collect_rollout(pomdp: TabularPomdp, pi: WindowPolicy, h: int, L: int,
                    rng: np.random.Generator | int) -> CollectResult:
    """Roll ``pi`` for ``h`` steps, then take uniformly random actions.

    With ``h + L <= H`` the triple at ``h`` goes to the main buffer and the
    triples at ``h+1 .. h+L-1`` to the auxiliary buffers. In the tail band
    (``h + L > H``) the segment is cut at the horizon and every triple goes to
    the auxiliary buffers.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    H, A = pomdp.horizon, pomdp.n_actions
    s = int(_sample_rows(rng, pomdp.rho0[None])[0])
    o = int(_sample_rows(rng, pomdp.emit[s][None])[0])
    obs, acts = [o], []
    x_pi = initial_window(pi.L, o)
    for t in range(h):
        a = int(_sample_rows(rng, pi.dist(t, x_pi)[None])[0])
        s = int(_sample_rows(rng, pomdp.trans[s, a][None])[0])
        o = int(_sample_rows(rng, pomdp.emit[s][None])[0])
        x_pi = window_shift(x_pi, a, o)
        obs.append(o)
        acts.append(a)
    n_random = min(L, H - h)
    for _ in range(n_random):
        a = int(rng.integers(A))
        s = int(_sample_rows(rng, pomdp.trans[s, a][None])[0])
        o = int(_sample_rows(rng, pomdp.emit[s][None])[0])
        obs.append(o)
        acts.append(a)
    xs = windows_of_trajectory(obs, acts, L)
    triples = [(t, (xs[t], acts[t], obs[t + 1])) for t in range(h, h + n_random)]
    if h + L <= H:
        return CollectResult(triples[0], triples[1:], obs, acts)
    return CollectResult(None, triples, obs, acts)


@dataclass
class OnlineResult:
    policies: list[WindowPolicy]
    logs: list[EpisodeLog]
    model: LatentModel
    main_counts: np.ndarray    # (H, W, A, O) records in the main buffers
    aux_counts: np.ndarray     # (H, W, A, O) records in the auxiliary buffers
    datasets: list[TransitionDataset]
    aux_datasets: list[TransitionDataset]
    plan_value: float


def _covariances(model: LatentModel, counts: np.ndarray, lam: float) -> list[CovarianceAccumulator]:
    """Per-step ``lam I + sum feature feature^T`` over the records in ``counts``."""
    accs = []
    m = model.n_latent
    for h in range(model.horizon):
        n = counts[h].sum(axis=-1).reshape(-1)
        F = model.encode[h].reshape(-1, m)
        keep = n > 0
        accs.append(accumulate_all(CovarianceAccumulator(h, m, lam), F[keep], n[keep]))
    return accs


def bonus_tables(model: LatentModel, counts: np.ndarray, cfg: BonusConfig) -> np.ndarray:
    """Bonus (or penalty magnitude) for every ``(h, window, action)``."""
    accs = _covariances(model, counts, cfg.lam)
    out = np.array([bonus_table(acc, model.encode[h], cfg) for h, acc in enumerate(accs)])
    # no data constrains unseen pairs, so they get the largest value any feature in the
    # simplex can reach (||f||_2 <= 1 and Sigma >= lam I)
    out[~model.seen] = max_bonus(cfg)
    return out


def max_bonus(cfg: BonusConfig) -> float:
    if cfg.truncate:
        return min(cfg.alpha / np.sqrt(cfg.lam), cfg.truncation_cap)
    return cfg.alpha / cfg.lam


def _bonus_stats(bonus: np.ndarray, space: WindowSpace) -> list[tuple[float, float]]:
    stats = []
    for h in range(bonus.shape[0]):
        vals = bonus[h][space.valid_at(h)]
        stats.append((float(vals.mean()), float(vals.max())))
    return stats


def _eval_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k, 7]).generate_state(1)[0])


def run_online(pomdp: TabularPomdp, cfg: AgentConfig,
               budget: int = DEFAULT_NODE_BUDGET) -> OnlineResult:
    """Online exploration; deterministic given ``cfg``."""
    H, A, O = pomdp.horizon, pomdp.n_actions, pomdp.n_obs
    L = cfg.L
    space = WindowSpace(O, A, L)
    W = len(space)
    main = np.zeros((H, W, A, O))
    aux = np.zeros((H, W, A, O))
    datasets = [TransitionDataset(h) for h in range(H)]
    aux_datasets = [TransitionDataset(h) for h in range(H)]
    init_counts = np.zeros(O)
    pi = WindowPolicy.uniform(space, H)
    tv_beliefs = None
    if cfg.track_model_tv:
        tv_beliefs = window_beliefs(pomdp, L, H - 1, budget)
    policies, logs = [], []
    model = None
    result = None
    for k in range(1, cfg.K + 1):
        for h in range(H):
            col = collect_rollout(pomdp, pi, h, L, np.random.default_rng([cfg.seed, k, h]))
            init_counts[col.observations[0]] += 1
            if col.main is not None:
                t, (x, a, o) = col.main
                main[t, space.index(x), a, o] += 1
                datasets[t].add(x, a, o)
            for t, (x, a, o) in col.extra:
                aux[t, space.index(x), a, o] += 1
                aux_datasets[t].add(x, a, o)
        model = fit_counts(main + aux, cfg.m, cfg.fit, space=space,
                           init_obs=init_counts / init_counts.sum())
        # steps without main records (tail band) take their covariance from the aux buffer
        cov_counts = np.where(main.sum(axis=(1, 2, 3))[:, None, None, None] > 0, main, aux)
        if cfg.bonus_enabled:
            alpha, lam = schedule(k, cfg.m, cfg.schedule)
            bcfg = BonusConfig(alpha, lam, cfg.bonus.truncate, cfg.bonus.truncation_cap)
            bonuses = bonus_tables(model, cov_counts, bcfg)
        else:
            bonuses = np.zeros((H, W, A))
        result = plan(model, pomdp.reward, bonuses)
        pi = result.policy
        ret, _ = evaluate_policy(pomdp, pi, cfg.eval_episodes, seed=_eval_seed(cfg.seed, k))
        tv = None
        if tv_beliefs is not None:
            tv = float(np.mean([model_tv_error(model, pomdp, L, h, beliefs=tv_beliefs[h])
                                for h in range(H - 1)] or [0.0]))
        stats = _bonus_stats(bonuses, space)
        logs.append(EpisodeLog(k, ret, result.value, tv,
                               float(np.mean([s[0] for s in stats])),
                               float(np.max([s[1] for s in stats])), stats))
        policies.append(pi)
        log.debug("episode %d return %.3f plan value %.3f", k, ret, result.value)
    return OnlineResult(policies, logs, model, main, aux, datasets, aux_datasets, result.value)


def collect_offline_datasets(pomdp: TabularPomdp, policy: WindowPolicy, L: int, n_episodes: int,
                             seed: int) -> list[TransitionDataset]:
    """Per-step ``(x_h, a_h, o_{h+1})`` records from full episodes of ``policy``."""
    batch = sample_episodes(pomdp, policy, n_episodes, np.random.default_rng(seed))
    datasets = [TransitionDataset(h) for h in range(pomdp.horizon)]
    for obs, act in zip(batch.observations, batch.actions):
        xs = windows_of_trajectory(obs, act, L)
        for h, ds in enumerate(datasets):
            ds.add(xs[h], int(act[h]), int(obs[h + 1]))
    return datasets


@dataclass
class OfflineResult:
    policy: WindowPolicy
    pessimistic_value: float
    model: LatentModel
    penalties: np.ndarray


def run_offline(datasets: Sequence[TransitionDataset], reward: np.ndarray, cfg: AgentConfig,
                space: WindowSpace) -> OfflineResult:
    """Fit once, penalize by the dataset covariance, plan pessimistically."""
    if not datasets or any(len(ds) == 0 for ds in datasets):
        raise EmptyDataset("offline learning needs records for every step")
    counts = np.array([ds.counts(space) for ds in datasets])
    init = np.zeros(space.n_obs)
    for x, _, _ in datasets[0].records:
        init[x.last_obs] += 1
    model = fit_counts(counts, cfg.m, cfg.fit, space=space, init_obs=init / init.sum())
    pcfg = BonusConfig(cfg.bonus.alpha, cfg.bonus.lam, cfg.bonus.truncate,
                       cfg.bonus.truncation_cap, "pessimism")
    penalties = bonus_tables(model, counts, pcfg)
    result = plan(model, reward, penalties, pessimism=True)
    return OfflineResult(result.policy, result.value, model, penalties)


def optimal_window_policy(pomdp: TabularPomdp, L: int, budget: int = DEFAULT_NODE_BUDGET
                          ) -> PlanResult:
    """Plan in the exact factorized model; optimal when the POMDP is L-decodable."""
    from .latent import exact_latent_model

    return plan(exact_latent_model(pomdp, L, budget), pomdp.reward)
