"""Latent-variable observation models ``p_h(z | x, a)``, ``p_h(o' | z)`` and their EM fit.

The observation model at step ``h`` is the mixture

    p_h(o' | x, a) = sum_z p_h(z | x, a) p_h(o' | z)

fit by maximum likelihood with exact EM (the E-step sets the variational
posterior to the exact posterior, which makes the lower bound tight).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigError, EmptyDataset, ZeroProbabilityObservation
from .pomdp.io import check_header
from .pomdp.model import NORMALIZER_EPS, TabularPomdp, obs_prob
from .pomdp.oracle import DEFAULT_NODE_BUDGET, window_beliefs
from .pomdp.windows import Window, WindowSpace

MODEL_FORMAT = "lvrep-latent-model"
MODEL_VERSION = 1

Record = tuple[Window, int, int]


@dataclass
class TransitionDataset:
    """Triples ``(x_h, a_h, o_{h+1})`` collected for one step."""

    step: int
    records: list[Record] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def add(self, x: Window, a: int, o_next: int) -> None:
        if self.records and x.length != self.records[0][0].length:
            raise ValueError("all windows in a dataset must share one length")
        self.records.append((x, int(a), int(o_next)))

    def extend(self, records: Iterable[Record]) -> None:
        for rec in records:
            self.add(*rec)

    def counts(self, space: WindowSpace) -> np.ndarray:
        """Record counts indexed ``[window, action, next_obs]``."""
        c = np.zeros((len(space), space.n_actions, space.n_obs))
        for x, a, o in self.records:
            c[space.index(x), a, o] += 1
        return c


@dataclass
class FitConfig:
    n_latent: int = 2
    max_iters: int = 200
    tol: float = 1e-7
    floor_prob: float = 1e-6
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_latent < 1 or self.max_iters < 1:
            raise ValueError("n_latent and max_iters must be positive")
        if self.tol < 0 or not 0 <= self.floor_prob < 1.0 / self.n_latent:
            raise ValueError("invalid tol or floor_prob")


class LatentModel:
    """Step-indexed factorized model over a :class:`WindowSpace`.

    ``encode[h]`` has shape (W, A, m), ``decode[h]`` shape (m, O); ``seen[h]``
    marks the (window, action) pairs that had data at fit time. Unseen pairs
    encode to the uniform distribution. ``init_obs`` is the distribution of
    ``o_0`` used to average planner values over initial windows.
    """

    def __init__(self, space: WindowSpace, encode: np.ndarray, decode: np.ndarray,
                 seen: np.ndarray | None = None, init_obs: np.ndarray | None = None,
                 fit_trace: list[list[float]] | None = None):
        encode = np.asarray(encode, dtype=float)
        decode = np.asarray(decode, dtype=float)
        H, W, A, m = encode.shape
        if (W, A) != (len(space), space.n_actions) or decode.shape != (H, m, space.n_obs):
            raise ValueError(f"table shapes {encode.shape}, {decode.shape} do not match the window space")
        for name, t in (("encode", encode), ("decode", decode)):
            if np.any(t < 0) or np.any(np.abs(t.sum(axis=-1) - 1.0) > 1e-9):
                raise ValueError(f"{name} rows must be distributions")
        self.space = space
        self.encode = encode
        self.decode = decode
        self.seen = np.ones((H, W, A), bool) if seen is None else np.asarray(seen, bool)
        if init_obs is None:
            init_obs = np.full(space.n_obs, 1.0 / space.n_obs)
        self.init_obs = np.asarray(init_obs, dtype=float)
        self.fit_trace = fit_trace or []
        for arr in (self.encode, self.decode, self.seen, self.init_obs):
            arr.setflags(write=False)

    @property
    def n_latent(self) -> int:
        return self.encode.shape[3]

    @property
    def horizon(self) -> int:
        return self.encode.shape[0]

    def encode_row(self, h: int, x: Window, a: int) -> tuple[np.ndarray, bool]:
        """``p_h(. | x, a)`` and whether the pair was covered by data."""
        w = self.space.index(x)
        return self.encode[h, w, a], bool(self.seen[h, w, a])

    def predictive(self, h: int) -> np.ndarray:
        """``P[w, a, o'] = sum_z encode * decode`` for every pair at step ``h``."""
        return self.encode[h] @ self.decode[h]

    def permuted(self, perm: Sequence[int]) -> "LatentModel":
        """Relabel latent index ``z`` as ``perm[z]``."""
        inv = np.argsort(perm)
        return LatentModel(self.space, self.encode[..., inv], self.decode[:, inv, :], self.seen,
                           self.init_obs)


def predicted_obs_prob(model: LatentModel, h: int, x: Window, a: int) -> np.ndarray:
    enc, _ = model.encode_row(h, x, a)
    return enc @ model.decode[h]


def _posterior_rows(prior: np.ndarray, likelihood: np.ndarray) -> np.ndarray:
    unnorm = prior * likelihood
    z = unnorm.sum(axis=-1, keepdims=True)
    if np.any(z <= NORMALIZER_EPS):
        raise ZeroProbabilityObservation("observation has zero probability under the model")
    return unnorm / z


def exact_posterior(model: LatentModel, h: int, x: Window, a: int, o_next: int) -> np.ndarray:
    """``q*(z | x, a, o') ∝ p(z | x, a) p(o' | z)``."""
    enc, _ = model.encode_row(h, x, a)
    return _posterior_rows(enc, model.decode[h][:, o_next])


class VariationalPosterior:
    """Table ``q(z | x, a, o')`` for one step, shape (W, A, O, m)."""

    def __init__(self, space: WindowSpace, table: np.ndarray):
        table = np.asarray(table, dtype=float)
        if table.shape[:3] != (len(space), space.n_actions, space.n_obs):
            raise ValueError(f"posterior table has shape {table.shape}")
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=-1) - 1.0) > 1e-9):
            raise ValueError("posterior rows must be distributions")
        self.space = space
        self.table = table

    def row(self, x: Window, a: int, o_next: int) -> np.ndarray:
        return self.table[self.space.index(x), a, o_next]

    @classmethod
    def exact(cls, model: LatentModel, h: int) -> "VariationalPosterior":
        enc = model.encode[h][:, :, None, :]
        lik = model.decode[h].T[None, None, :, :]
        unnorm = enc * lik
        return cls(model.space, unnorm / unnorm.sum(axis=-1, keepdims=True))

    @classmethod
    def from_prior(cls, model: LatentModel, h: int) -> "VariationalPosterior":
        table = np.broadcast_to(model.encode[h][:, :, None, :],
                                (len(model.space), model.space.n_actions, model.space.n_obs,
                                 model.n_latent))
        return cls(model.space, table.copy())


def elbo_rows(prior: np.ndarray, lik: np.ndarray, q: np.ndarray) -> np.ndarray:
    """ELBO ``E_q[log lik] - KL(q || prior)`` along the last axis; ``0 log 0 = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        pos = q > 0
        term = np.where(pos, q * (np.log(np.where(pos, lik, 1.0)) - np.log(np.where(pos, q, 1.0))
                                  + np.log(np.where(pos, prior, 1.0))), 0.0)
    return term.sum(axis=-1)


def elbo(model: LatentModel, q: VariationalPosterior, h: int, record: Record) -> float:
    x, a, o = record
    enc, _ = model.encode_row(h, x, a)
    return float(elbo_rows(enc, model.decode[h][:, o], q.row(x, a, o)))


def log_marginal(model: LatentModel, h: int, record: Record) -> float:
    x, a, o = record
    return float(np.log(predicted_obs_prob(model, h, x, a)[o]))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    pos = p > 0
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(q[pos]))))


def _apply_floor(rows: np.ndarray, floor: float) -> np.ndarray:
    # mixing with the uniform keeps rows normalized and every entry >= floor
    k = rows.shape[-1]
    return (1.0 - k * floor) * rows + floor


def _log_likelihood(counts: np.ndarray, mix: np.ndarray) -> float:
    pos = counts > 0
    return float(np.sum(counts[pos] * np.log(mix[pos])))


def _em_step_fit(counts: np.ndarray, m: int, cfg: FitConfig, rng: np.random.Generator
                 ) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """EM on aggregated counts ``[pair, o']``; returns encode rows, decode table and LL trace."""
    P, O = counts.shape
    n = counts.sum(axis=1)
    enc = rng.dirichlet(np.ones(m), size=P)
    dec = rng.dirichlet(np.ones(O), size=m)
    trace = [_log_likelihood(counts, enc @ dec)]
    for _ in range(cfg.max_iters):
        mix = enc @ dec
        safe = np.where(mix > 0, mix, 1.0)
        # resp[p, o, z] = posterior of z for records (p, o), weighted by counts
        resp = enc[:, None, :] * dec.T[None, :, :] / safe[:, :, None]
        weighted = counts[:, :, None] * resp
        enc = weighted.sum(axis=1) / n[:, None]
        mass = weighted.sum(axis=(0, 1))
        new_dec = weighted.sum(axis=0).T
        live = mass > 0
        dec = np.where(live[:, None], new_dec / np.where(live, mass, 1.0)[:, None], dec)
        trace.append(_log_likelihood(counts, enc @ dec))
        if trace[-1] - trace[-2] < cfg.tol:
            break
    return enc, dec, trace


def fit_mle(datasets: Sequence[TransitionDataset], n_latent: int | None = None,
            config: FitConfig | None = None, *, space: WindowSpace,
            init_obs: np.ndarray | None = None) -> LatentModel:
    """Per-step EM maximum-likelihood fit of the mixture observation model.

    ``datasets[h]`` holds the step-``h`` records. The initial-observation
    distribution defaults to the frequency of ``o_0`` among step-0 windows.
    """
    for h, ds in enumerate(datasets):
        if len(ds) == 0:
            raise EmptyDataset(f"no records for step {h}")
    counts = np.array([ds.counts(space) for ds in datasets])
    if init_obs is None:
        c = np.zeros(space.n_obs)
        for x, _, _ in datasets[0].records:
            c[x.last_obs] += 1
        init_obs = c / c.sum()
    return fit_counts(counts, n_latent, config, space=space, init_obs=init_obs)


def fit_counts(counts: np.ndarray, n_latent: int | None = None, config: FitConfig | None = None,
               *, space: WindowSpace, init_obs: np.ndarray | None = None) -> LatentModel:
    """:func:`fit_mle` on record counts of shape (H, W, A, O)."""
    cfg = config or FitConfig()
    m = cfg.n_latent if n_latent is None else n_latent
    H, W, A, O = counts.shape
    encode = np.full((H, W, A, m), 1.0 / m)
    decode = np.empty((H, m, O))
    seen = np.zeros((H, W, A), bool)
    traces = []
    for h in range(H):
        flat_counts = counts[h].reshape(W * A, O)
        pairs = np.flatnonzero(flat_counts.sum(axis=1) > 0)
        if len(pairs) == 0:
            raise EmptyDataset(f"no records for step {h}")
        rng = np.random.default_rng([cfg.seed, h])
        enc, dec, trace = _em_step_fit(flat_counts[pairs], m, cfg, rng)
        flat = encode[h].reshape(W * A, m)
        flat[pairs] = _apply_floor(enc, cfg.floor_prob)
        decode[h] = _apply_floor(dec, cfg.floor_prob)
        seen[h].reshape(-1)[pairs] = True
        traces.append(trace)
    return LatentModel(space, encode, decode, seen, init_obs, traces)


def dataset_log_likelihood(model: LatentModel, dataset: TransitionDataset) -> float:
    return _log_likelihood(dataset.counts(model.space), model.predictive(dataset.step))


def exact_latent_model(pomdp: TabularPomdp, L: int, budget: int = DEFAULT_NODE_BUDGET,
                       strict: bool = True) -> LatentModel:
    """Ground-truth factorization with ``z = s_{h+1}``.

    ``encode[h](z | x, a) = sum_s p*(s | x) trans(z | s, a)`` and
    ``decode[h] = emit``; windows never reached at step ``h`` stay uniform.
    """
    space = WindowSpace(pomdp.n_obs, pomdp.n_actions, L)
    H, S, A = pomdp.horizon, pomdp.n_states, pomdp.n_actions
    beliefs = window_beliefs(pomdp, L, H - 1, budget, strict=strict)
    encode = np.full((H, len(space), A, S), 1.0 / S)
    seen = np.zeros((H, len(space), A), bool)
    for h, table in enumerate(beliefs):
        for x, b in table.items():
            w = space.index(x)
            encode[h, w] = np.einsum("s,sat->at", b, pomdp.trans)
            seen[h, w] = True
    decode = np.broadcast_to(pomdp.emit, (H, S, pomdp.n_obs)).copy()
    return LatentModel(space, encode, decode, seen, pomdp.rho0 @ pomdp.emit)


def model_tv_error(model: LatentModel, pomdp: TabularPomdp, L: int, h: int,
                   weighting: Mapping[tuple[Window, int], float] | None = None,
                   budget: int = DEFAULT_NODE_BUDGET,
                   beliefs: Mapping[Window, np.ndarray] | None = None) -> float:
    """Weighted mean of ``||p_model(.|x,a) - P(.|b*(x), a)||_1^2`` at step ``h``.

    The default weighting is uniform over the pairs seen in training that are
    reachable at step ``h``.
    """
    if beliefs is None:
        beliefs = window_beliefs(pomdp, L, h, budget)[h]
    if weighting is None:
        weighting = {(x, a): 1.0 for x in beliefs for a in range(pomdp.n_actions)
                     if model.seen[h, model.space.index(x), a]}
    total, norm = 0.0, 0.0
    for (x, a), wt in weighting.items():
        if wt <= 0:
            continue
        if x not in beliefs:
            raise KeyError(f"window {x} is not reachable at step {h}")
        err = np.abs(predicted_obs_prob(model, h, x, a) - obs_prob(pomdp, beliefs[x], a)).sum()
        total += wt * err**2
        norm += wt
    return total / norm if norm > 0 else 0.0


def model_to_dict(model: LatentModel, extra: dict[str, Any] | None = None) -> dict[str, Any]:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "n_obs": model.space.n_obs,
        "n_actions": model.space.n_actions,
        "window_length": model.space.L,
        "n_latent": model.n_latent,
        "horizon": model.horizon,
        "init_obs": model.init_obs.tolist(),
        "encode": model.encode.tolist(),
        "decode": model.decode.tolist(),
        "seen": model.seen.astype(int).tolist(),
    }
    if extra:
        doc.update(extra)
    return doc


def model_from_dict(doc: dict[str, Any]) -> LatentModel:
    check_header(doc, MODEL_FORMAT, MODEL_VERSION)
    try:
        space = WindowSpace(int(doc["n_obs"]), int(doc["n_actions"]), int(doc["window_length"]))
        return LatentModel(space, np.asarray(doc["encode"], float), np.asarray(doc["decode"], float),
                           np.asarray(doc["seen"], bool), np.asarray(doc["init_obs"], float))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid latent model file: {exc}") from exc


def save_model(model: LatentModel, path: str | Path, extra: dict[str, Any] | None = None) -> None:
    Path(path).write_text(yaml.safe_dump(model_to_dict(model, extra), sort_keys=False))


def load_model(path: str | Path) -> LatentModel:
    with open(path) as f:
        return model_from_dict(yaml.safe_load(f))
