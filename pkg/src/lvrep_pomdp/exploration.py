"""Ellipsoid exploration bonus (optimism) and penalty (pessimism) over latent features."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite

DENSE_REFRESH_MAX_DIM = 64


@dataclass(frozen=True)
class BonusConfig:
    """``truncate=True`` gives ``min(alpha * ||f||_{Sigma^-1}, cap)``; otherwise ``alpha * f' Sigma^-1 f``."""

    alpha: float = 1.0
    lam: float = 1.0
    truncate: bool = True
    truncation_cap: float = 2.0
    mode: str = "optimism"

    def __post_init__(self) -> None:
        for name in ("alpha", "lam", "truncation_cap"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and positive, got {v}")
        if self.mode not in ("optimism", "pessimism"):
            raise ValueError(f"mode must be 'optimism' or 'pessimism', got {self.mode!r}")


@dataclass
class CovarianceAccumulator:
    """``Sigma = lam * I + sum_i f_i f_i^T`` for one step.

    For ``dim <= DENSE_REFRESH_MAX_DIM`` the inverse is applied through a
    Cholesky factor recomputed lazily after updates; above that a rank-one
    (Sherman-Morrison) inverse is maintained instead.
    """

    step: int
    dim: int
    lam: float
    matrix: np.ndarray = field(init=False)
    count: int = field(init=False, default=0)
    use_inverse_updates: bool = False

    def __post_init__(self) -> None:
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        self.matrix = self.lam * np.eye(self.dim)
        self._inverse = np.eye(self.dim) / self.lam
        self._factor = None
        if self.dim > DENSE_REFRESH_MAX_DIM:
            self.use_inverse_updates = True

    def copy(self) -> "CovarianceAccumulator":
        new = CovarianceAccumulator(self.step, self.dim, self.lam, self.use_inverse_updates)
        new.matrix = self.matrix.copy()
        new.count = self.count
        new._inverse = self._inverse.copy()
        return new

    def absorb(self, f: np.ndarray) -> None:
        """In-place rank-one update."""
        self.matrix += np.outer(f, f)
        self.count += 1
        self._factor = None
        inv_f = self._inverse @ f
        self._inverse -= np.outer(inv_f, inv_f) / (1.0 + f @ inv_f)

    def inverse_quadratic(self, f: np.ndarray) -> float:
        """``f^T Sigma^{-1} f`` without forming the inverse on the dense path."""
        f = np.asarray(f, dtype=float)
        if self.use_inverse_updates:
            return float(f @ self._inverse @ f)
        if self._factor is None:
            try:
                self._factor = scipy.linalg.cho_factor(self.matrix, lower=True)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefinite(f"covariance at step {self.step} is not PD") from exc
        return float(f @ scipy.linalg.cho_solve(self._factor, f))


def accumulate(acc: CovarianceAccumulator, feature: np.ndarray) -> CovarianceAccumulator:
    """Return a new accumulator with ``feature feature^T`` added."""
    f = np.asarray(getattr(feature, "values", feature), dtype=float)
    if f.shape != (acc.dim,):
        raise ValueError(f"feature has shape {f.shape}, expected ({acc.dim},)")
    new = acc.copy()
    new.absorb(f)
    return new


def accumulate_all(acc: CovarianceAccumulator, features: Iterable[np.ndarray],
                   counts: Sequence[float] | None = None) -> CovarianceAccumulator:
    """Add many features at once; ``counts[i]`` repeats feature ``i`` that many times."""
    new = acc.copy()
    F = np.array([np.asarray(getattr(f, "values", f), dtype=float) for f in features])
    if F.size == 0:
        return new
    c = np.ones(F.shape[0]) if counts is None else np.asarray(counts, dtype=float)
    new.matrix += (F * c[:, None]).T @ F
    new.matrix = 0.5 * (new.matrix + new.matrix.T)
    new.count += int(round(c.sum()))
    new._factor = None
    if new.use_inverse_updates:
        for f, n in zip(F, c):
            for _ in range(int(n)):
                inv_f = new._inverse @ f
                new._inverse -= np.outer(inv_f, inv_f) / (1.0 + f @ inv_f)
    return new


def bonus(acc: CovarianceAccumulator, feature: np.ndarray, cfg: BonusConfig) -> float:
    """Bonus magnitude for one feature; the caller subtracts it in pessimism mode."""
    f = np.asarray(getattr(feature, "values", feature), dtype=float)
    q = max(acc.inverse_quadratic(f), 0.0)
    if cfg.truncate:
        return min(cfg.alpha * math.sqrt(q), cfg.truncation_cap)
    return cfg.alpha * q


def bonus_table(acc: CovarianceAccumulator, features: np.ndarray, cfg: BonusConfig) -> np.ndarray:
    """Vectorized :func:`bonus` over the leading axes of ``features`` (..., m)."""
    F = features.reshape(-1, acc.dim)
    if acc.use_inverse_updates:
        q = np.einsum("ni,ij,nj->n", F, acc._inverse, F)
    else:
        try:
            factor = scipy.linalg.cho_factor(acc.matrix, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"covariance at step {acc.step} is not PD") from exc
        q = np.einsum("ni,in->n", F, scipy.linalg.cho_solve(factor, F.T))
    q = np.maximum(q, 0.0)
    out = np.minimum(cfg.alpha * np.sqrt(q), cfg.truncation_cap) if cfg.truncate else cfg.alpha * q
    return out.reshape(features.shape[:-1])


@dataclass(frozen=True)
class ScheduleConfig:
    c_alpha: float = 1.0
    c_lambda: float = 1.0


def schedule(k: int, m: int, base: ScheduleConfig = ScheduleConfig()) -> tuple[float, float]:
    """Episode-``k`` scales ``alpha_k = c_alpha sqrt(log(k+1))`` and ``lam = c_lambda log(k+1)``.

    ``m`` (the feature dimension) is accepted for interface symmetry; the
    logarithmic stand-in does not depend on it.
    """
    if k < 1:
        raise ValueError("episode index starts at 1")
    lg = math.log(k + 1)
    return base.c_alpha * math.sqrt(lg), base.c_lambda * lg


BONUS_TRACE_COLUMNS = ("episode", "step", "meanBonus", "maxBonus")


def write_bonus_trace(rows: Sequence[tuple[int, int, float, float]], path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(BONUS_TRACE_COLUMNS)
        for ep, h, mean, mx in rows:
            writer.writerow([ep, h, repr(float(mean)), repr(float(mx))])
