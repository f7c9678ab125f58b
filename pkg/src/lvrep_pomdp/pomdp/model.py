"""Finite POMDP container and exact belief filtering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ZeroProbabilityObservation

ROW_TOL = 1e-9
NORMALIZER_EPS = 1e-12


def _check_stochastic(name: str, table: np.ndarray) -> None:
    if np.any(table < 0):
        raise ValueError(f"{name} has negative entries")
    sums = table.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_TOL):
        raise ValueError(f"{name} rows must sum to 1 (max deviation {np.abs(sums - 1.0).max():.3g})")


@dataclass(frozen=True, eq=False)
class TabularPomdp:
    """A stationary finite-horizon POMDP.

    Array layout:
        rho0:   (S,)        initial state distribution
        trans:  (S, A, S)   trans[s, a, s'] = P(s' | s, a)
        emit:   (S, O)      emit[s, o] = P(o | s)
        reward: (O, A)      reward[o, a] in [0, 1]

    Observation ``o_0`` is emitted from ``s_0 ~ rho0``; the return of an episode
    is ``sum_{h=0}^{H-1} reward[o_h, a_h]``.
    """

    rho0: np.ndarray
    trans: np.ndarray
    emit: np.ndarray
    reward: np.ndarray
    horizon: int
    name: str = "pomdp"
    state_names: tuple[str, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        for attr in ("rho0", "trans", "emit", "reward"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        S = self.rho0.shape[0]
        if self.trans.ndim != 3 or self.trans.shape[0] != S or self.trans.shape[2] != S:
            raise ValueError(f"trans must have shape (S, A, S), got {self.trans.shape}")
        if self.emit.ndim != 2 or self.emit.shape[0] != S:
            raise ValueError(f"emit must have shape (S, O), got {self.emit.shape}")
        if self.reward.shape != (self.emit.shape[1], self.trans.shape[1]):
            raise ValueError(f"reward must have shape (O, A), got {self.reward.shape}")
        if int(self.horizon) < 1:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "horizon", int(self.horizon))
        _check_stochastic("rho0", self.rho0)
        _check_stochastic("trans", self.trans)
        _check_stochastic("emit", self.emit)
        if np.any(self.reward < 0) or np.any(self.reward > 1):
            raise ValueError("reward values must lie in [0, 1]")

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def n_actions(self) -> int:
        return self.trans.shape[1]

    @property
    def n_obs(self) -> int:
        return self.emit.shape[1]

    def with_reward(self, reward: np.ndarray) -> "TabularPomdp":
        return TabularPomdp(self.rho0, self.trans, self.emit, reward, self.horizon,
                            name=self.name, state_names=self.state_names)

    def with_horizon(self, horizon: int) -> "TabularPomdp":
        return TabularPomdp(self.rho0, self.trans, self.emit, self.reward, horizon,
                            name=self.name, state_names=self.state_names)


def _normalize(unnorm: np.ndarray) -> np.ndarray:
    z = unnorm.sum()
    if z <= NORMALIZER_EPS:
        raise ZeroProbabilityObservation(f"observation has probability {z:.3g}")
    return unnorm / z


def belief_init(pomdp: TabularPomdp, o0: int) -> np.ndarray:
    """Posterior over ``s_0`` after seeing the first observation."""
    return _normalize(pomdp.rho0 * pomdp.emit[:, o0])


def predict_states(pomdp: TabularPomdp, b: np.ndarray, a: int) -> np.ndarray:
    """Push a belief through the transition kernel (before the next emission)."""
    return b @ pomdp.trans[:, a, :]


def belief_update(pomdp: TabularPomdp, b: np.ndarray, a: int, o_next: int) -> np.ndarray:
    return _normalize(predict_states(pomdp, b, a) * pomdp.emit[:, o_next])


def obs_prob(pomdp: TabularPomdp, b: np.ndarray, a: int) -> np.ndarray:
    """Exact one-step predicted observation distribution ``P(o' | b, a)``."""
    return predict_states(pomdp, b, a) @ pomdp.emit


def belief_update_batch(pomdp: TabularPomdp, b: np.ndarray, a: np.ndarray,
                        o_next: np.ndarray) -> np.ndarray:
    """Vectorized :func:`belief_update` over rows of ``b`` (shape (N, S))."""
    pushed = np.einsum("ns,nst->nt", b, pomdp.trans[:, a, :].transpose(1, 0, 2))
    unnorm = pushed * pomdp.emit[:, o_next].T
    z = unnorm.sum(axis=1, keepdims=True)
    if np.any(z <= NORMALIZER_EPS):
        raise ZeroProbabilityObservation("zero-probability observation in batch update")
    return unnorm / z


def obs_prob_batch(pomdp: TabularPomdp, b: np.ndarray, a: np.ndarray) -> np.ndarray:
    pushed = np.einsum("ns,nst->nt", b, pomdp.trans[:, a, :].transpose(1, 0, 2))
    return pushed @ pomdp.emit
