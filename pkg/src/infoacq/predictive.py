"""Entropy and mutual-information estimators over posterior-predictive tensors.

Every estimator consumes a :class:`PosteriorPredictions` holding natural-log
class probabilities of shape ``[N candidates, K posterior samples, C classes]``.
All quantities are in nats.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

EXACT_CONFIG_LIMIT = 10_000
DEFAULT_MC_SAMPLES = 8192
PROB_FLOOR = 1e-300

# Upper bound on floats materialized per candidate chunk while scoring.
_CHUNK_ELEMENTS = 4_000_000


@dataclass(frozen=True)
class PosteriorPredictions:
    """Log-probabilities ``log p(y | x_n, omega_k)`` for N candidates and K samples."""

    log_probs: np.ndarray
    _probs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 3:
            raise ValueError(f"log_probs must be [N, K, C], got shape {lp.shape}")
        if lp.shape[1] < 1 or lp.shape[2] < 2:
            raise ValueError(f"need K >= 1 and C >= 2, got K={lp.shape[1]}, C={lp.shape[2]}")
        if not np.all(np.isfinite(lp)):
            raise ValueError("log_probs contains NaN or Inf")
        if lp.size and lp.max() > 1e-9:
            raise ValueError("log_probs must be <= 0")
        if lp.size:
            norm = logsumexp(lp, axis=2)
            if np.max(np.abs(norm)) > 1e-6:
                raise ValueError("each [n, k] slice must be a normalized distribution")
        lp = np.minimum(lp, 0.0)
        lp.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)
        probs = np.exp(lp)
        probs.setflags(write=False)
        object.__setattr__(self, "_probs", probs)

    @classmethod
    def from_probs(cls, probs) -> "PosteriorPredictions":
        """Build from plain probabilities; zeros are floored before the log."""
        p = np.asarray(probs, dtype=np.float64)
        return cls(np.log(np.maximum(p, PROB_FLOOR)))

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    @property
    def n(self) -> int:
        return self.log_probs.shape[0]

    @property
    def k(self) -> int:
        return self.log_probs.shape[1]

    @property
    def c(self) -> int:
        return self.log_probs.shape[2]

    def subset(self, rows) -> "PosteriorPredictions":
        return PosteriorPredictions(self.log_probs[np.asarray(rows, dtype=np.int64)])


def _entropy(p: np.ndarray, axis=-1) -> np.ndarray:
    # 0 log 0 = 0; mass at or below the floor counts as zero.
    p = np.where(p > 10 * PROB_FLOOR, p, 0.0)
    return -np.sum(p * np.log(np.maximum(p, PROB_FLOOR)), axis=axis)


def _check_index(preds: PosteriorPredictions, n: int) -> int:
    if not 0 <= n < preds.n:
        raise IndexError(f"candidate index {n} out of range for N={preds.n}")
    return int(n)


def log_marginal_predictive(preds: PosteriorPredictions, n: int) -> np.ndarray:
    """``log p(y | x_n, D)``: log-mean-exp of the K posterior slices."""
    n = _check_index(preds, n)
    return logsumexp(preds.log_probs[n], axis=0) - np.log(preds.k)


def predictive_entropy(preds: PosteriorPredictions, n: int) -> float:
    n = _check_index(preds, n)
    return float(_entropy(preds.probs[n].mean(axis=0)))


def expected_conditional_entropy(preds: PosteriorPredictions, n: int) -> float:
    n = _check_index(preds, n)
    return float(_entropy(preds.probs[n], axis=-1).mean())


def predictive_entropies(preds: PosteriorPredictions) -> np.ndarray:
    """Vectorized :func:`predictive_entropy` over all candidates."""
    return _entropy(preds.probs.mean(axis=1), axis=-1)


def expected_conditional_entropies(preds: PosteriorPredictions) -> np.ndarray:
    """Vectorized :func:`expected_conditional_entropy` over all candidates."""
    return _entropy(preds.probs, axis=-1).mean(axis=1)


def _check_members(preds: PosteriorPredictions, indices: Sequence[int]) -> tuple[int, ...]:
    members = tuple(int(i) for i in indices)
    if len(set(members)) != len(members):
        raise ValueError(f"duplicate indices in {members}")
    for i in members:
        _check_index(preds, i)
    return members


def _expand_configs(config_probs: np.ndarray, member_probs: np.ndarray) -> np.ndarray:
    """Tensor-product expansion: ``[R, K] x [K, C] -> [R * C, K]``, row ``r * C + c``."""
    r, k = config_probs.shape
    c = member_probs.shape[1]
    return (config_probs[:, None, :] * member_probs.T[None, :, :]).reshape(r * c, k)


def joint_entropy_exact(
    preds: PosteriorPredictions,
    indices: Sequence[int],
    limit: int = EXACT_CONFIG_LIMIT,
) -> float:
    """Joint predictive entropy of ``indices`` by enumerating all C^B configurations."""
    members = _check_members(preds, indices)
    n_configs = preds.c ** len(members)
    if n_configs > limit:
        raise ValueError(
            f"{n_configs} configurations exceed the exact limit {limit}; use joint_entropy_mc"
        )
    config_probs = np.ones((1, preds.k))
    for i in members:
        config_probs = _expand_configs(config_probs, preds.probs[i])
    return float(_entropy(config_probs.mean(axis=1)))


def _sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a row-stochastic matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    out = (cdf < u[:, None]).sum(axis=1)
    return np.minimum(out, probs.shape[1] - 1)


def joint_entropy_mc(
    preds: PosteriorPredictions,
    indices: Sequence[int],
    m: int = DEFAULT_MC_SAMPLES,
    rng: np.random.Generator | None = None,
) -> float:
    """Monte Carlo joint entropy from ``m`` configurations sampled from the joint.

    Each sample picks a posterior draw ``k`` uniformly and then every member's
    label from ``p(y_b | omega_k)``; the estimate is the mean negative log of
    the exact mixture probability of the sampled configuration.
    """
    members = _check_members(preds, indices)
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(rng)
    state = _sample_state(JointState.empty(preds.k), preds, members, m, rng)
    return state.entropy()


class JointMode(enum.Enum):
    EXACT = "exact"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class JointState:
    """Incremental joint distribution over the labels of ``member_indices``.

    In exact mode ``config_probs[r, k]`` is ``p(config r | omega_k)`` over all
    C^B configurations. In Monte Carlo mode each row is one configuration
    sampled from the joint; ``components`` records the posterior draw that
    generated it and ``importance_log_weights`` its log mixture probability.
    """

    member_indices: tuple[int, ...]
    config_probs: np.ndarray
    mode: JointMode = JointMode.EXACT
    importance_log_weights: np.ndarray | None = None
    components: np.ndarray | None = None

    @classmethod
    def empty(cls, k: int) -> "JointState":
        return cls((), np.ones((1, k)))

    @property
    def n_configs(self) -> int:
        return self.config_probs.shape[0]

    def entropy(self) -> float:
        if self.mode is JointMode.EXACT:
            return float(_entropy(self.config_probs.mean(axis=1)))
        return float(-np.mean(self.importance_log_weights))


def _log_mixture(config_probs: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(config_probs.mean(axis=1), PROB_FLOOR))


def _sample_state(state, preds, new_members, m, rng) -> JointState:
    """Draw ``m`` joint configurations covering ``state`` members plus ``new_members``."""
    k = preds.k
    if state.mode is JointMode.MONTE_CARLO:
        components = state.components
        rows = state.config_probs
    else:
        components = rng.integers(0, k, size=m)
        # Draw a full configuration of the existing members from column k.
        picked = np.zeros(m, dtype=np.int64)
        if state.n_configs > 1:
            for kk in np.unique(components):
                where = np.flatnonzero(components == kk)
                col = state.config_probs[:, kk]
                picked[where] = rng.choice(state.n_configs, size=len(where), p=col / col.sum())
        rows = state.config_probs[picked]
    rows = rows.copy()
    for i in new_members:
        p = preds.probs[i]
        labels = _sample_categorical(p[components], rng)
        rows *= p[:, labels].T
    return JointState(
        member_indices=state.member_indices + tuple(new_members),
        config_probs=rows,
        mode=JointMode.MONTE_CARLO,
        importance_log_weights=_log_mixture(rows),
        components=components,
    )


def joint_extend(
    state: JointState,
    preds: PosteriorPredictions,
    new_index: int,
    rng: np.random.Generator | None = None,
    m: int = DEFAULT_MC_SAMPLES,
    limit: int = EXACT_CONFIG_LIMIT,
) -> JointState:
    """Add ``new_index`` to the joint.

    An exact state stays exact while the configuration count fits under
    ``limit``; past it the state is resampled into ``m`` Monte Carlo
    configurations, which requires ``rng``.
    """
    new_index = _check_index(preds, new_index)
    if new_index in state.member_indices:
        raise ValueError(f"index {new_index} is already a member")
    if state.config_probs.shape[1] != preds.k:
        raise ValueError("state and predictions disagree on K")
    if state.mode is JointMode.EXACT and state.n_configs * preds.c <= limit:
        return JointState(
            member_indices=state.member_indices + (new_index,),
            config_probs=_expand_configs(state.config_probs, preds.probs[new_index]),
        )
    if rng is None:
        raise ValueError(
            f"extending to {state.n_configs * preds.c} configurations exceeds the exact "
            f"limit {limit}; pass an rng to switch to Monte Carlo mode"
        )
    return _sample_state(state, preds, [new_index], m, rng)


def to_monte_carlo(state: JointState, preds: PosteriorPredictions, m: int,
                   rng: np.random.Generator) -> JointState:
    """Resample an exact state into ``m`` Monte Carlo configurations."""
    if state.mode is JointMode.MONTE_CARLO:
        return state
    return _sample_state(state, preds, [], m, rng)


def candidate_joint_entropies(
    state: JointState,
    preds: PosteriorPredictions,
    candidates: Sequence[int] | np.ndarray,
) -> np.ndarray:
    """Joint entropy of ``members + {x}`` for every candidate ``x``.

    Exact states enumerate the new label exactly. Monte Carlo states use the
    sampled member configurations and sum over the candidate's label exactly,
    reweighting each sample by the inverse of its mixture probability.
    """
    candidates = np.asarray(candidates, dtype=np.int64)
    k, c = preds.k, preds.c
    out = np.empty(len(candidates))
    if len(candidates) == 0:
        return out
    w = state.config_probs
    r = w.shape[0]
    chunk = max(1, _CHUNK_ELEMENTS // (r * c))
    if state.mode is JointMode.MONTE_CARLO:
        inv_mix = np.exp(-state.importance_log_weights)
    for start in range(0, len(candidates), chunk):
        idx = candidates[start:start + chunk]
        p = preds.probs[idx]  # [n, K, C]
        flat = p.transpose(1, 0, 2).reshape(k, -1)
        joint = (w @ flat).reshape(r, len(idx), c) / k
        logj = np.log(np.maximum(joint, PROB_FLOOR))
        if state.mode is JointMode.EXACT:
            out[start:start + len(idx)] = -np.einsum("rnc,rnc->n", joint, logj)
        else:
            out[start:start + len(idx)] = -np.einsum(
                "r,rnc,rnc->n", inv_mix, joint, logj) / r
    return out
