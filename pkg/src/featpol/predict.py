"""Point and Monte Carlo estimators built on a posterior trace.

Covers picking the maximum-posterior sample, inferring the substate vector
of an unseen observation against a frozen model, and turning either into an
action prediction (single-state MAP or trace-averaged MMSE).
"""

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distributions import RandomSource
from .model import LatentState, SubstateGrid, action_probabilities

INFER_SWEEPS_DEFAULT = 5
MAX_ASCENT_SWEEPS = 100


@dataclass
class PredictionResult:
    """Action distribution for one query plus the decoded action."""

    action_distribution: np.ndarray
    best_action: int
    substate_draws: list | None = None

    def __post_init__(self):
        self.action_distribution = np.asarray(self.action_distribution, dtype=np.float64)
        if abs(float(self.action_distribution.sum()) - 1.0) > 1e-9:
            raise ValueError("action distribution must sum to 1")
        if self.best_action != int(np.argmax(self.action_distribution)):
            raise ValueError("best_action must be the first argmax of the distribution")


def map_estimate(trace) -> LatentState:
    """The stored sample with the highest recorded log posterior.

    Ties go to the earliest sample.
    """
    if not trace.samples:
        raise ValueError("cannot take a MAP estimate from an empty trace")
    best_idx = 0
    best_lp = trace.samples[0][1]
    for i, (_, lp) in enumerate(trace.samples):
        if lp > best_lp:
            best_idx, best_lp = i, lp
    return trace.samples[best_idx][0]


def _frozen_counts(state: LatentState) -> tuple[np.ndarray, np.ndarray]:
    m0 = np.ascontiguousarray(np.sum(state.S == 0.0, axis=0), dtype=np.float64)
    m1 = np.full(state.K, float(state.S.shape[0])) - m0
    return m0, m1


def infer_substate(z_star: np.ndarray, state: LatentState, grid: SubstateGrid,
                   source: RandomSource, n_sweeps: int = INFER_SWEEPS_DEFAULT,
                   reweight: bool = False, alpha_s_zero: float = 1.0,
                   alpha_s_nonzero: float = 1.0) -> np.ndarray:
    """Draw a substate vector for one unseen observation.

    Runs `n_sweeps` Gibbs sweeps over the coordinates of s*, scoring each
    grid value by the reconstruction likelihood of z* and the substate
    prior with counts frozen at the training set. The action term is absent
    because the query's action is unknown, which also makes `reweight`
    inert; the flag is accepted so callers can pass their fit settings
    through unchanged. Starts from the all-zero vector and never mutates
    `state`.
    """
    z_star = np.asarray(z_star, dtype=np.float64).reshape(-1)
    if z_star.size != state.W.shape[1]:
        raise ValueError(
            f"query has {z_star.size} coordinates, model expects {state.W.shape[1]}")
    if n_sweeps < 1:
        raise ValueError("n_sweeps must be at least 1")
    if state.K == 0:
        return np.zeros(0)

    F = np.ascontiguousarray(state.feature_matrix())
    Fsq = np.ascontiguousarray(np.sum(F * F, axis=1))
    m0, m1 = _frozen_counts(state)
    s = np.zeros((1, state.K))
    resid = z_star.reshape(1, -1).copy()
    u_dummy = np.zeros(1, dtype=np.int64)
    n_actions = state.Phi.shape[1]
    for _ in range(n_sweeps):
        uniforms = source.generator.random((1, state.K))
        _kernels.substate_sweep(s, resid, m0, m1, F, Fsq, state.Phi, u_dummy,
                                grid.values, state.sigma_z2,
                                alpha_s_zero, alpha_s_nonzero,
                                False, False, False, False,
                                n_actions, uniforms)
    return s[0].copy()


def _ascend_substate(z_star: np.ndarray, state: LatentState, grid: SubstateGrid,
                     alpha_s_zero: float, alpha_s_nonzero: float) -> np.ndarray:
    """Coordinate ascent on the same conditional infer_substate samples."""
    K = state.K
    F = state.feature_matrix()
    m0, m1 = _frozen_counts(state)
    L = grid.L
    log_prior = np.empty(L)
    s = np.zeros(K)
    for _ in range(MAX_ASCENT_SWEEPS):
        changed = False
        for k in range(K):
            r = z_star - s @ F + s[k] * F[k]
            c1 = float(r @ F[k])
            c2 = float(F[k] @ F[k])
            v = grid.values
            logw = (2.0 * v * c1 - v * v * c2) / (2.0 * state.sigma_z2)
            log_prior[0] = math.log(m0[k] + alpha_s_zero)
            log_prior[1:] = math.log(m1[k] + alpha_s_nonzero) - math.log(L - 1.0)
            new = v[int(np.argmax(logw + log_prior))]
            if new != s[k]:
                s[k] = new
                changed = True
        if not changed:
            break
    return s


def predict_action_map(z_star: np.ndarray, state_map: LatentState,
                       grid: SubstateGrid, source: RandomSource | None = None,
                       alpha_s_zero: float = 1.0,
                       alpha_s_nonzero: float = 1.0) -> PredictionResult:
    """Decode an action from a single state by maximizing over s*.

    Coordinate ascent on the gridded conditional (to a fixed point, capped
    at MAX_ASCENT_SWEEPS) followed by the policy mixture of the optimized
    substate. The ascent is deterministic; `source` is accepted only for
    interface symmetry with the Monte Carlo estimator.
    """
    z_star = np.asarray(z_star, dtype=np.float64).reshape(-1)
    if state_map.K and z_star.size != state_map.W.shape[1]:
        raise ValueError(
            f"query has {z_star.size} coordinates, model expects {state_map.W.shape[1]}")
    s = (_ascend_substate(z_star, state_map, grid, alpha_s_zero, alpha_s_nonzero)
         if state_map.K else np.zeros(0))
    dist = action_probabilities(s, state_map.Phi)
    return PredictionResult(dist, int(np.argmax(dist)), substate_draws=[s])


def _state_digest(state: LatentState) -> int:
    """Stable 64-bit content key for a sample, independent of its position."""
    h = hashlib.blake2b(digest_size=8)
    for arr in (state.W, state.A, state.S, state.Phi):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update(np.float64([state.sigma_z2, state.gamma_w, state.alpha_a,
                         state.beta_a, state.alpha_phi]).tobytes())
    return int.from_bytes(h.digest(), "big")


def predict_action_mmse(z_star: np.ndarray, trace, grid: SubstateGrid,
                        source: RandomSource, draws_per_sample: int = 10,
                        n_sweeps: int = INFER_SWEEPS_DEFAULT,
                        alpha_s_zero: float = 1.0,
                        alpha_s_nonzero: float = 1.0) -> PredictionResult:
    """Monte Carlo posterior predictive over the whole trace.

    For every retained sample, draws `draws_per_sample` substate vectors
    with infer_substate and averages the resulting action distributions.
    Each sample's draws come from a child stream keyed by a digest of the
    sample's content, and the accumulation runs in digest order, so the
    result is bitwise invariant to the order of samples in the trace.
    """
    if not trace.samples:
        raise ValueError("cannot form an MMSE prediction from an empty trace")
    if draws_per_sample < 1:
        raise ValueError("draws_per_sample must be at least 1")
    n_actions = trace.samples[0][0].Phi.shape[1]
    keyed = sorted(((_state_digest(state), state) for state, _ in trace.samples),
                   key=lambda pair: pair[0])
    total = np.zeros(n_actions)
    draws = []
    for key, state in keyed:
        for j in range(draws_per_sample):
            sub = source.split(key, j)
            s = infer_substate(z_star, state, grid, sub, n_sweeps,
                               alpha_s_zero=alpha_s_zero,
                               alpha_s_nonzero=alpha_s_nonzero)
            total += action_probabilities(s, state.Phi)
            draws.append(s)
    dist = total / (len(trace.samples) * draws_per_sample)
    dist = dist / dist.sum()
    return PredictionResult(dist, int(np.argmax(dist)), substate_draws=draws)
