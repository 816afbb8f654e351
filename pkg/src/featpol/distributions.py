"""Seedable random source, standard-family sampling, and log densities.

All stochastic code in the package draws through a :class:`RandomSource`,
so a single integer seed pins every result bit-for-bit. Densities are
always evaluated in log space.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.random import Generator, PCG64, SeedSequence
from scipy.special import gammaln, xlogy

PROB_FLOOR = 1e-300

# standardized lower bound above which the shifted-exponential proposal
# beats plain rejection for the truncated normal
_TAIL_SWITCH = 0.45


class RandomSource:
    """Deterministic random stream with hierarchical seed-splitting.

    Children derived via :meth:`split` are statistically independent of
    the parent and of each other, and depend only on (seed, key path),
    never on draw order.
    """

    def __init__(self, seed: int, spawn_key: tuple[int, ...] = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self.spawn_key = tuple(int(k) for k in spawn_key)
        self.generator: Generator = Generator(
            PCG64(SeedSequence(self.seed, spawn_key=self.spawn_key))
        )

    def split(self, *key: int) -> "RandomSource":
        """Return an independent child source addressed by `key`."""
        return RandomSource(self.seed, self.spawn_key + tuple(int(k) for k in key))

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"RandomSource(seed={self.seed}, spawn_key={self.spawn_key})"


def child_seed(seed: int, *key: int) -> int:
    """Collapse (seed, key path) to a plain 64-bit seed for subprocesses."""
    seq = SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# truncated normal
# ---------------------------------------------------------------------------

def truncated_normal_positive(mean, sd, source: RandomSource) -> np.ndarray:
    """Vectorized exact draws from N(mean, sd^2) truncated to (0, inf).

    Two regimes per element: plain rejection when the standardized bound
    alpha = -mean/sd is small, and Robert's shifted-exponential rejection
    deep in the tail (alpha >= 0.45), where the conditional mass sits in a
    thin slice and plain rejection would stall.
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    sd_arr = np.broadcast_to(np.asarray(sd, dtype=np.float64), mean.shape).copy()
    if not np.all(np.isfinite(mean)):
        raise ValueError("truncated normal: mean must be finite")
    if not np.all(sd_arr > 0):
        raise ValueError("truncated normal: standard deviation must be positive")

    rng = source.generator
    alpha = -mean / sd_arr
    out = np.empty_like(mean)

    easy = alpha < _TAIL_SWITCH
    todo = easy.copy()
    guard = 0
    while todo.any():
        idx = np.flatnonzero(todo)
        z = rng.standard_normal(idx.size)
        x = mean[idx] + sd_arr[idx] * z
        ok = (z > alpha[idx]) & (x > 0.0)
        out[idx[ok]] = x[ok]
        todo[idx[ok]] = False
        guard += 1
        if guard > 10_000:  # pragma: no cover - unreachable for finite inputs
            raise RuntimeError("truncated normal rejection loop failed to terminate")

    todo = ~easy
    guard = 0
    while todo.any():
        idx = np.flatnonzero(todo)
        a = alpha[idx]
        lam = 0.5 * (a + np.sqrt(a * a + 4.0))
        excess = rng.exponential(1.0, idx.size) / lam
        z = a + excess
        accept = rng.random(idx.size) < np.exp(-0.5 * (z - lam) ** 2)
        # computing sd*(z - alpha) instead of mean + sd*z avoids catastrophic
        # cancellation when the untruncated mean sits far below zero
        x = sd_arr[idx] * excess
        ok = accept & (x > 0.0)
        out[idx[ok]] = x[ok]
        todo[idx[ok]] = False
        guard += 1
        if guard > 10_000:  # pragma: no cover
            raise RuntimeError("truncated normal tail loop failed to terminate")
    return out


def sample_truncated_normal(mean: float, variance: float, source: RandomSource) -> float:
    """One exact draw from N(mean, variance) truncated to (0, inf)."""
    if not math.isfinite(mean):
        raise ValueError("truncated normal: mean must be finite")
    if not (variance > 0) or not math.isfinite(variance):
        raise ValueError("truncated normal: variance must be positive and finite")
    return float(truncated_normal_positive(mean, math.sqrt(variance), source)[0])


# ---------------------------------------------------------------------------
# standard families
# ---------------------------------------------------------------------------

def _positive(name: str, **params: float) -> None:
    for pname, value in params.items():
        if not (np.all(np.asarray(value) > 0) and np.all(np.isfinite(value))):
            raise ValueError(f"{name}: parameter {pname} must be positive and finite")


def sample_gamma(shape: float, rate: float, source: RandomSource) -> float:
    _positive("gamma", shape=shape, rate=rate)
    return float(source.generator.gamma(shape, 1.0 / rate))


def sample_inverse_gamma(shape: float, scale: float, source: RandomSource) -> float:
    _positive("inverse-gamma", shape=shape, scale=scale)
    g = 0.0
    while g == 0.0:  # underflow guard for very small shapes
        g = source.generator.gamma(shape, 1.0 / scale)
    return float(1.0 / g)


def sample_categorical(probs, source: RandomSource) -> int:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("categorical: probabilities must be a nonnegative vector")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"categorical: probabilities sum to {p.sum()!r}, not 1")
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, source.generator.random(), side="right"))
    return min(idx, p.size - 1)


def sample_standard(family, source: RandomSource):
    """Draw once from a named family; `family` is (name, param, ...)."""
    name, params = family[0], family[1:]
    rng = source.generator
    if name == "gamma":
        return sample_gamma(params[0], params[1], source)
    if name == "inverse-gamma":
        return sample_inverse_gamma(params[0], params[1], source)
    if name == "beta":
        _positive("beta", a=params[0], b=params[1])
        return float(rng.beta(params[0], params[1]))
    if name == "exponential":
        _positive("exponential", scale=params[0])
        return float(rng.exponential(params[0]))
    if name == "dirichlet":
        conc = np.asarray(params[0], dtype=np.float64)
        _positive("dirichlet", concentration=conc)
        return rng.dirichlet(conc)
    if name == "categorical":
        return sample_categorical(params[0], source)
    if name == "poisson":
        _positive("poisson", mean=params[0])
        return int(rng.poisson(params[0]))
    if name == "bernoulli":
        p = float(params[0])
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli: p={p} outside [0, 1]")
        return int(rng.random() < p)
    raise ValueError(f"unknown distribution family: {name!r}")


def log_density(family, value) -> float:
    """Natural-log density/mass of `value` under `family`; -inf off support."""
    name, params = family[0], family[1:]
    if name == "gamma":
        shape, rate = params
        _positive("gamma", shape=shape, rate=rate)
        x = float(value)
        if x < 0 or (x == 0 and shape > 1):
            return -math.inf
        return float(shape * math.log(rate) - gammaln(shape) + xlogy(shape - 1, x) - rate * x)
    if name == "inverse-gamma":
        shape, scale = params
        _positive("inverse-gamma", shape=shape, scale=scale)
        x = float(value)
        if x <= 0:
            return -math.inf
        return float(shape * math.log(scale) - gammaln(shape) - (shape + 1) * math.log(x) - scale / x)
    if name == "beta":
        a, b = params
        _positive("beta", a=a, b=b)
        x = float(value)
        if not 0.0 <= x <= 1.0:
            return -math.inf
        return float(gammaln(a + b) - gammaln(a) - gammaln(b) + xlogy(a - 1, x) + xlogy(b - 1, 1 - x))
    if name == "exponential":
        (scale,) = params
        _positive("exponential", scale=scale)
        x = float(value)
        if x < 0:
            return -math.inf
        return float(-math.log(scale) - x / scale)
    if name == "gaussian":
        mean, variance = params
        _positive("gaussian", variance=variance)
        x = float(value)
        return float(-0.5 * math.log(2.0 * math.pi * variance) - (x - mean) ** 2 / (2.0 * variance))
    if name == "dirichlet":
        conc = np.asarray(params[0], dtype=np.float64)
        _positive("dirichlet", concentration=conc)
        x = np.asarray(value, dtype=np.float64)
        if x.shape != conc.shape or np.any(x < 0) or abs(x.sum() - 1.0) > 1e-6:
            return -math.inf
        return float(gammaln(conc.sum()) - gammaln(conc).sum() + xlogy(conc - 1, x).sum())
    if name == "categorical":
        p = np.asarray(params[0], dtype=np.float64)
        k = int(value)
        if not 0 <= k < p.size:
            return -math.inf
        return float(np.log(max(p[k], PROB_FLOOR))) if p[k] > 0 else -math.inf
    if name == "poisson":
        (mean,) = params
        _positive("poisson", mean=mean)
        k = value
        if k != int(k) or k < 0:
            return -math.inf
        k = int(k)
        return float(k * math.log(mean) - mean - gammaln(k + 1))
    if name == "bernoulli":
        (p,) = params
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"bernoulli: p={p} outside [0, 1]")
        if value == 1:
            return math.log(p) if p > 0 else -math.inf
        if value == 0:
            return math.log1p(-p) if p < 1 else -math.inf
        return -math.inf
    raise ValueError(f"unknown distribution family: {name!r}")
