"""Data model: observations, latent state, hyperparameters, likelihoods.

The generative story: each observation row z_n is a nonnegative mixture
s_n (A*W) plus Gaussian noise, and its action u_n comes from a mixture of
per-feature categorical policies weighted by the same substate vector s_n.
This module evaluates every term of the (unnormalized) log joint posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import betaln, gammaln

from .distributions import PROB_FLOOR, log_density


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

@dataclass
class ObservationSet:
    """N_z observation vectors of length D paired with discrete actions."""

    Z: np.ndarray
    u: np.ndarray
    n_actions: int

    def __post_init__(self):
        self.Z = np.ascontiguousarray(np.asarray(self.Z, dtype=np.float64))
        self.u = np.ascontiguousarray(np.asarray(self.u, dtype=np.int64))
        self.n_actions = int(self.n_actions)
        if self.Z.ndim != 2 or self.Z.shape[0] < 1 or self.Z.shape[1] < 1:
            raise ValueError(f"Z must be a nonempty 2-D matrix, got shape {self.Z.shape}")
        if not np.all(np.isfinite(self.Z)):
            raise ValueError("observations contain non-finite values")
        if self.u.shape != (self.Z.shape[0],):
            raise ValueError("need exactly one action per observation row")
        if self.n_actions < 2:
            raise ValueError("n_actions must be at least 2")
        if np.any(self.u < 0) or np.any(self.u >= self.n_actions):
            raise ValueError("action index outside {0, ..., n_actions-1}")

    @property
    def n_obs(self) -> int:
        return self.Z.shape[0]

    @property
    def dim(self) -> int:
        return self.Z.shape[1]

    def subset(self, rows) -> "ObservationSet":
        return ObservationSet(self.Z[rows].copy(), self.u[rows].copy(), self.n_actions)

    # -- text format: header `D=<int> N_u=<int>`, then one line per
    #    observation holding D reals followed by the action index.
    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"D={self.dim} N_u={self.n_actions}\n")
            for row, act in zip(self.Z, self.u):
                fh.write(" ".join(repr(float(v)) for v in row) + f" {act}\n")

    @classmethod
    def load(cls, path) -> "ObservationSet":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise ValueError(f"{path}: line 1: empty observation file")
        header = lines[0].split()
        try:
            dim = int(header[0].removeprefix("D="))
            n_actions = int(header[1].removeprefix("N_u="))
            if header[0][:2] != "D=" or header[1][:4] != "N_u=" or len(header) != 2:
                raise ValueError
        except (ValueError, IndexError):
            raise ValueError(f"{path}: line 1: expected header 'D=<int> N_u=<int>', got {lines[0]!r}") from None
        Z, u = [], []
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: line {i}: expected {dim + 1} fields, got {len(parts)}")
            try:
                Z.append([float(v) for v in parts[:-1]])
                u.append(int(parts[-1]))
            except ValueError:
                raise ValueError(f"{path}: line {i}: unparseable number") from None
        if not Z:
            raise ValueError(f"{path}: line 2: no observation rows")
        return cls(np.array(Z), np.array(u), n_actions)


class SubstateGrid:
    """The finite set of L equidistant substate values spanning [0, 1]."""

    def __init__(self, L: int):
        L = int(L)
        if L < 2:
            raise ValueError("substate grid needs at least 2 values")
        self.L = L
        self.values = np.arange(L, dtype=np.float64) / (L - 1)

    def snap(self, x):
        """Map value(s) onto the nearest grid member (exact membership)."""
        idx = np.clip(np.rint(np.asarray(x, dtype=np.float64) * (self.L - 1)), 0, self.L - 1)
        out = self.values[idx.astype(np.int64)]
        return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out

    def contains(self, x) -> bool:
        arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
        idx = np.clip(np.rint(arr * (self.L - 1)), 0, self.L - 1).astype(np.int64)
        return bool(np.all(self.values[idx] == arr))

    def __repr__(self) -> str:  # pragma: no cover
        return f"SubstateGrid(L={self.L})"


@dataclass
class LatentState:
    """One full assignment of all latent variables.

    W : (K, D) positive weights       A : (K, D) binary activations
    S : (N_z, K) gridded substates    Phi : (K, N_u) policy rows
    plus the scalar noise/prior parameters.
    """

    W: np.ndarray
    A: np.ndarray
    S: np.ndarray
    Phi: np.ndarray
    sigma_z2: float
    gamma_w: float
    alpha_a: float
    beta_a: float
    alpha_sigma: float
    beta_sigma: float
    alpha_phi: float

    def __post_init__(self):
        self.W = np.ascontiguousarray(np.asarray(self.W, dtype=np.float64))
        self.A = np.ascontiguousarray(np.asarray(self.A, dtype=np.int64))
        self.S = np.ascontiguousarray(np.asarray(self.S, dtype=np.float64))
        self.Phi = np.ascontiguousarray(np.asarray(self.Phi, dtype=np.float64))

    @property
    def K(self) -> int:
        return self.W.shape[0]

    def feature_matrix(self) -> np.ndarray:
        """F = A*W, the effective feature rows entering reconstruction."""
        return self.A * self.W

    def copy(self) -> "LatentState":
        return LatentState(
            self.W.copy(), self.A.copy(), self.S.copy(), self.Phi.copy(),
            self.sigma_z2, self.gamma_w, self.alpha_a, self.beta_a,
            self.alpha_sigma, self.beta_sigma, self.alpha_phi,
        )


@dataclass
class Hyperparameters:
    """Fixed constants of the hierarchical priors (shape-rate Gammas)."""

    h1_alpha_sigma: float = 1000.0
    h2_alpha_sigma: float = 1.0
    h1_beta_sigma: float = 1.0
    h2_beta_sigma: float = 1.0
    h1_alpha_A: float = 1.0
    h2_alpha_A: float = 1.0
    h1_beta_A: float = 1.0
    h2_beta_A: float = 10.0
    alpha_gamma: float = 1.0
    beta_gamma: float = 1.0
    h1_phi: float = 1.0
    h2_phi: float = 1.0
    alpha_s_zero: float = 1.0
    alpha_s_nonzero: float = 1.0
    P_plus: float = 0.01
    T_corr: float = 0.9
    N_iter: int = 10_000
    L: int = 100
    N_t: int = 1000
    reweight_actions: bool = False

    def __post_init__(self):
        for f in fields(self):
            if f.name == "reweight_actions":
                continue
            value = getattr(self, f.name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"hyperparameter {f.name} must be strictly positive, got {value}")
        if self.L < 2:
            raise ValueError("L must be at least 2")
        if self.N_iter < 1:
            raise ValueError("N_iter must be at least 1")
        if not 0 < self.P_plus < 1:
            raise ValueError("P_plus must lie in (0, 1)")
        if not 0 < self.T_corr <= 1:
            raise ValueError("T_corr must lie in (0, 1]")

    def with_(self, **overrides) -> "Hyperparameters":
        return replace(self, **overrides)


def validate_state(state: LatentState, data: ObservationSet, grid: SubstateGrid) -> None:
    """Raise ValueError if any structural invariant of the state is broken."""
    K = state.K
    if state.W.shape != (K, data.dim) or state.A.shape != (K, data.dim):
        raise ValueError("W/A shape mismatch")
    if state.S.shape != (data.n_obs, K):
        raise ValueError("S shape mismatch")
    if state.Phi.shape != (K, data.n_actions):
        raise ValueError("Phi shape mismatch")
    if K and not np.all(state.W > 0):
        raise ValueError("weights must be strictly positive")
    if K and not np.all((state.A == 0) | (state.A == 1)):
        raise ValueError("activations must be binary")
    if K and not grid.contains(state.S):
        raise ValueError("substate entries left the grid")
    if K and (np.any(state.Phi < 0) or np.max(np.abs(state.Phi.sum(axis=1) - 1.0)) > 1e-9):
        raise ValueError("policy rows must be probability vectors")
    for name in ("sigma_z2", "gamma_w", "alpha_a", "beta_a", "alpha_sigma", "beta_sigma", "alpha_phi"):
        value = getattr(state, name)
        if not (np.isfinite(value) and value > 0):
            raise ValueError(f"{name} must be positive and finite, got {value}")


# ---------------------------------------------------------------------------
# likelihoods and the joint posterior
# ---------------------------------------------------------------------------

def ibp_harmonic_sum(beta_a: float, D: int) -> float:
    """sum_{d=1..D} beta_a / (beta_a + d - 1), the rate mass of the feature prior."""
    d = np.arange(1, D + 1, dtype=np.float64)
    return float(np.sum(beta_a / (beta_a + d - 1.0)))


def log_obs_likelihood(state: LatentState, data: ObservationSet) -> float:
    """Gaussian log likelihood of all observation rows given S(A*W)."""
    resid = data.Z - state.S @ state.feature_matrix()
    n_terms = data.n_obs * data.dim
    return float(
        -0.5 * n_terms * math.log(2.0 * math.pi * state.sigma_z2)
        - np.sum(resid * resid) / (2.0 * state.sigma_z2)
    )


def action_probabilities(s: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    """Mixture action distribution for one substate vector.

    Degenerate all-zero substates carry no policy information and map to
    the uniform distribution by convention.
    """
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("substate entries must be nonnegative")
    n_actions = Phi.shape[1]
    total = s.sum()
    if total <= 0:
        return np.full(n_actions, 1.0 / n_actions)
    return (s @ Phi) / total


def _per_obs_action_probs(state: LatentState, data: ObservationSet) -> np.ndarray:
    """p(u_n | s_n, Phi) for every n, with the uniform all-zero fallback."""
    totals = state.S.sum(axis=1)
    mass = np.empty(data.n_obs)
    live = totals > 0
    if state.K:
        picked = (state.S @ state.Phi)[np.arange(data.n_obs), data.u]
        mass[live] = picked[live] / totals[live]
    mass[~live] = 1.0 / data.n_actions
    return mass


def log_action_likelihood(state: LatentState, data: ObservationSet, reweight: bool) -> float:
    """Sum of log p(u_n | s_n, Phi); multiplied by D when reweighting."""
    mass = _per_obs_action_probs(state, data)
    total = float(np.sum(np.log(np.maximum(mass, PROB_FLOOR))))
    return total * data.dim if reweight else total


def log_joint_posterior_terms(state: LatentState, data: ObservationSet,
                              hyper: Hyperparameters) -> dict[str, float]:
    """Every additive term of the unnormalized log joint, keyed by name."""
    D = data.dim
    K = state.K
    terms: dict[str, float] = {}
    terms["obs_likelihood"] = log_obs_likelihood(state, data)
    terms["action_likelihood"] = log_action_likelihood(state, data, hyper.reweight_actions)

    # feature-count prior: exchangeable form over the active rows only
    # (rows whose activation count is zero contribute nothing and are
    # barred from the Beta-function product, which diverges at m=0)
    m = state.A.sum(axis=1) if K else np.zeros(0, dtype=np.int64)
    active = m >= 1
    k_act = int(active.sum())
    terms["activation_prior"] = float(
        k_act * math.log(state.alpha_a * state.beta_a)
        - state.alpha_a * ibp_harmonic_sum(state.beta_a, D)
        + np.sum(betaln(m[active], D - m[active] + state.beta_a))
    )

    if K and np.any(state.W <= 0):
        terms["weight_prior"] = -math.inf
    else:
        terms["weight_prior"] = float(-K * D * math.log(state.gamma_w)
                                      - np.sum(state.W) / state.gamma_w)

    # marginalized spike-and-slab prior: Polya urn over the zero pattern of
    # each substate column, uniform spread over the L-1 nonzero grid values
    a0, a1 = hyper.alpha_s_zero, hyper.alpha_s_nonzero
    m0 = np.sum(state.S == 0.0, axis=0) if K else np.zeros(0)
    m1 = data.n_obs - m0
    terms["substate_prior"] = float(
        np.sum(betaln(m0 + a0, m1 + a1)) - K * betaln(a0, a1)
        - np.sum(m1) * math.log(hyper.L - 1)
    )

    phi_safe = np.maximum(state.Phi, PROB_FLOOR)
    terms["policy_prior"] = float(
        K * (gammaln(data.n_actions * state.alpha_phi) - data.n_actions * gammaln(state.alpha_phi))
        + (state.alpha_phi - 1.0) * np.sum(np.log(phi_safe))
    )

    terms["noise_variance_prior"] = log_density(
        ("inverse-gamma", state.alpha_sigma, state.beta_sigma), state.sigma_z2)
    terms["gamma_w_prior"] = log_density(
        ("inverse-gamma", hyper.alpha_gamma, hyper.beta_gamma), state.gamma_w)
    terms["alpha_sigma_prior"] = log_density(
        ("gamma", hyper.h1_alpha_sigma, hyper.h2_alpha_sigma), state.alpha_sigma)
    terms["beta_sigma_prior"] = log_density(
        ("gamma", hyper.h1_beta_sigma, hyper.h2_beta_sigma), state.beta_sigma)
    terms["alpha_a_prior"] = log_density(
        ("gamma", hyper.h1_alpha_A, hyper.h2_alpha_A), state.alpha_a)
    terms["beta_a_prior"] = log_density(
        ("gamma", hyper.h1_beta_A, hyper.h2_beta_A), state.beta_a)
    terms["alpha_phi_prior"] = log_density(
        ("gamma", hyper.h1_phi, hyper.h2_phi), state.alpha_phi)
    return terms


def log_joint_posterior(state: LatentState, data: ObservationSet,
                        hyper: Hyperparameters) -> float:
    """Unnormalized log joint posterior of the full latent state."""
    return float(sum(log_joint_posterior_terms(state, data, hyper).values()))
