"""Slow straight-line reference implementations used to cross-check the package.

Everything here is deliberately written with per-element loops and scipy.stats
calls rather than the vectorized expressions in the library, so that agreement
between the two is meaningful.
"""

import math

import numpy as np
from scipy import stats

from featpol.distributions import RandomSource
from featpol.model import Hyperparameters, LatentState, ObservationSet, SubstateGrid


def lbeta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def reference_log_joint(state: LatentState, data: ObservationSet, hyper: Hyperparameters) -> float:
    """Unnormalized log joint posterior, coded independently of the library."""
    N, D = data.Z.shape
    K = state.K
    N_u = data.n_actions
    total = 0.0

    F = state.A * state.W
    sd = math.sqrt(state.sigma_z2)
    for n in range(N):
        mean = state.S[n] @ F
        for d in range(D):
            total += stats.norm.logpdf(data.Z[n, d], loc=mean[d], scale=sd)

    weight = D if hyper.reweight_actions else 1
    for n in range(N):
        ssum = float(state.S[n].sum())
        if ssum == 0.0:
            p = 1.0 / N_u
        else:
            p = float(state.S[n] @ state.Phi[:, data.u[n]]) / ssum
        total += weight * math.log(max(p, 1e-300))

    k_act = 0
    for k in range(K):
        m = int(state.A[k].sum())
        if m >= 1:
            k_act += 1
            total += lbeta(m, D - m + state.beta_a)
    total += k_act * math.log(state.alpha_a * state.beta_a)
    total -= state.alpha_a * sum(state.beta_a / (state.beta_a + d - 1) for d in range(1, D + 1))

    for k in range(K):
        for d in range(D):
            total += stats.expon.logpdf(state.W[k, d], scale=state.gamma_w)

    a0, a1 = hyper.alpha_s_zero, hyper.alpha_s_nonzero
    for k in range(K):
        m0 = int(np.sum(state.S[:, k] == 0.0))
        m1 = N - m0
        total += lbeta(m0 + a0, m1 + a1) - lbeta(a0, a1) - m1 * math.log(hyper.L - 1)

    for k in range(K):
        total += stats.dirichlet.logpdf(state.Phi[k] / state.Phi[k].sum(),
                                        np.full(N_u, state.alpha_phi))

    total += stats.invgamma.logpdf(state.sigma_z2, state.alpha_sigma, scale=state.beta_sigma)
    total += stats.invgamma.logpdf(state.gamma_w, hyper.alpha_gamma, scale=hyper.beta_gamma)
    total += stats.gamma.logpdf(state.alpha_sigma, hyper.h1_alpha_sigma, scale=1 / hyper.h2_alpha_sigma)
    total += stats.gamma.logpdf(state.beta_sigma, hyper.h1_beta_sigma, scale=1 / hyper.h2_beta_sigma)
    total += stats.gamma.logpdf(state.alpha_a, hyper.h1_alpha_A, scale=1 / hyper.h2_alpha_A)
    total += stats.gamma.logpdf(state.beta_a, hyper.h1_beta_A, scale=1 / hyper.h2_beta_A)
    total += stats.gamma.logpdf(state.alpha_phi, hyper.h1_phi, scale=1 / hyper.h2_phi)
    return total


def make_demo_data(seed: int, K_true: int = 3, N: int = 100, D: int = 30,
                   N_u: int = 4, snr_db: float = 30.0, L: int = 100):
    """Hand-rolled synthetic state-action set (independent of the library's
    own simulator). Returns (data, X_clean, noise_sd, F_true)."""
    rng = np.random.default_rng(seed)
    gw = 1.0 / rng.gamma(100.0, 1.0 / 100.0)
    W = rng.exponential(gw, (K_true, D))
    A = rng.integers(0, 2, (K_true, D))
    for k in range(K_true):
        while A[k].sum() == 0:
            A[k] = rng.integers(0, 2, D)
    F = A * W
    S = np.round(rng.dirichlet(np.full(K_true, 1.0 / K_true), N) * (L - 1)) / (L - 1)
    X = S @ F
    s2 = np.mean(X**2) / 10.0**(snr_db / 10.0)
    Z = X + rng.normal(0.0, math.sqrt(s2), (N, D))
    phi = np.full((K_true, N_u), 0.05 / (N_u - 1))
    for k in range(K_true):
        phi[k, rng.integers(N_u)] = 0.95
    u = np.empty(N, dtype=np.int64)
    for n in range(N):
        p = S[n] @ phi / S[n].sum() if S[n].sum() > 0 else np.full(N_u, 1.0 / N_u)
        u[n] = rng.choice(N_u, p=p / p.sum())
    return ObservationSet(Z, u, N_u), X, math.sqrt(s2), F


def make_random_instance(seed: int, N: int = 6, D: int = 4, K: int = 3,
                         L: int = 5, N_u: int = 3, zero_frac: float = 0.4):
    """A small random-but-valid (state, data, grid, hyper) tuple for tests."""
    rng = np.random.default_rng(seed)
    grid = SubstateGrid(L)
    hyper = Hyperparameters(L=L)

    W = rng.exponential(1.0, size=(K, D)) + 1e-6
    A = rng.integers(0, 2, size=(K, D))
    # make sure at least one activation exists per row and one row is dense
    A[0] = 1
    for k in range(K):
        if A[k].sum() == 0:
            A[k, rng.integers(D)] = 1
    S_idx = rng.integers(1, L, size=(N, K))
    S_idx[rng.random(size=(N, K)) < zero_frac] = 0
    S = grid.values[S_idx]
    Phi = rng.dirichlet(np.ones(N_u), size=K)

    state = LatentState(
        W=W, A=A, S=S, Phi=Phi,
        sigma_z2=0.3, gamma_w=1.2, alpha_a=0.8, beta_a=1.5,
        alpha_sigma=900.0, beta_sigma=1.1, alpha_phi=0.7,
    )
    Z = S @ (A * W) + rng.normal(0.0, math.sqrt(state.sigma_z2), size=(N, D))
    u = rng.integers(0, N_u, size=N)
    data = ObservationSet(Z, u, N_u)
    return state, data, grid, hyper
