"""Gibbs/Metropolis sweeps over the latent feature model.

Every sampler here conditions on the current values of all other variables
and mutates the passed LatentState in place. run_chain wires them together
in a fixed sweep order, merges correlated features on a schedule, and
records post-burn-in samples with their log joint posterior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, gammaln

from . import _kernels
from .distributions import (
    PROB_FLOOR,
    RandomSource,
    log_density,
    sample_categorical,
    sample_standard,
    truncated_normal_positive,
)
from .model import (
    Hyperparameters,
    LatentState,
    ObservationSet,
    SubstateGrid,
    ibp_harmonic_sum,
    log_action_likelihood,
    log_joint_posterior_terms,
    log_obs_likelihood,
)

# concentration of the mean-preserving Gamma random-walk proposal used by
# every scalar MH move; larger values take smaller steps
MH_CONCENTRATION = 50.0

MH_MOVES = ("births", "birth_plus", "beta_a", "alpha_sigma", "beta_sigma", "alpha_phi")


def fresh_accept_stats() -> dict:
    return {move: {"proposed": 0, "accepted": 0} for move in MH_MOVES}


# ---------------------------------------------------------------------------
# chain plumbing types
# ---------------------------------------------------------------------------

@dataclass
class ChainConfig:
    n_iter: int
    burn_in: int
    thin: int = 1
    seed: int = 0
    merge_every: int = 10

    def __post_init__(self):
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iter")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.merge_every < 1:
            raise ValueError("merge_every must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class Trace:
    """Ordered post-burn-in (state, log posterior) pairs plus MH counters."""

    samples: list
    accept_stats: dict = field(default_factory=fresh_accept_stats)

    def log_posteriors(self) -> np.ndarray:
        return np.array([lp for _, lp in self.samples])

    def __len__(self) -> int:
        return len(self.samples)

    # text format: header `TRACE 1 N=<n> D=<d> N_u=<n_u>`, then one line
    # per sample: K logp sigma_z2 gamma_w alpha_a beta_a alpha_sigma
    # beta_sigma alpha_phi, then W (K*D reals), A (K*D 0/1), S (N*K reals),
    # Phi (K*N_u reals), all row-major.
    def save(self, path) -> None:
        with open(path, "w") as fh:
            if not self.samples:
                fh.write("TRACE 1 N=0 D=0 N_u=0\n")
                return
            st0 = self.samples[0][0]
            N = st0.S.shape[0]
            D = st0.W.shape[1]
            N_u = st0.Phi.shape[1]
            fh.write(f"TRACE 1 N={N} D={D} N_u={N_u}\n")
            for state, logp in self.samples:
                fields = [str(state.K), repr(float(logp))]
                fields += [repr(float(getattr(state, name))) for name in _SCALAR_FIELDS]
                fields += [repr(float(v)) for v in state.W.ravel()]
                fields += [str(int(v)) for v in state.A.ravel()]
                fields += [repr(float(v)) for v in state.S.ravel()]
                fields += [repr(float(v)) for v in state.Phi.ravel()]
                fh.write(" ".join(fields) + "\n")

    @classmethod
    def load(cls, path) -> "Trace":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("TRACE 1 "):
            raise ValueError(f"{path}: line 1: not a trace file")
        try:
            dims = dict(part.split("=") for part in lines[0].split()[2:])
            N, D, N_u = int(dims["N"]), int(dims["D"]), int(dims["N_u"])
        except (ValueError, KeyError):
            raise ValueError(f"{path}: line 1: malformed trace header") from None
        samples = []
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split()
            try:
                K = int(parts[0])
                expected = 2 + len(_SCALAR_FIELDS) + 2 * K * D + N * K + K * N_u
                if len(parts) != expected:
                    raise ValueError
                logp = float(parts[1])
                pos = 2
                scalars = {}
                for name in _SCALAR_FIELDS:
                    scalars[name] = float(parts[pos])
                    pos += 1
                W = np.array(parts[pos:pos + K * D], dtype=np.float64).reshape(K, D)
                pos += K * D
                A = np.array(parts[pos:pos + K * D], dtype=np.int64).reshape(K, D)
                pos += K * D
                S = np.array(parts[pos:pos + N * K], dtype=np.float64).reshape(N, K)
                pos += N * K
                Phi = np.array(parts[pos:pos + K * N_u], dtype=np.float64).reshape(K, N_u)
            except ValueError:
                raise ValueError(f"{path}: line {i}: malformed trace record") from None
            samples.append((LatentState(W=W, A=A, S=S, Phi=Phi, **scalars), logp))
        return cls(samples=samples, accept_stats=fresh_accept_stats())


_SCALAR_FIELDS = ("sigma_z2", "gamma_w", "alpha_a", "beta_a",
                  "alpha_sigma", "beta_sigma", "alpha_phi")


# ---------------------------------------------------------------------------
# scalar conditionals
# ---------------------------------------------------------------------------

def sample_noise_variance(state: LatentState, data: ObservationSet,
                          source: RandomSource) -> float:
    resid = data.Z - state.S @ state.feature_matrix()
    shape = state.alpha_sigma + 0.5 * data.n_obs * data.dim
    scale = state.beta_sigma + 0.5 * float(np.sum(resid * resid))
    state.sigma_z2 = sample_standard(("inverse-gamma", shape, scale), source)
    return state.sigma_z2


def sample_gamma_w(state: LatentState, hyper: Hyperparameters,
                   source: RandomSource) -> float:
    # conjugate update for K*D exponential weights under an inverse-gamma
    # prior on their common mean
    count = state.W.size
    shape = hyper.alpha_gamma + count
    scale = hyper.beta_gamma + float(np.sum(state.W))
    state.gamma_w = sample_standard(("inverse-gamma", shape, scale), source)
    return state.gamma_w


def _mh_gamma_step(current: float, log_target, source: RandomSource,
                   stats: dict, move: str, c: float = MH_CONCENTRATION) -> float:
    """One MH move with proposal Gamma(c, c/current) (mean-preserving)."""
    prop = sample_standard(("gamma", c, c / current), source)
    logr = (log_target(prop) - log_target(current)
            + log_density(("gamma", c, c / prop), current)
            - log_density(("gamma", c, c / current), prop))
    stats[move]["proposed"] += 1
    u = source.generator.random()
    if math.isfinite(logr) and math.log(u) < logr:
        stats[move]["accepted"] += 1
        return prop
    return current


def sample_noise_hyperparams(state: LatentState, hyper: Hyperparameters,
                             source: RandomSource, stats: dict | None = None,
                             c: float = MH_CONCENTRATION) -> tuple[float, float]:
    stats = stats if stats is not None else fresh_accept_stats()
    log_sigma = math.log(state.sigma_z2)

    def target_alpha(a):
        # Gamma hyperprior x the alpha-dependent part of IG(sigma^2; a, beta)
        return ((hyper.h1_alpha_sigma - 1.0) * math.log(a) - hyper.h2_alpha_sigma * a
                + a * math.log(state.beta_sigma) - gammaln(a) - a * log_sigma)

    state.alpha_sigma = _mh_gamma_step(state.alpha_sigma, target_alpha,
                                       source, stats, "alpha_sigma", c)

    def target_beta(b):
        return ((hyper.h1_beta_sigma - 1.0) * math.log(b) - hyper.h2_beta_sigma * b
                + state.alpha_sigma * math.log(b) - b / state.sigma_z2)

    state.beta_sigma = _mh_gamma_step(state.beta_sigma, target_beta,
                                      source, stats, "beta_sigma", c)
    return state.alpha_sigma, state.beta_sigma


def sample_ibp_hyperparams(state: LatentState, hyper: Hyperparameters,
                           source: RandomSource, stats: dict | None = None,
                           c: float = MH_CONCENTRATION) -> tuple[float, float]:
    stats = stats if stats is not None else fresh_accept_stats()
    D = state.A.shape[1]
    m = state.A.sum(axis=1)
    mk = m[m >= 1]
    k_act = mk.size

    rate = hyper.h2_alpha_A + ibp_harmonic_sum(state.beta_a, D)
    state.alpha_a = sample_standard(("gamma", hyper.h1_alpha_A + k_act, rate), source)

    def target_beta_a(b):
        return ((hyper.h1_beta_A - 1.0) * math.log(b) - hyper.h2_beta_A * b
                + k_act * math.log(b) - state.alpha_a * ibp_harmonic_sum(b, D)
                + float(np.sum(betaln(mk, D - mk + b))))

    state.beta_a = _mh_gamma_step(state.beta_a, target_beta_a,
                                  source, stats, "beta_a", c)
    return state.alpha_a, state.beta_a


# ---------------------------------------------------------------------------
# block conditionals
# ---------------------------------------------------------------------------

def sample_substates(state: LatentState, data: ObservationSet, grid: SubstateGrid,
                     source: RandomSource, reweight: bool,
                     hyper: Hyperparameters) -> np.ndarray:
    """One full pass redrawing every s_{n,k} from its gridded conditional."""
    if state.K == 0:
        return state.S
    F = state.feature_matrix()
    resid = np.ascontiguousarray(data.Z - state.S @ F)
    Fsq = np.ascontiguousarray(np.sum(F * F, axis=1))
    m0 = np.ascontiguousarray(np.sum(state.S == 0.0, axis=0), dtype=np.float64)
    m1 = np.full(state.K, float(data.n_obs)) - m0
    uniforms = source.generator.random((data.n_obs, state.K))
    _kernels.substate_sweep(state.S, resid, m0, m1, F, Fsq, state.Phi, data.u,
                            grid.values, state.sigma_z2,
                            hyper.alpha_s_zero, hyper.alpha_s_nonzero,
                            True, bool(reweight), True, True,
                            data.n_actions, uniforms)
    return state.S


def sample_weight_row(state: LatentState, data: ObservationSet, k: int,
                      source: RandomSource) -> np.ndarray:
    """Redraw row k of W; active coordinates from the positive-truncated
    Gaussian conditional, masked ones from the exponential prior."""
    s = state.S[:, k]
    sum_s2 = float(s @ s)
    D = data.dim
    if sum_s2 == 0.0:
        state.W[k] = source.generator.exponential(state.gamma_w, size=D)
        return state.W[k]
    F = state.feature_matrix()
    # residual with feature k's contribution removed
    r = data.Z - state.S @ F + np.outer(s, F[k])
    active = state.A[k] == 1
    n_masked = int(D - active.sum())
    if n_masked:
        state.W[k, ~active] = source.generator.exponential(state.gamma_w, size=n_masked)
    if n_masked < D:
        mean = (s @ r[:, active] - state.sigma_z2 / state.gamma_w) / sum_s2
        sd = math.sqrt(state.sigma_z2 / sum_s2)
        state.W[k, active] = truncated_normal_positive(mean, sd, source)
    return state.W[k]


def sample_activations(state: LatentState, data: ObservationSet, k: int, d: int,
                       source: RandomSource, a0: float = 0.0,
                       b0: float | None = None) -> int:
    """Redraw a single activation a_{k,d} from its two-point conditional.

    With the default a0=0 the prior odds are m_ex : (D + beta_a - 1 - m_ex)
    and an otherwise-empty row is forced inactive; positive pseudo-counts
    (a0, b0) give the finite-row variant used when K is held fixed.
    """
    b0v = state.beta_a if b0 is None else b0
    resid = np.ascontiguousarray(data.Z - state.S @ state.feature_matrix())
    m = np.ascontiguousarray(state.A.sum(axis=1))
    sites = np.array([k], dtype=np.int64), np.array([d], dtype=np.int64)
    uniforms = source.generator.random(1)
    _kernels.activation_sites(state.A, state.W, state.S, resid, m,
                              state.sigma_z2, a0, b0v, uniforms, *sites)
    return int(state.A[k, d])


def _activation_pass(state: LatentState, data: ObservationSet,
                     source: RandomSource, a0: float = 0.0,
                     b0: float | None = None) -> None:
    """Redraw every activation site in row-major order in one kernel call."""
    if state.K == 0:
        return
    b0v = state.beta_a if b0 is None else b0
    K, D = state.A.shape
    resid = np.ascontiguousarray(data.Z - state.S @ state.feature_matrix())
    m = np.ascontiguousarray(state.A.sum(axis=1))
    ks = np.repeat(np.arange(K, dtype=np.int64), D)
    ds = np.tile(np.arange(D, dtype=np.int64), K)
    uniforms = source.generator.random(K * D)
    _kernels.activation_sites(state.A, state.W, state.S, resid, m,
                              state.sigma_z2, a0, b0v, uniforms, ks, ds)


def sample_policies(state: LatentState, data: ObservationSet,
                    hyper: Hyperparameters, source: RandomSource,
                    stats: dict | None = None,
                    c: float = MH_CONCENTRATION) -> np.ndarray:
    """Indicator-augmented Dirichlet update of all policy rows, then one MH
    move on the Dirichlet concentration alpha_phi."""
    stats = stats if stats is not None else fresh_accept_stats()
    rng = source.generator
    K = state.K
    N_u = data.n_actions
    if K:
        counts = np.zeros((K, N_u))
        for n in range(data.n_obs):
            s = state.S[n]
            tot = s.sum()
            if tot == 0.0:
                continue  # carries no information about any policy
            p = s * state.Phi[:, data.u[n]]
            ps = p.sum()
            p = p / ps if ps > 0.0 else s / tot
            counts[:, data.u[n]] += rng.multinomial(hyper.N_t, p) / hyper.N_t
        for k in range(K):
            state.Phi[k] = rng.dirichlet(counts[k] + state.alpha_phi)

    log_phi_sum = float(np.sum(np.log(np.maximum(state.Phi, PROB_FLOOR)))) if K else 0.0

    def target_alpha_phi(a):
        return ((hyper.h1_phi - 1.0) * math.log(a) - hyper.h2_phi * a
                + K * (gammaln(N_u * a) - N_u * gammaln(a))
                + (a - 1.0) * log_phi_sum)

    state.alpha_phi = _mh_gamma_step(state.alpha_phi, target_alpha_phi,
                                     source, stats, "alpha_phi", c)
    return state.Phi


# ---------------------------------------------------------------------------
# births and merges
# ---------------------------------------------------------------------------

def _data_loglik(state: LatentState, data: ObservationSet,
                 hyper: Hyperparameters) -> float:
    return (log_obs_likelihood(state, data)
            + log_action_likelihood(state, data, hyper.reweight_actions))


def _draw_activation_row(D: int, beta_a: float, source: RandomSource) -> np.ndarray:
    """Fresh represented feature row: count m >= 1 with mass proportional to
    C(D, m) B(m, D - m + beta_a), placed on a uniform site subset. An i.i.d.
    per-element draw would come up empty almost surely at small beta_a, and
    an empty row can never gain activations afterward."""
    ms = np.arange(1, D + 1, dtype=np.float64)
    logw = (gammaln(D + 1) - gammaln(ms + 1) - gammaln(D - ms + 1)
            + betaln(ms, D - ms + beta_a))
    probs = np.exp(logw - logw.max())
    m = 1 + sample_categorical(probs / probs.sum(), source)
    row = np.zeros(D, dtype=np.int64)
    row[source.generator.permutation(D)[:m]] = 1
    return row


def _with_new_features(state: LatentState, count: int, data: ObservationSet,
                       hyper: Hyperparameters, grid: SubstateGrid,
                       source: RandomSource) -> LatentState:
    """Candidate state with `count` fresh features appended, all drawn from
    their proposal (= prior) distributions."""
    rng = source.generator
    D, N, N_u = data.dim, data.n_obs, data.n_actions
    p_zero = hyper.alpha_s_zero / (hyper.alpha_s_zero + hyper.alpha_s_nonzero)
    W_new = np.empty((count, D))
    A_new = np.empty((count, D), dtype=np.int64)
    S_new = np.empty((N, count))
    Phi_new = np.empty((count, N_u))
    for i in range(count):
        W_new[i] = rng.exponential(state.gamma_w, size=D)
        A_new[i] = _draw_activation_row(D, state.beta_a, source)
        zero_mask = rng.random(N) < p_zero
        values = grid.values[rng.integers(1, grid.L, size=N)]
        S_new[:, i] = np.where(zero_mask, 0.0, values)
        Phi_new[i] = rng.dirichlet(np.full(N_u, state.alpha_phi))
    return LatentState(
        W=np.vstack([state.W, W_new]), A=np.vstack([state.A, A_new]),
        S=np.hstack([state.S, S_new]), Phi=np.vstack([state.Phi, Phi_new]),
        sigma_z2=state.sigma_z2, gamma_w=state.gamma_w, alpha_a=state.alpha_a,
        beta_a=state.beta_a, alpha_sigma=state.alpha_sigma,
        beta_sigma=state.beta_sigma, alpha_phi=state.alpha_phi,
    )


def _adopt(state: LatentState, cand: LatentState) -> None:
    state.W, state.A, state.S, state.Phi = cand.W, cand.A, cand.S, cand.Phi


def propose_new_features(state: LatentState, data: ObservationSet,
                         hyper: Hyperparameters, source: RandomSource,
                         stats: dict | None = None) -> LatentState:
    """Metropolis birth move: a Poisson block of prior-drawn features,
    accepted all-or-nothing on the data likelihood ratio, plus an occasional
    single-feature move with a loosened threshold to improve mixing."""
    stats = stats if stats is not None else fresh_accept_stats()
    rng = source.generator
    grid = SubstateGrid(hyper.L)
    D = data.dim
    lam = state.alpha_a * state.beta_a / (state.beta_a + D - 1.0)
    k_new = int(rng.poisson(lam))
    cur_ll = _data_loglik(state, data, hyper)

    if k_new > 0:
        stats["births"]["proposed"] += 1
        cand = _with_new_features(state, k_new, data, hyper, grid, source)
        cand_ll = _data_loglik(cand, data, hyper)
        if math.log(rng.random()) < cand_ll - cur_ll:
            stats["births"]["accepted"] += 1
            _adopt(state, cand)
            cur_ll = cand_ll

    # extra single-feature move, considered every sweep: the likelihood
    # ratio competes against (u - P_plus)/(1 - P_plus), so the move
    # auto-accepts with probability P_plus no matter how poor the proposal;
    # junk admitted this way gets its substate column zeroed by the next
    # sweeps and is pruned at the next merge pass
    stats["birth_plus"]["proposed"] += 1
    cand = _with_new_features(state, 1, data, hyper, grid, source)
    cand_ll = _data_loglik(cand, data, hyper)
    threshold = (rng.random() - hyper.P_plus) / (1.0 - hyper.P_plus)
    if threshold <= 0.0 or cand_ll - cur_ll > math.log(threshold):
        stats["birth_plus"]["accepted"] += 1
        _adopt(state, cand)
    return state


def _pairwise_feature_corr(F: np.ndarray) -> np.ndarray:
    """Pearson correlation between feature rows; pairs involving a
    zero-variance row get -inf so they never merge."""
    K = F.shape[0]
    centered = F - F.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered * centered, axis=1))
    corr = np.full((K, K), -np.inf)
    good = norms > 0
    idx = np.flatnonzero(good)
    if idx.size >= 2:
        sub = centered[idx] / norms[idx, None]
        corr[np.ix_(idx, idx)] = sub @ sub.T
    np.fill_diagonal(corr, -np.inf)
    return corr


def _merge_pair(state: LatentState, i: int, j: int, grid: SubstateGrid) -> None:
    """Fold feature j into feature i and delete j."""
    Ai, Aj = state.A[i], state.A[j]
    both = (Ai == 1) & (Aj == 1)
    only_i = (Ai == 1) & (Aj == 0)
    only_j = (Ai == 0) & (Aj == 1)
    W_new = 0.5 * (state.W[i] + state.W[j])
    W_new[only_i] = state.W[i][only_i]
    W_new[only_j] = state.W[j][only_j]
    state.W[i] = W_new
    state.A[i] = Ai | Aj
    phi = 0.5 * (state.Phi[i] + state.Phi[j])
    state.Phi[i] = phi / phi.sum()
    state.S[:, i] = grid.snap(np.clip(state.S[:, i] + state.S[:, j], 0.0, 1.0))
    state.W = np.delete(state.W, j, axis=0)
    state.A = np.delete(state.A, j, axis=0)
    state.Phi = np.delete(state.Phi, j, axis=0)
    state.S = np.delete(state.S, j, axis=1)


def _prune_dead(state: LatentState) -> int:
    """Drop features with an all-zero activation row or substate column."""
    keep = state.A.any(axis=1) & (state.S != 0.0).any(axis=0)
    dropped = int(state.K - keep.sum())
    if dropped:
        state.W = state.W[keep]
        state.A = state.A[keep]
        state.Phi = state.Phi[keep]
        state.S = state.S[:, keep]
    return dropped


def merge_similar_features(state: LatentState, hyper: Hyperparameters) -> LatentState:
    """Greedily merge feature pairs whose F rows correlate above T_corr
    (highest correlation first, recomputed after each merge), then prune
    dead features."""
    grid = SubstateGrid(hyper.L)
    while state.K >= 2:
        corr = _pairwise_feature_corr(state.feature_matrix())
        i, j = np.unravel_index(np.argmax(corr), corr.shape)
        if not corr[i, j] > hyper.T_corr:
            break
        _merge_pair(state, min(i, j), max(i, j), grid)
    _prune_dead(state)
    return state


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

def _draw_substate_column(n_obs: int, hyper: Hyperparameters, grid: SubstateGrid,
                          source: RandomSource) -> np.ndarray:
    """Exact draw of one substate column from its exchangeable prior."""
    rng = source.generator
    a0, a1 = hyper.alpha_s_zero, hyper.alpha_s_nonzero
    col = np.zeros(n_obs)
    m0 = 0
    for n in range(n_obs):
        if rng.random() < (m0 + a0) / (n + a0 + a1):
            m0 += 1
        else:
            col[n] = grid.values[rng.integers(1, grid.L)]
    return col


def _init_state(data: ObservationSet, hyper: Hyperparameters, grid: SubstateGrid,
                source: RandomSource) -> LatentState:
    """K=1 starting state with every latent drawn from its prior."""
    rng = source.generator
    alpha_sigma = sample_standard(("gamma", hyper.h1_alpha_sigma, hyper.h2_alpha_sigma), source)
    beta_sigma = sample_standard(("gamma", hyper.h1_beta_sigma, hyper.h2_beta_sigma), source)
    sigma_z2 = sample_standard(("inverse-gamma", alpha_sigma, beta_sigma), source)
    gamma_w = sample_standard(("inverse-gamma", hyper.alpha_gamma, hyper.beta_gamma), source)
    alpha_a = sample_standard(("gamma", hyper.h1_alpha_A, hyper.h2_alpha_A), source)
    beta_a = sample_standard(("gamma", hyper.h1_beta_A, hyper.h2_beta_A), source)
    alpha_phi = sample_standard(("gamma", hyper.h1_phi, hyper.h2_phi), source)

    D = data.dim
    row = _draw_activation_row(D, beta_a, source)
    W = rng.exponential(gamma_w, size=(1, D))
    S = _draw_substate_column(data.n_obs, hyper, grid, source).reshape(-1, 1)
    Phi = rng.dirichlet(np.full(data.n_actions, alpha_phi)).reshape(1, -1)
    return LatentState(W=W, A=row.reshape(1, -1), S=S, Phi=Phi,
                       sigma_z2=sigma_z2, gamma_w=gamma_w, alpha_a=alpha_a,
                       beta_a=beta_a, alpha_sigma=alpha_sigma,
                       beta_sigma=beta_sigma, alpha_phi=alpha_phi)


def _one_sweep(state: LatentState, data: ObservationSet, hyper: Hyperparameters,
               grid: SubstateGrid, source: RandomSource, stats: dict) -> None:
    sample_substates(state, data, grid, source, hyper.reweight_actions, hyper)
    for k in range(state.K):
        sample_weight_row(state, data, k, source)
    sample_gamma_w(state, hyper, source)
    _activation_pass(state, data, source)
    propose_new_features(state, data, hyper, source, stats)
    sample_ibp_hyperparams(state, hyper, source, stats)
    sample_noise_variance(state, data, source)
    sample_noise_hyperparams(state, hyper, source, stats)
    sample_policies(state, data, hyper, source, stats)


def run_chain(data: ObservationSet, hyper: Hyperparameters,
              config: ChainConfig) -> Trace:
    """Run one Gibbs chain from a prior-drawn K=1 state.

    Sweep order: substates, weight rows, gamma_w, activations, new-feature
    proposals, feature-count hyperparameters, noise variance, noise
    hyperparameters, policies. Merging runs every merge_every sweeps.
    """
    source = RandomSource(config.seed)
    grid = SubstateGrid(hyper.L)
    state = _init_state(data, hyper, grid, source)
    stats = fresh_accept_stats()
    samples = []
    for sweep in range(1, config.n_iter + 1):
        _one_sweep(state, data, hyper, grid, source, stats)
        if sweep % config.merge_every == 0:
            merge_similar_features(state, hyper)
        terms = log_joint_posterior_terms(state, data, hyper)
        logp = float(sum(terms.values()))
        if not math.isfinite(logp):
            name = next(n for n, v in terms.items() if not math.isfinite(v))
            raise RuntimeError(
                f"sweep {sweep}: log posterior term '{name}' is not finite")
        if sweep > config.burn_in and (sweep - config.burn_in - 1) % config.thin == 0:
            samples.append((state.copy(), logp))
    return Trace(samples=samples, accept_stats=stats)
