"""Tests for MAP selection, substate inference, and action prediction."""

import math

import numpy as np
import pytest

from featpol.distributions import RandomSource
from featpol.gibbs import ChainConfig, Trace, run_chain
from featpol.model import (
    Hyperparameters,
    LatentState,
    ObservationSet,
    SubstateGrid,
    action_probabilities,
)
from featpol.predict import (
    PredictionResult,
    _state_digest,
    infer_substate,
    map_estimate,
    predict_action_map,
    predict_action_mmse,
)

from helpers import make_demo_data, make_random_instance


def _tiny_state(W, A, S, Phi, sigma_z2=0.5):
    return LatentState(
        W=np.asarray(W, dtype=np.float64),
        A=np.asarray(A, dtype=np.int8),
        S=np.asarray(S, dtype=np.float64),
        Phi=np.asarray(Phi, dtype=np.float64),
        sigma_z2=sigma_z2,
        gamma_w=1.0,
        alpha_a=1.0,
        beta_a=1.0,
        alpha_sigma=10.0,
        beta_sigma=2.0,
        alpha_phi=1.0,
    )


# ---------------------------------------------------------------------------
# map_estimate
# ---------------------------------------------------------------------------


def test_map_estimate_picks_highest_log_posterior():
    states = [make_random_instance(seed)[0] for seed in (0, 1, 2)]
    trace = Trace(samples=[
        (states[0], -5.0),
        (states[1], -3.0),
        (states[2], -9.0),
    ])
    chosen = map_estimate(trace)
    assert chosen is states[1]


def test_map_estimate_breaks_ties_toward_earliest_sample():
    states = [make_random_instance(seed)[0] for seed in (3, 4, 5)]
    trace = Trace(samples=[
        (states[0], -2.0),
        (states[1], -2.0),
        (states[2], -7.0),
    ])
    assert map_estimate(trace) is states[0]


def test_map_estimate_single_sample():
    state = make_random_instance(6)[0]
    trace = Trace(samples=[(state, -11.5)])
    assert map_estimate(trace) is state


def test_map_estimate_empty_trace_raises():
    with pytest.raises(ValueError, match="empty trace"):
        map_estimate(Trace(samples=[]))


# ---------------------------------------------------------------------------
# infer_substate
# ---------------------------------------------------------------------------


def _enum_state():
    """K=1, D=1, L=3 instance small enough to enumerate by hand."""
    state = _tiny_state(
        W=[[0.8]],
        A=[[1]],
        S=[[0.0], [0.5], [1.0], [0.0]],
        Phi=[[0.4, 0.6]],
        sigma_z2=0.3,
    )
    grid = SubstateGrid(3)
    return state, grid


def test_infer_substate_matches_enumeration():
    state, grid = _enum_state()
    z_star = np.array([0.5])

    # Frozen counts from the four training rows: two zeros, two nonzeros.
    m0, m1 = 2.0, 2.0
    log_w = np.empty(3)
    for l, v in enumerate(grid.values):
        loglik = -((z_star[0] - 0.8 * v) ** 2) / (2.0 * 0.3)
        if l == 0:
            log_prior = math.log(m0 + 1.0)
        else:
            log_prior = math.log(m1 + 1.0) - math.log(2.0)
        log_w[l] = loglik + log_prior
    probs = np.exp(log_w - log_w.max())
    probs /= probs.sum()

    n_draws = 100_000
    source = RandomSource(20260814)
    counts = np.zeros(3)
    for i in range(n_draws):
        s = infer_substate(z_star, state, grid, source.split(i), n_sweeps=1)
        l = int(np.argmin(np.abs(grid.values - s[0])))
        counts[l] += 1.0
    freqs = counts / n_draws

    tv = 0.5 * np.abs(freqs - probs).sum()
    assert tv <= 0.01


def test_infer_substate_likelihood_dominance():
    # Two features with disjoint support; a noiseless copy of the first
    # feature's row should switch that feature fully on and leave the
    # other at zero.
    state = _tiny_state(
        W=[[1.5, 0.7, 0.2, 0.3], [0.4, 0.2, 1.1, 0.9]],
        A=[[1, 1, 0, 0], [0, 0, 1, 1]],
        S=[[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]],
        Phi=[[0.7, 0.3], [0.2, 0.8]],
        sigma_z2=1e-8,
    )
    grid = SubstateGrid(3)
    z_star = np.array([1.5, 0.7, 0.0, 0.0])

    source = RandomSource(31)
    hits = 0
    reps = 200
    for i in range(reps):
        s = infer_substate(z_star, state, grid, source.split(i), n_sweeps=5)
        if s[0] == 1.0 and s[1] == 0.0:
            hits += 1
    assert hits / reps >= 0.99


def test_infer_substate_zero_observation_prefers_all_zeros():
    state = _tiny_state(
        W=[[2.0, 1.5], [1.0, 2.5]],
        A=[[1, 1], [1, 1]],
        S=[[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]],
        Phi=[[0.5, 0.5], [0.5, 0.5]],
        sigma_z2=1e-6,
    )
    grid = SubstateGrid(3)
    z_star = np.zeros(2)

    source = RandomSource(32)
    hits = 0
    reps = 200
    for i in range(reps):
        s = infer_substate(z_star, state, grid, source.split(i), n_sweeps=5)
        if np.all(s == 0.0):
            hits += 1
    assert hits / reps >= 0.99


def test_infer_substate_leaves_training_counts_untouched():
    state, grid = _enum_state()
    s_before = state.S.copy()
    source = RandomSource(33)
    result = infer_substate(np.array([0.4]), state, grid, source, n_sweeps=4)
    assert np.array_equal(state.S, s_before)
    assert result.shape == (1,)
    assert np.all(np.isin(result, grid.values))


def test_infer_substate_empty_model_returns_empty_vector():
    state = _tiny_state(
        W=np.zeros((0, 2)),
        A=np.zeros((0, 2), dtype=np.int8),
        S=np.zeros((3, 0)),
        Phi=np.zeros((0, 2)),
    )
    grid = SubstateGrid(3)
    result = infer_substate(np.zeros(2), state, grid, RandomSource(1))
    assert result.shape == (0,)


def test_infer_substate_validates_inputs():
    state, grid = _enum_state()
    with pytest.raises(ValueError, match="coordinates"):
        infer_substate(np.zeros(2), state, grid, RandomSource(0))
    with pytest.raises(ValueError, match="n_sweeps"):
        infer_substate(np.zeros(1), state, grid, RandomSource(0), n_sweeps=0)


# ---------------------------------------------------------------------------
# predict_action_map
# ---------------------------------------------------------------------------


def _disjoint_state():
    state = _tiny_state(
        W=[[1.2, 0.8, 0.3, 0.4], [0.2, 0.5, 0.9, 1.1]],
        A=[[1, 1, 0, 0], [0, 0, 1, 1]],
        S=[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [1.0, 0.5]],
        Phi=[[0.9, 0.05, 0.05], [0.05, 0.05, 0.9]],
        sigma_z2=1e-6,
    )
    return state, SubstateGrid(3)


def test_predict_action_map_replays_training_pattern():
    state, grid = _disjoint_state()
    z_star = np.array([1.2, 0.8, 0.0, 0.0])
    result = predict_action_map(z_star, state, grid)
    # The decoded substate is (1, 0), so the mixture collapses to the
    # first policy row.
    np.testing.assert_allclose(result.action_distribution, state.Phi[0],
                               atol=1e-12)
    assert result.best_action == 0

    z_star = np.array([0.0, 0.0, 0.9, 1.1])
    result = predict_action_map(z_star, state, grid)
    np.testing.assert_allclose(result.action_distribution, state.Phi[1],
                               atol=1e-12)
    assert result.best_action == 2


def test_predict_action_map_identical_policy_rows_gives_uniform():
    state = _tiny_state(
        W=[[1.0, 0.5], [0.7, 1.3]],
        A=[[1, 1], [1, 1]],
        S=[[0.5, 0.5], [1.0, 0.0]],
        Phi=[[0.25, 0.25, 0.25, 0.25], [0.25, 0.25, 0.25, 0.25]],
    )
    grid = SubstateGrid(3)
    result = predict_action_map(np.array([0.8, 0.6]), state, grid)
    np.testing.assert_allclose(result.action_distribution, 0.25, atol=1e-12)
    assert result.best_action == 0


def test_predict_action_map_is_deterministic():
    state, grid = _disjoint_state()
    z_star = np.array([0.3, 0.9, 0.4, 0.2])
    baseline = predict_action_map(z_star, state, grid)
    for source in (None, RandomSource(5), RandomSource(99)):
        again = predict_action_map(z_star, state, grid, source=source)
        assert np.array_equal(again.action_distribution,
                              baseline.action_distribution)
        assert again.best_action == baseline.best_action


def test_predict_action_map_substate_scaling_leaves_choice_invariant():
    # The mixture weights are scale free, so multiplying a substate by a
    # positive constant cannot change the decoded action.
    Phi = np.array([[0.6, 0.3, 0.1], [0.1, 0.2, 0.7], [0.3, 0.4, 0.3]])
    s = np.array([0.5, 0.0, 0.25])
    base = action_probabilities(s, Phi)
    for c in (0.1, 2.0, 7.5):
        scaled = action_probabilities(c * s, Phi)
        np.testing.assert_allclose(scaled, base, atol=1e-12)
        assert np.argmax(scaled) == np.argmax(base)


# ---------------------------------------------------------------------------
# predict_action_mmse
# ---------------------------------------------------------------------------


def test_predict_action_mmse_single_sample_matches_conditional():
    state, data, grid, hyper = make_random_instance(7)
    trace = Trace(samples=[(state, -1.0)])
    z_star = data.Z[0]

    result = predict_action_mmse(z_star, trace, grid, RandomSource(11),
                                 draws_per_sample=1, n_sweeps=2)

    sub = RandomSource(11).split(_state_digest(state), 0)
    s = infer_substate(z_star, state, grid, sub, n_sweeps=2)
    expected = action_probabilities(s, state.Phi)
    expected = expected / expected.sum()
    assert np.array_equal(result.action_distribution, expected)


def test_predict_action_mmse_invariant_to_sample_order():
    states = [make_random_instance(seed)[0] for seed in (8, 9, 10)]
    data = make_random_instance(8)[1]
    grid = SubstateGrid(5)
    z_star = data.Z[1]

    forward = Trace(samples=[(states[0], -1.0), (states[1], -2.0),
                             (states[2], -3.0)])
    shuffled = Trace(samples=[(states[2], -3.0), (states[0], -1.0),
                              (states[1], -2.0)])

    res_f = predict_action_mmse(z_star, forward, grid, RandomSource(21),
                                draws_per_sample=4, n_sweeps=2)
    res_s = predict_action_mmse(z_star, shuffled, grid, RandomSource(21),
                                draws_per_sample=4, n_sweeps=2)
    assert np.array_equal(res_f.action_distribution, res_s.action_distribution)
    assert res_f.best_action == res_s.best_action


def test_predict_action_mmse_distribution_is_convex_combination():
    states = [make_random_instance(seed)[0] for seed in (12, 13)]
    data = make_random_instance(12)[1]
    grid = SubstateGrid(5)
    trace = Trace(samples=[(states[0], -4.0), (states[1], -2.5)])

    result = predict_action_mmse(data.Z[2], trace, grid, RandomSource(77),
                                 draws_per_sample=5, n_sweeps=2)
    dist = result.action_distribution
    assert abs(dist.sum() - 1.0) <= 1e-9

    n_actions = dist.size
    entries = np.concatenate([st.Phi.ravel() for st in states])
    lo = min(entries.min(), 1.0 / n_actions)
    hi = max(entries.max(), 1.0 / n_actions)
    assert np.all(dist >= lo - 1e-12)
    assert np.all(dist <= hi + 1e-12)


def test_predict_action_mmse_reproducible_for_fixed_seed():
    state, data, grid, hyper = make_random_instance(14)
    trace = Trace(samples=[(state, -1.0)])
    first = predict_action_mmse(data.Z[0], trace, grid, RandomSource(3),
                                draws_per_sample=6)
    second = predict_action_mmse(data.Z[0], trace, grid, RandomSource(3),
                                 draws_per_sample=6)
    assert np.array_equal(first.action_distribution,
                          second.action_distribution)


def test_predict_action_mmse_validates_inputs():
    state, data, grid, hyper = make_random_instance(15)
    with pytest.raises(ValueError, match="empty trace"):
        predict_action_mmse(data.Z[0], Trace(samples=[]), grid,
                            RandomSource(0))
    trace = Trace(samples=[(state, -1.0)])
    with pytest.raises(ValueError, match="draws_per_sample"):
        predict_action_mmse(data.Z[0], trace, grid, RandomSource(0),
                            draws_per_sample=0)


# ---------------------------------------------------------------------------
# PredictionResult
# ---------------------------------------------------------------------------


def test_prediction_result_validates_distribution_sum():
    with pytest.raises(ValueError, match="sum"):
        PredictionResult(action_distribution=np.array([0.5, 0.4]),
                         best_action=0)


def test_prediction_result_validates_best_action():
    with pytest.raises(ValueError, match="best_action"):
        PredictionResult(action_distribution=np.array([0.6, 0.4]),
                         best_action=1)


def test_prediction_result_accepts_consistent_fields():
    result = PredictionResult(action_distribution=np.array([0.6, 0.4]),
                              best_action=0)
    assert result.action_distribution.dtype == np.float64


# ---------------------------------------------------------------------------
# End-to-end sanity on synthetic data
# ---------------------------------------------------------------------------


def test_predictions_beat_chance_on_synthetic_data():
    data, X_clean, noise_sd, F_true = make_demo_data(
        seed=12, K_true=2, N=60, D=12, N_u=3, snr_db=25.0, L=100)
    train = data.subset(np.arange(45))
    test = data.subset(np.arange(45, 60))

    hyper = Hyperparameters()
    config = ChainConfig(n_iter=300, burn_in=150, thin=5, seed=2)
    trace = run_chain(train, hyper, config)
    grid = SubstateGrid(hyper.L)

    n_test = len(test.u)
    state = map_estimate(trace)
    hits_map = 0
    for i in range(n_test):
        result = predict_action_map(test.Z[i], state, grid)
        hits_map += int(result.best_action == test.u[i])
    acc_map = hits_map / n_test

    source = RandomSource(41)
    hits_mmse = 0
    for i in range(n_test):
        result = predict_action_mmse(test.Z[i], trace, grid,
                                     source.split(i), draws_per_sample=3,
                                     n_sweeps=3)
        hits_mmse += int(result.best_action == test.u[i])
    acc_mmse = hits_mmse / n_test

    assert acc_map >= 0.6
    assert acc_mmse >= 0.5
