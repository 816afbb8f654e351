"""Tests for synthetic data generation, feature matching, and metrics."""

import numpy as np
import pytest

from featpol.distributions import RandomSource
from featpol.model import LatentState, ObservationSet, SubstateGrid
from featpol.synth import (
    METRICS_CSV_HEADER,
    GroundTruth,
    MetricsRecord,
    SynthConfig,
    evaluate,
    generate_ground_truth,
    load_ground_truth,
    match_features,
    metrics_csv_row,
    save_ground_truth,
    split_train_test,
    summarize_runs,
)


def _state_from_truth(truth, perm, sigma2):
    K = len(perm)
    return LatentState(
        W=truth.W_true[perm].copy(),
        A=truth.A_true[perm].copy(),
        S=truth.S_true[:, perm].copy(),
        Phi=truth.Phi_true[perm].copy(),
        sigma_z2=sigma2,
        gamma_w=1.0,
        alpha_a=1.0,
        beta_a=1.0,
        alpha_sigma=10.0,
        beta_sigma=2.0,
        alpha_phi=1.0,
    )


# ---------------------------------------------------------------------------
# generate_ground_truth
# ---------------------------------------------------------------------------


def test_generated_snr_matches_target():
    config = SynthConfig(K_true=5, snr_db=30.0, seed=100)
    grid = SubstateGrid(100)
    truth, data = generate_ground_truth(config, grid, RandomSource(100))

    noise = data.Z - truth.X_true
    measured = 10.0 * np.log10(np.mean(truth.X_true**2) / np.mean(noise**2))
    assert abs(measured - 30.0) <= 0.5


def test_ground_truth_internal_consistency():
    config = SynthConfig(K_true=4, snr_db=20.0, seed=7, N_z=50, D=12)
    grid = SubstateGrid(100)
    truth, data = generate_ground_truth(config, grid, RandomSource(7))

    assert truth.W_true.shape == (4, 12)
    assert truth.A_true.shape == (4, 12)
    assert truth.S_true.shape == (50, 4)
    assert truth.Phi_true.shape == (4, 4)
    assert np.array_equal(truth.F_true, truth.A_true * truth.W_true)
    assert np.array_equal(truth.X_true, truth.S_true @ truth.F_true)
    assert np.all(truth.W_true > 0)
    assert np.all((truth.A_true == 0) | (truth.A_true == 1))
    assert grid.contains(truth.S_true)
    assert truth.sigma_true2 > 0
    np.testing.assert_allclose(truth.Phi_true.sum(axis=1), 1.0)
    assert np.all(truth.Phi_true.max(axis=1) == 0.95)
    assert data.Z.shape == (50, 12)
    assert data.u.shape == (50,)
    assert data.n_actions == 4
    assert not np.array_equal(data.Z, truth.X_true)


def test_single_feature_substates_snap_to_one():
    config = SynthConfig(K_true=1, snr_db=25.0, seed=3, N_z=40, D=6)
    truth, _ = generate_ground_truth(config, SubstateGrid(100), RandomSource(3))
    assert np.all(truth.S_true == 1.0)


def test_action_histogram_concentrates_on_preferred_action():
    config = SynthConfig(K_true=1, snr_db=25.0, seed=9, N_z=1000, D=4)
    truth, data = generate_ground_truth(config, SubstateGrid(100),
                                        RandomSource(9))
    preferred = int(np.argmax(truth.Phi_true[0]))
    frac = np.mean(data.u == preferred)
    assert frac >= 0.9


def test_activation_rows_are_never_empty():
    # D=2 makes empty rows common enough to exercise the redraw path.
    for seed in range(20):
        config = SynthConfig(K_true=6, snr_db=20.0, seed=seed, N_z=10, D=2)
        truth, _ = generate_ground_truth(config, SubstateGrid(10),
                                         RandomSource(seed))
        assert np.all(truth.A_true.sum(axis=1) >= 1)


def test_noise_variance_strictly_decreases_with_snr():
    grid = SubstateGrid(100)
    sigmas = []
    baseline = None
    for snr in (10.0, 15.0, 20.0, 25.0, 30.0):
        config = SynthConfig(K_true=3, snr_db=snr, seed=42, N_z=30, D=8)
        truth, _ = generate_ground_truth(config, grid, RandomSource(42))
        sigmas.append(truth.sigma_true2)
        if baseline is None:
            baseline = truth
        else:
            # The latent draws do not depend on the SNR target.
            assert np.array_equal(truth.W_true, baseline.W_true)
            assert np.array_equal(truth.A_true, baseline.A_true)
            assert np.array_equal(truth.S_true, baseline.S_true)
            assert np.array_equal(truth.Phi_true, baseline.Phi_true)
    assert all(a > b for a, b in zip(sigmas, sigmas[1:]))


def test_synth_config_validation():
    good = dict(K_true=2, snr_db=20.0, seed=1)
    SynthConfig(**good)
    with pytest.raises(ValueError, match="K_true"):
        SynthConfig(**{**good, "K_true": 0})
    with pytest.raises(ValueError, match="N_z"):
        SynthConfig(**good, N_z=1)
    with pytest.raises(ValueError, match="D"):
        SynthConfig(**good, D=0)
    with pytest.raises(ValueError, match="N_u"):
        SynthConfig(**good, N_u=1)
    with pytest.raises(ValueError, match="train_fraction"):
        SynthConfig(**good, train_fraction=1.0)
    with pytest.raises(ValueError, match="seed"):
        SynthConfig(**{**good, "seed": -1})


def test_train_count_rounding():
    assert SynthConfig(K_true=1, snr_db=10.0, seed=0).n_train == 80
    assert SynthConfig(K_true=1, snr_db=10.0, seed=0, N_z=10,
                       train_fraction=0.25).n_train == 2
    # Extreme fractions still leave at least one row on each side.
    assert SynthConfig(K_true=1, snr_db=10.0, seed=0, N_z=5,
                       train_fraction=0.999).n_train == 4


def test_split_train_test_slices_rows_in_order():
    Z = np.arange(12, dtype=np.float64).reshape(6, 2)
    data = ObservationSet(Z=Z, u=np.array([0, 1, 0, 1, 0, 1]), n_actions=2)
    train, test = split_train_test(data, 4)
    assert np.array_equal(train.Z, Z[:4])
    assert np.array_equal(test.Z, Z[4:])
    assert np.array_equal(train.u, data.u[:4])
    assert np.array_equal(test.u, data.u[4:])
    with pytest.raises(ValueError, match="n_train"):
        split_train_test(data, 6)
    with pytest.raises(ValueError, match="n_train"):
        split_train_test(data, 0)


# ---------------------------------------------------------------------------
# match_features
# ---------------------------------------------------------------------------


def test_match_features_recovers_row_permutation():
    rng = np.random.default_rng(5)
    F_true = rng.exponential(1.0, size=(5, 8))
    perm = np.array([2, 0, 3, 1, 4])
    pairs = match_features(F_true[perm], F_true)
    assert pairs.shape == (5, 2)
    mapping = dict(map(tuple, pairs))
    for i in range(5):
        assert mapping[i] == perm[i]


def test_match_features_partial_assignment_cardinality():
    rng = np.random.default_rng(6)
    F_true = rng.exponential(1.0, size=(5, 10))
    assert match_features(F_true[:3], F_true).shape == (3, 2)
    assert match_features(F_true, F_true[:2]).shape == (2, 2)
    assert match_features(np.zeros((0, 10)), F_true).shape == (0, 2)


def test_match_features_random_rows_score_below_self_match():
    rng = np.random.default_rng(8)
    F_true = rng.exponential(1.0, size=(5, 30))
    F_rand = rng.normal(size=(5, 30))

    def total_corr(F_est):
        pairs = match_features(F_est, F_true)
        return sum(np.corrcoef(F_est[i], F_true[j])[0, 1] for i, j in pairs)

    assert total_corr(F_rand) < total_corr(F_true) - 0.5


def test_match_features_rejects_column_mismatch():
    with pytest.raises(ValueError, match="column"):
        match_features(np.ones((2, 3)), np.ones((2, 4)))


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def test_evaluate_zero_errors_for_permuted_truth():
    config = SynthConfig(K_true=4, snr_db=25.0, seed=11, N_z=30, D=10)
    grid = SubstateGrid(20)
    truth, data = generate_ground_truth(config, grid, RandomSource(11))
    train, test = split_train_test(data, config.n_train)

    perm = [3, 1, 0, 2]
    estimate = _state_from_truth(truth, perm, truth.sigma_true2)
    record = evaluate(estimate, truth, test, test.u)

    assert record.eps_F == pytest.approx(0.0, abs=1e-12)
    assert record.eps_S == pytest.approx(0.0, abs=1e-12)
    assert record.eps_X == pytest.approx(0.0, abs=1e-12)
    assert record.policy_mad == pytest.approx(0.0, abs=1e-12)
    assert record.accuracy == 1.0
    assert record.K_err == 0


def test_evaluate_counts_prediction_hits_and_feature_surplus():
    config = SynthConfig(K_true=3, snr_db=25.0, seed=13, N_z=20, D=6, N_u=4)
    grid = SubstateGrid(10)
    truth, data = generate_ground_truth(config, grid, RandomSource(13))
    train, test = split_train_test(data, 10)

    rng = np.random.default_rng(0)
    extra_W = rng.exponential(1.0, size=(2, 6))
    extra_Phi = np.full((2, 4), 0.25)
    estimate = LatentState(
        W=np.vstack([truth.W_true, extra_W]),
        A=np.vstack([truth.A_true, np.ones((2, 6), dtype=np.int8)]),
        S=np.hstack([truth.S_true[:10], np.zeros((10, 2))]),
        Phi=np.vstack([truth.Phi_true, extra_Phi]),
        sigma_z2=truth.sigma_true2,
        gamma_w=1.0, alpha_a=1.0, beta_a=1.0,
        alpha_sigma=10.0, beta_sigma=2.0, alpha_phi=1.0,
    )

    predictions = test.u.copy()
    predictions[: len(predictions) // 2] = (predictions[: len(predictions) // 2]
                                            + 1) % 4
    record = evaluate(estimate, truth, test, predictions)
    assert record.K_err == 2
    assert record.accuracy == pytest.approx(1.0 - (len(predictions) // 2)
                                            / len(predictions))
    with pytest.raises(ValueError, match="predicted action"):
        evaluate(estimate, truth, test, predictions[:-1])


def test_reconstruction_error_invariant_under_relabeling():
    config = SynthConfig(K_true=4, snr_db=20.0, seed=17, N_z=24, D=8)
    grid = SubstateGrid(15)
    truth, data = generate_ground_truth(config, grid, RandomSource(17))
    train, test = split_train_test(data, 18)

    # Perturb the estimate away from truth so the errors are nonzero.
    base = _state_from_truth(truth, [0, 1, 2, 3], truth.sigma_true2)
    base.W = base.W * 1.1
    base.S = base.S[:18]
    permuted = _state_from_truth(truth, [2, 3, 0, 1], truth.sigma_true2)
    permuted.W = permuted.W * 1.1
    permuted.S = permuted.S[:18]

    rec_a = evaluate(base, truth, test, test.u)
    rec_b = evaluate(permuted, truth, test, test.u)
    assert rec_a.eps_X == pytest.approx(rec_b.eps_X, rel=1e-12)
    assert rec_a.eps_F == pytest.approx(rec_b.eps_F, rel=1e-12)
    assert rec_a.eps_S == pytest.approx(rec_b.eps_S, rel=1e-12)
    assert rec_a.policy_mad == pytest.approx(rec_b.policy_mad, rel=1e-12)
    assert rec_a.eps_X > 0


# ---------------------------------------------------------------------------
# CSV export and aggregation
# ---------------------------------------------------------------------------


def test_metrics_csv_row_matches_header():
    record = MetricsRecord(eps_F=0.1, eps_S=0.2, eps_X=0.3, policy_mad=0.05,
                           accuracy=0.9, K_err=1)
    row = metrics_csv_row(seed=4, snr_db=25.0, K_true=5, metrics=record,
                          accuracy_map=0.9, accuracy_mmse=0.88)
    header_fields = METRICS_CSV_HEADER.split(",")
    fields = row.split(",")
    assert len(fields) == len(header_fields) == 10
    assert fields[0] == "4"
    assert float(fields[1]) == 25.0
    assert fields[2] == "5"
    assert float(fields[7]) == 0.9
    assert float(fields[8]) == 0.88
    assert fields[9] == "1"


def test_summarize_runs_combines_errors_quadratically():
    records = [
        MetricsRecord(eps_F=0.3, eps_S=0.1, eps_X=0.2, policy_mad=0.0,
                      accuracy=0.8, K_err=0),
        MetricsRecord(eps_F=0.4, eps_S=0.1, eps_X=0.2, policy_mad=0.2,
                      accuracy=1.0, K_err=2),
    ]
    summary = summarize_runs(records)
    assert summary["eps_F"] == pytest.approx(np.sqrt((0.09 + 0.16) / 2))
    assert summary["eps_S"] == pytest.approx(0.1)
    assert summary["policy_mad"] == pytest.approx(np.sqrt(0.02))
    assert summary["accuracy"] == pytest.approx(0.9)
    assert summary["K_err"] == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValueError, match="empty"):
        summarize_runs([])


def test_ground_truth_file_round_trip(tmp_path):
    config = SynthConfig(K_true=3, snr_db=22.0, seed=5, N_z=12, D=7)
    truth, _ = generate_ground_truth(config, SubstateGrid(10), RandomSource(5))
    path = tmp_path / "truth.txt"
    save_ground_truth(truth, path)
    loaded = load_ground_truth(path)
    assert np.array_equal(loaded.W_true, truth.W_true)
    assert np.array_equal(loaded.A_true, truth.A_true)
    assert np.array_equal(loaded.S_true, truth.S_true)
    assert np.array_equal(loaded.Phi_true, truth.Phi_true)
    assert loaded.sigma_true2 == truth.sigma_true2
    assert np.array_equal(loaded.F_true, truth.F_true)

    bad = tmp_path / "bad.txt"
    bad.write_text("nonsense\n")
    with pytest.raises(ValueError, match="not a ground-truth file"):
        load_ground_truth(bad)
    bad.write_text("GROUNDTRUTH 1 K=2 N=3 D=4 N_u=2\nsigma_true2 0.1\n")
    with pytest.raises(ValueError, match="missing or malformed"):
        load_ground_truth(bad)


def test_ground_truth_rejects_inconsistent_fields():
    W = np.ones((2, 3))
    A = np.ones((2, 3), dtype=np.int8)
    S = np.full((4, 2), 0.5)
    Phi = np.full((2, 2), 0.5)
    with pytest.raises(ValueError, match="X_true"):
        GroundTruth(W_true=W, A_true=A, S_true=S, Phi_true=Phi,
                    sigma_true2=0.1, F_true=W, X_true=np.zeros((4, 3)))
    with pytest.raises(ValueError, match="F_true"):
        GroundTruth(W_true=W, A_true=A, S_true=S, Phi_true=Phi,
                    sigma_true2=0.1, F_true=2 * W, X_true=S @ (2 * W))
