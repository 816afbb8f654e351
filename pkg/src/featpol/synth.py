"""Synthetic ground truth, SNR-calibrated noise, and recovery metrics."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .distributions import RandomSource
from .model import LatentState, ObservationSet, SubstateGrid, action_probabilities

GROUND_TRUTH_GAMMA_SHAPE = 100.0
GROUND_TRUTH_GAMMA_SCALE = 100.0
ACTIVATION_PROB = 0.5
POLICY_PEAK_MASS = 0.95
MAX_ROW_REDRAWS = 100

METRICS_CSV_HEADER = ("seed,snr_db,K_true,eps_F,eps_S,eps_X,"
                      "policy_mad,accuracy_map,accuracy_mmse,K_err")


@dataclass
class SynthConfig:
    """Settings for one synthetic run."""

    K_true: int
    snr_db: float
    seed: int
    N_z: int = 100
    D: int = 30
    N_u: int = 4
    train_fraction: float = 0.8

    def __post_init__(self):
        self.K_true = int(self.K_true)
        self.snr_db = float(self.snr_db)
        self.seed = int(self.seed)
        self.N_z = int(self.N_z)
        self.D = int(self.D)
        self.N_u = int(self.N_u)
        self.train_fraction = float(self.train_fraction)
        if self.K_true < 1:
            raise ValueError("K_true must be at least 1")
        if self.N_z < 2:
            raise ValueError("N_z must be at least 2")
        if self.D < 1:
            raise ValueError("D must be at least 1")
        if self.N_u < 2:
            raise ValueError("N_u must be at least 2")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_train(self) -> int:
        n = int(round(self.train_fraction * self.N_z))
        return min(max(n, 1), self.N_z - 1)


@dataclass
class GroundTruth:
    """The latent variables a synthetic data set was generated from."""

    W_true: np.ndarray
    A_true: np.ndarray
    S_true: np.ndarray
    Phi_true: np.ndarray
    sigma_true2: float
    F_true: np.ndarray
    X_true: np.ndarray

    def __post_init__(self):
        if not np.allclose(self.F_true, self.A_true * self.W_true):
            raise ValueError("F_true must equal A_true * W_true")
        if not np.allclose(self.X_true, self.S_true @ self.F_true):
            raise ValueError("X_true must reconstruct from S_true and F_true")


def generate_ground_truth(config: SynthConfig, grid: SubstateGrid,
                          source: RandomSource) -> tuple[GroundTruth, ObservationSet]:
    """Draw a full synthetic instance from the generative model.

    Weights come from their own prior with gamma_w ~ InvGamma(100, 100),
    activations are iid Bernoulli(0.5) with empty rows redrawn, substates
    are Dirichlet((1/K)1) rows snapped onto the grid, and the noise
    variance is set so the empirical SNR of X against the injected noise
    matches config.snr_db. Policies put mass 0.95 on one uniformly chosen
    action per feature; demonstrations are deterministic, so each action
    is the most probable one under the substate mixture.
    """
    rng = source.generator
    K, N, D, N_u = config.K_true, config.N_z, config.D, config.N_u

    gamma_w = 1.0 / rng.gamma(GROUND_TRUTH_GAMMA_SHAPE,
                              1.0 / GROUND_TRUTH_GAMMA_SCALE)
    W = rng.exponential(gamma_w, size=(K, D))
    A = (rng.random((K, D)) < ACTIVATION_PROB).astype(np.int8)
    for k in range(K):
        redraws = 0
        while not A[k].any():
            redraws += 1
            if redraws > MAX_ROW_REDRAWS:
                raise RuntimeError(f"activation row {k} stayed empty after "
                                   f"{MAX_ROW_REDRAWS} redraws")
            A[k] = (rng.random(D) < ACTIVATION_PROB).astype(np.int8)

    S = grid.snap(rng.dirichlet(np.full(K, 1.0 / K), size=N))

    F = (A * W).astype(np.float64)
    X = S @ F
    signal_power = float(np.mean(X**2))
    sigma2 = signal_power / 10.0 ** (config.snr_db / 10.0)

    Phi = np.full((K, N_u), (1.0 - POLICY_PEAK_MASS) / (N_u - 1))
    preferred = rng.integers(N_u, size=K)
    Phi[np.arange(K), preferred] = POLICY_PEAK_MASS

    Z = X + rng.normal(0.0, np.sqrt(sigma2), size=(N, D))
    u = np.empty(N, dtype=np.int64)
    for n in range(N):
        u[n] = int(np.argmax(action_probabilities(S[n], Phi)))

    truth = GroundTruth(W_true=W, A_true=A, S_true=S, Phi_true=Phi,
                        sigma_true2=sigma2, F_true=F, X_true=X)
    data = ObservationSet(Z=Z, u=u, n_actions=N_u)
    return truth, data


def split_train_test(data: ObservationSet,
                     n_train: int) -> tuple[ObservationSet, ObservationSet]:
    """Leading rows for training, the rest for testing."""
    n = data.n_obs
    if not 1 <= n_train < n:
        raise ValueError(f"n_train must lie in [1, {n - 1}], got {n_train}")
    return data.subset(np.arange(n_train)), data.subset(np.arange(n_train, n))


def _pearson_matrix(F_est: np.ndarray, F_true: np.ndarray) -> np.ndarray:
    """Row-by-row Pearson correlations; constant rows correlate with nothing."""
    Xc = F_est - F_est.mean(axis=1, keepdims=True)
    Yc = F_true - F_true.mean(axis=1, keepdims=True)
    xn = np.sqrt((Xc**2).sum(axis=1))
    yn = np.sqrt((Yc**2).sum(axis=1))
    denom = np.outer(xn, yn)
    corr = np.zeros((F_est.shape[0], F_true.shape[0]))
    np.divide(Xc @ Yc.T, denom, out=corr, where=denom > 0)
    return corr


def match_features(F_est: np.ndarray, F_true: np.ndarray) -> np.ndarray:
    """One-to-one feature alignment maximizing total Pearson correlation.

    Returns an integer array of (estimated row, true row) pairs; when the
    row counts differ, only min(K_est, K_true) pairs are produced and the
    leftover rows stay unmatched.
    """
    F_est = np.atleast_2d(np.asarray(F_est, dtype=np.float64))
    F_true = np.atleast_2d(np.asarray(F_true, dtype=np.float64))
    if F_est.size and F_true.size and F_est.shape[1] != F_true.shape[1]:
        raise ValueError("feature matrices must share the column dimension")
    if F_est.shape[0] == 0 or F_true.shape[0] == 0 or F_est.shape[1] == 0:
        return np.zeros((0, 2), dtype=np.int64)
    corr = _pearson_matrix(F_est, F_true)
    rows, cols = linear_sum_assignment(corr, maximize=True)
    return np.column_stack([rows, cols]).astype(np.int64)


@dataclass
class MetricsRecord:
    """Per-run recovery metrics after permutation alignment."""

    eps_F: float
    eps_S: float
    eps_X: float
    policy_mad: float
    accuracy: float
    K_err: int


def _rmse(diff: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(diff))))


def evaluate(estimate: LatentState, truth: GroundTruth,
             test_data: ObservationSet, predictions) -> MetricsRecord:
    """Score one estimate against the generating ground truth.

    The estimate's substates cover only the training rows, which are the
    leading rows of the ground truth under split_train_test; S_true and
    X_true are therefore truncated to the estimate's row count before the
    RMSEs are taken. Feature, substate, and policy errors are computed on
    optimally matched feature pairs only.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    if predictions.shape != test_data.u.shape:
        raise ValueError("need exactly one predicted action per test row")

    F_est = estimate.feature_matrix()
    pairs = match_features(F_est, truth.F_true)
    n = estimate.S.shape[0]

    if len(pairs):
        est_idx, true_idx = pairs[:, 0], pairs[:, 1]
        eps_F = _rmse(F_est[est_idx] - truth.F_true[true_idx])
        eps_S = _rmse(estimate.S[:, est_idx] - truth.S_true[:n, true_idx])
        policy_mad = float(np.mean(np.abs(
            estimate.Phi[est_idx] - truth.Phi_true[true_idx])))
    else:
        eps_F = eps_S = policy_mad = float("nan")

    eps_X = _rmse(estimate.S @ F_est - truth.X_true[:n])
    accuracy = float(np.mean(predictions == test_data.u))
    K_err = abs(estimate.K - truth.F_true.shape[0])
    return MetricsRecord(eps_F=eps_F, eps_S=eps_S, eps_X=eps_X,
                         policy_mad=policy_mad, accuracy=accuracy, K_err=K_err)


def metrics_csv_row(seed: int, snr_db: float, K_true: int,
                    metrics: MetricsRecord, accuracy_map: float,
                    accuracy_mmse: float) -> str:
    """Format one CSV line matching METRICS_CSV_HEADER."""
    fields = [str(int(seed)), repr(float(snr_db)), str(int(K_true)),
              repr(float(metrics.eps_F)), repr(float(metrics.eps_S)),
              repr(float(metrics.eps_X)), repr(float(metrics.policy_mad)),
              repr(float(accuracy_map)), repr(float(accuracy_mmse)),
              str(int(metrics.K_err))]
    return ",".join(fields)


def save_ground_truth(truth: GroundTruth, path) -> None:
    """Write a ground truth to a plain-text file; exact float round-trip."""
    K, D = truth.W_true.shape
    N = truth.S_true.shape[0]
    N_u = truth.Phi_true.shape[1]
    with open(path, "w") as fh:
        fh.write(f"GROUNDTRUTH 1 K={K} N={N} D={D} N_u={N_u}\n")
        fh.write("sigma_true2 " + repr(float(truth.sigma_true2)) + "\n")
        fh.write("W " + " ".join(repr(float(v))
                                 for v in truth.W_true.ravel()) + "\n")
        fh.write("A " + " ".join(str(int(v))
                                 for v in truth.A_true.ravel()) + "\n")
        fh.write("S " + " ".join(repr(float(v))
                                 for v in truth.S_true.ravel()) + "\n")
        fh.write("Phi " + " ".join(repr(float(v))
                                   for v in truth.Phi_true.ravel()) + "\n")


def load_ground_truth(path) -> GroundTruth:
    """Read a file written by save_ground_truth."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("GROUNDTRUTH 1 "):
        raise ValueError(f"{path}: line 1: not a ground-truth file")
    try:
        dims = dict(token.split("=") for token in lines[0].split()[2:])
        K, N, D, N_u = (int(dims[k]) for k in ("K", "N", "D", "N_u"))
    except (KeyError, ValueError):
        raise ValueError(f"{path}: line 1: malformed header") from None

    fields = {}
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"{path}: line {i}: malformed record")
        fields[parts[0]] = parts[1:]
    try:
        sigma2 = float(fields["sigma_true2"][0])
        W = np.array(fields["W"], dtype=np.float64).reshape(K, D)
        A = np.array(fields["A"], dtype=np.int64).astype(np.int8).reshape(K, D)
        S = np.array(fields["S"], dtype=np.float64).reshape(N, K)
        Phi = np.array(fields["Phi"], dtype=np.float64).reshape(K, N_u)
    except (KeyError, ValueError):
        raise ValueError(f"{path}: missing or malformed field data") from None
    F = (A * W).astype(np.float64)
    return GroundTruth(W_true=W, A_true=A, S_true=S, Phi_true=Phi,
                       sigma_true2=sigma2, F_true=F, X_true=S @ F)


def summarize_runs(records: list[MetricsRecord]) -> dict:
    """Aggregate per-run metrics across Monte Carlo seeds.

    Error-style metrics (the RMSEs, the policy MAD, and the feature-count
    deviation) are combined as the root mean square of the per-run values;
    the accuracy is averaged.
    """
    if not records:
        raise ValueError("cannot summarize an empty list of runs")

    def rms(values):
        return float(np.sqrt(np.mean(np.square(np.asarray(values, dtype=np.float64)))))

    return {
        "eps_F": rms([r.eps_F for r in records]),
        "eps_S": rms([r.eps_S for r in records]),
        "eps_X": rms([r.eps_X for r in records]),
        "policy_mad": rms([r.policy_mad for r in records]),
        "accuracy": float(np.mean([r.accuracy for r in records])),
        "K_err": rms([r.K_err for r in records]),
    }
