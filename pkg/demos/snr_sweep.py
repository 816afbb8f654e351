"""Small sweep over noise levels and feature counts.

Runs the generate / fit / evaluate loop over a 2x2 grid of (SNR, K)
cells with three seeds each and prints the aggregated metrics per cell
(RMS over seeds for errors, mean for accuracy). A scaled-down version
of the full simulation study; the featpol CLI runs the real thing.
"""

import numpy as np

from featpol import (
    ChainConfig,
    Hyperparameters,
    RandomSource,
    SubstateGrid,
    SynthConfig,
    child_seed,
    evaluate,
    generate_ground_truth,
    map_estimate,
    predict_action_map,
    run_chain,
    split_train_test,
)
from featpol.synth import summarize_runs


def run_cell(snr_db, K_true, seed_index):
    cell_seed = child_seed(2024, 0, seed_index, int(snr_db), K_true)
    grid = SubstateGrid(100)
    synth = SynthConfig(K_true=K_true, snr_db=snr_db, seed=cell_seed,
                        N_z=60, D=12, N_u=3)
    truth, data = generate_ground_truth(synth, grid, RandomSource(cell_seed))
    train, test = split_train_test(data, synth.n_train)
    trace = run_chain(train, Hyperparameters(),
                      ChainConfig(n_iter=400, burn_in=200, thin=8,
                                  seed=child_seed(cell_seed, 1)))
    state = map_estimate(trace)
    preds = np.array([predict_action_map(test.Z[q], state, grid).best_action
                      for q in range(test.n_obs)])
    return evaluate(state, truth, test, preds)


def main():
    print(f"{'snr_db':>6} {'K':>3} {'eps_X':>8} {'policy_mad':>10} "
          f"{'accuracy':>8} {'K_err':>6}")
    for snr_db in (15.0, 30.0):
        for K_true in (2, 4):
            runs = [run_cell(snr_db, K_true, i) for i in range(3)]
            agg = summarize_runs(runs)
            print(f"{snr_db:>6.0f} {K_true:>3d} {agg['eps_X']:>8.4f} "
                  f"{agg['policy_mad']:>10.4f} {agg['accuracy']:>8.2f} "
                  f"{agg['K_err']:>6.2f}")


if __name__ == "__main__":
    main()
