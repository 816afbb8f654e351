"""Predict actions for unseen states with the MAP and MMSE estimators.

Fits a model on synthetic demonstrations, then predicts the action for
each held-out state twice: once from the single MAP sample and once by
averaging the action distribution over the whole trace (MMSE). Prints
both accuracies and one worked query.
"""

import numpy as np

from featpol import (
    ChainConfig,
    Hyperparameters,
    RandomSource,
    SubstateGrid,
    SynthConfig,
    generate_ground_truth,
    map_estimate,
    predict_action_map,
    predict_action_mmse,
    run_chain,
    split_train_test,
)


def main():
    seed = 11
    grid = SubstateGrid(100)
    synth = SynthConfig(K_true=3, snr_db=25.0, seed=seed, N_z=80, D=16, N_u=4)
    truth, data = generate_ground_truth(synth, grid, RandomSource(seed))
    train, test = split_train_test(data, synth.n_train)

    trace = run_chain(train, Hyperparameters(),
                      ChainConfig(n_iter=800, burn_in=400, thin=8, seed=seed + 1))
    state = map_estimate(trace)
    print(f"MAP sample has K={state.K} features; predicting "
          f"{test.n_obs} held-out actions")

    source = RandomSource(seed + 2)
    hits_map = 0
    hits_mmse = 0
    for q in range(test.n_obs):
        res_map = predict_action_map(test.Z[q], state, grid)
        res_mmse = predict_action_mmse(test.Z[q], trace, grid, source.split(q))
        hits_map += res_map.best_action == test.u[q]
        hits_mmse += res_mmse.best_action == test.u[q]
        if q == 0:
            with np.printoptions(precision=3, suppress=True):
                print(f"query 0: true action {test.u[q]}")
                print(f"  MAP  distribution {res_map.action_distribution} "
                      f"-> action {res_map.best_action}")
                print(f"  MMSE distribution {res_mmse.action_distribution} "
                      f"-> action {res_mmse.best_action}")

    print(f"accuracy: MAP {hits_map / test.n_obs:.2f}, "
          f"MMSE {hits_mmse / test.n_obs:.2f} on {test.n_obs} queries")


if __name__ == "__main__":
    main()
