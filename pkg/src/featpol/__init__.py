"""Latent feature models with per-feature action policies.

featpol learns a sparse latent feature representation of continuous
observations together with one action policy per feature, from
demonstration data (state and action pairs). Inference is a Gibbs
sampler with Metropolis steps for the feature count and the
hyperparameters; prediction supports MAP and MMSE estimators.

The public surface is re-exported here; the implementation lives in

- distributions: seeded random streams and samplers,
- model: state containers, priors, and the joint log posterior,
- gibbs: conditional updates and the chain driver,
- predict: substate inference and action prediction for new states,
- synth: ground-truth simulation and evaluation metrics,
- ingest: occupancy-grid construction from point-cloud sequences,
- cli: the featpol command line (simulate, fit, predict, evaluate,
  ingest).
"""

from featpol.distributions import (
    RandomSource,
    child_seed,
    sample_truncated_normal,
    truncated_normal_positive,
)
from featpol.gibbs import ChainConfig, Trace, run_chain
from featpol.ingest import (
    GridSpec,
    OccupancyGrid,
    PointCloud,
    load_labeled_sequence,
    min_resolvable_velocity,
    points_to_grid,
    stack_frames,
)
from featpol.model import (
    Hyperparameters,
    LatentState,
    ObservationSet,
    SubstateGrid,
    action_probabilities,
    log_joint_posterior,
)
from featpol.predict import (
    PredictionResult,
    infer_substate,
    map_estimate,
    predict_action_map,
    predict_action_mmse,
)
from featpol.synth import (
    GroundTruth,
    MetricsRecord,
    SynthConfig,
    evaluate,
    generate_ground_truth,
    match_features,
    split_train_test,
    summarize_runs,
)

__version__ = "0.1.0"

__all__ = [
    "ChainConfig",
    "GridSpec",
    "GroundTruth",
    "Hyperparameters",
    "LatentState",
    "MetricsRecord",
    "ObservationSet",
    "OccupancyGrid",
    "PointCloud",
    "PredictionResult",
    "RandomSource",
    "SubstateGrid",
    "SynthConfig",
    "Trace",
    "action_probabilities",
    "child_seed",
    "evaluate",
    "generate_ground_truth",
    "infer_substate",
    "load_labeled_sequence",
    "log_joint_posterior",
    "map_estimate",
    "match_features",
    "min_resolvable_velocity",
    "points_to_grid",
    "predict_action_map",
    "predict_action_mmse",
    "run_chain",
    "sample_truncated_normal",
    "split_train_test",
    "stack_frames",
    "summarize_runs",
    "truncated_normal_positive",
]
