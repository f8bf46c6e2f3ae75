"""Decision pretraining lab: environments, baselines, Bayes oracles and transformer policies."""

from ._dplab import (
    SchemaError,
    TrainingDiverged,
    algorithm_names,
    bench,
    counterexample,
    expected_reward,
    generate_dataset,
    gradcheck,
    optimal_action,
    posterior,
    sample_environment,
    surrogate_check,
    train,
)

__all__ = [
    "SchemaError",
    "TrainingDiverged",
    "algorithm_names",
    "bench",
    "counterexample",
    "expected_reward",
    "generate_dataset",
    "gradcheck",
    "optimal_action",
    "posterior",
    "sample_environment",
    "surrogate_check",
    "train",
]
