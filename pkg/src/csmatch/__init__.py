"""Caliper synthetic matching: radius matching in a scaled metric with
synthetic-control weights inside each matched set."""

__version__ = "0.1.0"

from .data import (  # noqa: E402
    CaliperSpec,
    Dataset,
    Norm,
    Policy,
    ScalingMatrix,
    Schema,
    default_caliper,
    load_dataset,
    read_caliper_config,
    save_dataset,
    write_caliper_config,
)
from .distance import DistanceMatrix, distance_matrix, pairwise, scaled_distance  # noqa: E402
from .estimator import Estimand, EffectEstimate, estimate  # noqa: E402
from .matching import MatchResult, Method, cem_match, feasible_subsets, one_nn_match, radius_match  # noqa: E402
from .scm import Scheme, WeightSet, assign_weights, scm_weights  # noqa: E402

__all__ = [
    "CaliperSpec", "Dataset", "Norm", "Policy", "ScalingMatrix", "Schema", "default_caliper",
    "load_dataset", "read_caliper_config", "save_dataset", "write_caliper_config",
    "DistanceMatrix", "distance_matrix", "pairwise", "scaled_distance",
    "Estimand", "EffectEstimate", "estimate",
    "MatchResult", "Method", "cem_match", "feasible_subsets", "one_nn_match", "radius_match",
    "Scheme", "WeightSet", "assign_weights", "scm_weights",
]
