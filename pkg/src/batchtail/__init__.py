"""Batched bandit policies for heavy-tailed rewards.

The package provides robust mean estimation (median of means),
communication grids and diameter schedules, a finite-arm elimination
policy, a Lipschitz-bandit narrowing policy on dyadic cubes, problem
instance families with known structure, and a reproducible experiment
harness with a command-line interface.
"""

from __future__ import annotations

from batchtail.estimators import (
    EstimatorConfig,
    HeavyTailSpec,
    concentration_radius,
    median_of_block_means,
    median_of_means,
    median_of_means_batch,
    mom_group_count,
)
from batchtail.finite_arm import (
    BaseHPolicy,
    BaseHState,
    elimination_threshold,
    run_base_h,
)
from batchtail.grids import (
    DiameterSchedule,
    Grid,
    default_lipschitz_batches,
    diameter_schedule,
    min_batches_minimax,
    minimax_point_closed_form,
    static_geometric_grid,
    static_minimax_grid,
)
from batchtail.harness import (
    ConfigError,
    ExperimentConfig,
    FitResult,
    Perturbation,
    RegretTrace,
    RunRecord,
    config_hash,
    export,
    fit_scaling_exponent,
    load_config,
    load_record,
    replicate,
    simulate,
)
from batchtail.lipschitz import (
    BlinHPolicy,
    Cube,
    LipschitzInstance,
    ZoomingFit,
    cube_containing,
    eliminate_cubes,
    estimate_zooming_dimension,
    make_lipschitz_instance,
    partition,
    run_blin_h,
)
from batchtail.rewards import (
    AdaptiveLowerboundFamily,
    FiniteArmInstance,
    ParetoShifted,
    PointMass,
    ThreePointV,
    TwoPointNu,
    centered_moment,
    make_adaptive_lowerbound_family,
    make_static_lowerbound_family,
    mean,
    nu_law,
    sample,
    sample_many,
    verify_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # estimators
    "EstimatorConfig",
    "HeavyTailSpec",
    "concentration_radius",
    "median_of_block_means",
    "median_of_means",
    "median_of_means_batch",
    "mom_group_count",
    # grids and schedules
    "DiameterSchedule",
    "Grid",
    "default_lipschitz_batches",
    "diameter_schedule",
    "min_batches_minimax",
    "minimax_point_closed_form",
    "static_geometric_grid",
    "static_minimax_grid",
    # reward laws and instance families
    "AdaptiveLowerboundFamily",
    "FiniteArmInstance",
    "ParetoShifted",
    "PointMass",
    "ThreePointV",
    "TwoPointNu",
    "centered_moment",
    "make_adaptive_lowerbound_family",
    "make_static_lowerbound_family",
    "mean",
    "nu_law",
    "sample",
    "sample_many",
    "verify_certificate",
    # finite-arm policy
    "BaseHPolicy",
    "BaseHState",
    "elimination_threshold",
    "run_base_h",
    # continuum policy and zooming oracle
    "BlinHPolicy",
    "Cube",
    "LipschitzInstance",
    "ZoomingFit",
    "cube_containing",
    "eliminate_cubes",
    "estimate_zooming_dimension",
    "make_lipschitz_instance",
    "partition",
    "run_blin_h",
    # harness
    "ConfigError",
    "ExperimentConfig",
    "FitResult",
    "Perturbation",
    "RegretTrace",
    "RunRecord",
    "config_hash",
    "export",
    "fit_scaling_exponent",
    "load_config",
    "load_record",
    "replicate",
    "simulate",
]
