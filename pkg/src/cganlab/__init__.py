"""Desk-scale laboratory for matching-aware conditional GAN objectives."""

__version__ = "0.1.0"

from .dist import (
    GaussianMixture,
    GeneratorPMF,
    JointPMF,
    MinibatchTriple,
    SyntheticDataset,
    dataset_from_spec,
    discretize,
    make_joint_pmf,
    mismatch_joint,
    sample_minibatch,
)
from .errors import ConfigurationError, TrainingDiverged, ValidationError
from .evaluate import (
    EmpiricalHistogram,
    ExperimentReport,
    d_output_densities,
    histogram,
    mismatch_experiment,
    tv_distance,
)
from .fixedpoint import (
    SolveOptions,
    SolveReport,
    grid_oracle,
    project_simplex,
    random_instance,
    solve_generator,
)
from .nn import AdamState, LatentSpec, Mlp, adam_step, backward, forward, init_mlp
from .objective import (
    DiscriminatorTable,
    ObjectiveKind,
    jsd,
    kl,
    optimal_discriminator,
    value,
    value_at_optimal_d,
)
from .train import GanIntConfig, TrainConfig, TrainHistory, discriminator_loss, \
    generator_loss, train

__all__ = [
    "AdamState",
    "ConfigurationError",
    "DiscriminatorTable",
    "EmpiricalHistogram",
    "ExperimentReport",
    "GanIntConfig",
    "GaussianMixture",
    "GeneratorPMF",
    "JointPMF",
    "LatentSpec",
    "MinibatchTriple",
    "Mlp",
    "ObjectiveKind",
    "SolveOptions",
    "SolveReport",
    "SyntheticDataset",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "ValidationError",
    "adam_step",
    "backward",
    "d_output_densities",
    "dataset_from_spec",
    "discretize",
    "discriminator_loss",
    "forward",
    "generator_loss",
    "grid_oracle",
    "histogram",
    "init_mlp",
    "jsd",
    "kl",
    "make_joint_pmf",
    "mismatch_experiment",
    "mismatch_joint",
    "optimal_discriminator",
    "project_simplex",
    "random_instance",
    "sample_minibatch",
    "solve_generator",
    "train",
    "tv_distance",
    "value",
    "value_at_optimal_d",
]
