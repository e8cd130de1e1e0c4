"""Distance-based phylogeny reconstruction by exponential averaging.

Simulates reversible-model sequence evolution on trees, estimates
evolutionary distances from pairwise correlation matrices, reconstructs
topologies through grid-distorted deep distances and cherry picking, and
ships an experiment harness for the statistical properties that make the
averaging estimator work at short sequence lengths.
"""

from kslog.errors import ConfigError, ReconstructionFailure
from kslog.models import (RateModel, TransitionMatrix, build_model,
                          transition, cfn_model, binary_asymmetric_model,
                          resolve_model)
from kslog.trees import (Phylogeny, UnrootedTopology, rf_distance,
                         homogeneous_phylogeny, random_grid_phylogeny,
                         random_ultrametric_phylogeny)
from kslog.simulate import Alignment, sample_alignment, sigma_view
from kslog.distances import (CorrelationMatrix, DistanceTable,
                             correlation_matrix, tau_hat_eigen)
from kslog.averaging import GridParams, G_STAR
from kslog.homogeneous import reconstruct_homogeneous
from kslog.forests import forest_reconstruct
from kslog.wpgma import wpgma
from kslog.experiments import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ReconstructionFailure",
    "RateModel", "TransitionMatrix", "build_model", "transition",
    "cfn_model", "binary_asymmetric_model", "resolve_model",
    "Phylogeny", "UnrootedTopology", "rf_distance",
    "homogeneous_phylogeny", "random_grid_phylogeny",
    "random_ultrametric_phylogeny",
    "Alignment", "sample_alignment", "sigma_view",
    "CorrelationMatrix", "DistanceTable", "correlation_matrix",
    "tau_hat_eigen",
    "GridParams", "G_STAR",
    "reconstruct_homogeneous", "forest_reconstruct", "wpgma",
    "ExperimentConfig", "run_experiment",
    "__version__",
]
