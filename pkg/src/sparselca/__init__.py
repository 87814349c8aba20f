"""Sparse latent class analysis with item-level refinement.

Two-stage estimation for binary-response latent class models: an
unrestricted EM fit with BIC class-count selection, followed by a per-item
pseudo-likelihood merge search scored by an extended BIC that collapses
item-response probabilities into a few distinct levels, and a final
constrained re-estimation with standard errors.
"""

from ._backend import active_backend
from .constrained import SparseLcaModel, constrained_em, standard_errors
from .em import EmConfig, FitDiagnostics, em_fit, select_num_classes
from .errors import (
    ConfigError,
    DegenerateBlockError,
    DimensionMismatchError,
    MissingValueError,
    NumericalError,
    ParseError,
    PipelineStageError,
    SingularInformationError,
    SparseLcaError,
)
from .io import dichotomize, read_binary_csv
from .metrics import adjusted_rand_index, mse_beta_aligned, mse_nu_aligned, selection_counts
from .model import (
    BinaryResponseMatrix,
    ClassProportions,
    ItemProbMatrix,
    LcaModel,
    OrderedPartition,
    PosteriorMatrix,
    bic,
    log_likelihood,
    posterior,
)
from .pipeline import PipelineOutput, emit_heatmap_data, run_pipeline
from .refine import (
    EbicConfig,
    ItemCandidate,
    ItemRefinement,
    block_solution,
    ebic,
    exhaustive_item_oracle,
    pseudo_likelihood,
    refine_item,
    stepwise_search,
)
from .simulate import (
    ReplicationReport,
    SimSetting,
    SimulationResult,
    generate_true_params,
    preset_setting,
    run_replication,
    run_simulation,
    sample_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryResponseMatrix",
    "ClassProportions",
    "ConfigError",
    "DegenerateBlockError",
    "DimensionMismatchError",
    "EbicConfig",
    "EmConfig",
    "FitDiagnostics",
    "ItemCandidate",
    "ItemProbMatrix",
    "ItemRefinement",
    "LcaModel",
    "MissingValueError",
    "NumericalError",
    "OrderedPartition",
    "ParseError",
    "PipelineOutput",
    "PipelineStageError",
    "PosteriorMatrix",
    "ReplicationReport",
    "SimSetting",
    "SimulationResult",
    "SingularInformationError",
    "SparseLcaError",
    "SparseLcaModel",
    "active_backend",
    "adjusted_rand_index",
    "bic",
    "block_solution",
    "constrained_em",
    "dichotomize",
    "ebic",
    "em_fit",
    "emit_heatmap_data",
    "exhaustive_item_oracle",
    "generate_true_params",
    "log_likelihood",
    "mse_beta_aligned",
    "mse_nu_aligned",
    "posterior",
    "preset_setting",
    "pseudo_likelihood",
    "read_binary_csv",
    "refine_item",
    "run_pipeline",
    "run_replication",
    "run_simulation",
    "sample_dataset",
    "select_num_classes",
    "selection_counts",
    "standard_errors",
    "stepwise_search",
]
