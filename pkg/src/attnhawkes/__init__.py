"""Attention-based nonlinear Hawkes processes.

Simulation of ground-truth multivariate Hawkes data, maximum-likelihood
training of attention-based intensity models with exact hand-derived
gradients, and extraction of interpretable artifacts: recovered trigger
kernels, influence heatmaps, attention maps, and intensity traces.
"""

from .diff import GradientBundle, finite_diff_gradient, objective_and_gradients, objective_value
from .domain import (
    Dataset,
    EventSequence,
    IntegrationGrid,
    make_grid,
    split_dataset,
    validate_sequence,
)
from .evaluate import (
    Heatmap,
    IntensityTrace,
    KernelEstimate,
    influence_heatmap,
    intensity_trace,
    recover_kernel,
    test_tll,
    type_accuracy,
)
from .io import load_data, load_model, load_sequences, save_dataset, save_model, save_sequences
from .model import (
    VARIANT_ATTENTION,
    VARIANT_EXTRAPOLATION,
    AttentionMap,
    ModelConfig,
    ModelParams,
    attention_matrix,
    attention_weights,
    event_embedding,
    ex_intensity_at,
    intensity_all_types,
    intensity_at,
    temporal_embedding,
    trigger_contribution,
    type_embedding,
)
from .simulator import (
    EXPONENTIAL,
    HALF_SINE,
    HawkesSpec,
    kernel_eval,
    simulate_dataset,
    thin_simulate,
    true_intensity,
)
from .trainer import (
    TrainConfig,
    TrainReport,
    compensator,
    event_term,
    init_params,
    log_likelihood,
    train,
)

__version__ = "0.1.0"
