"""Monotonic multistage classifiers for staged user-item feedback chains.

The package trains and evaluates classifiers that predict, for every
stage pair (t', t), whether a user-item pair that reached behavior
stage t' will also reach stage t.  The main model shares one set of
nonnegative latent factors across all stage pairs, which makes its
predictions structurally monotone along the chain; flat per-pair and
ordinal baselines, a synthetic data generator, evaluation metrics, and
a command line front end round out the toolkit.
"""

from .data import (
    Dataset,
    FeatureSchema,
    Interaction,
    ItemFeatures,
    UserFeatures,
    ValidationReport,
    build_omega,
    load_dataset,
    one_hot_encode,
    save_dataset,
    split_dataset,
    validate_chain,
)
from .model import (
    HyperParams,
    ModelParams,
    PairPredictions,
    ProbabilityChain,
    all_pairs,
    bayes_from_chain,
    count_params,
    decision_value,
    expand_weights,
    item_map,
    model_objective,
    predict_cells,
    predict_dataset,
    predict_label,
    stage_vector,
    user_map,
)
from .modelio import load_model, save_model
from .baselines import (
    OrdinalModel,
    StandardModel,
    fit_ordinal,
    fit_ordinal_stage,
    fit_standard,
    fit_standard_pair,
    predict_ordinal,
    predict_standard,
)
from .metrics import (
    EvalReport,
    balanced_error,
    evaluate_model,
    inconsistency_rate,
    overall_error,
    pairwise_error,
)
from .simulate import SimConfig, default_config, generate_dataset
from .solver import (
    SubproblemSolution,
    SubproblemSpec,
    kkt_residual,
    primal_objective,
    solve_subproblem,
)
from .train import BlockId, TrainTrace, apply_block, assemble_block, enumerate_blocks, fit, init_params

__version__ = "0.1.0"
