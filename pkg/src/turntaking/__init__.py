"""Probabilistic modeling, fitting, and simulation of group turn-taking.

The model scores each member's inclination to take the next turn from an
inherent score, a memory score, and a proclivity function of how long ago
they last spoke; turn probabilities are the normalized scores with the
previous speaker excluded. The package provides the model core, fixed and
learnable proclivities, maximum-likelihood fitting by block coordinate
descent, synthetic data generation with known ground truth, evaluation
with plain and class-weighted losses, and a CLI for full experiments.
"""

from .model import (
    ClassWeights,
    Conversation,
    DegenerateDistributionError,
    EPS_FLOOR,
    GapState,
    NEVER,
    Roster,
    ScoreParams,
    TurnClass,
    ZeroLikelihoodError,
    class_weights,
    classify_turn,
    classify_turns,
    compute_gaps,
    gap_matrix,
    likelihood_sequence,
    next_speaker,
    nll_loss,
    sample_conversation,
    sample_speaker,
    speaking_probabilities,
    speaking_scores,
    weighted_loss,
)
from .neural import (
    DenseNet,
    GradientSet,
    apply_update,
    backward,
    clip_gradients,
    forward,
    init_net,
    sigmoid,
)
from .proclivity import (
    DegenerateRatioError,
    ExpDecayProclivity,
    LearnedProclivity,
    ProclivityCurve,
    SigmoidProclivity,
    ZeroProclivity,
    by_name,
    rescaled_curve,
    w_exp,
    w_sig,
)
from .synthgen import (
    Group,
    SynthConfig,
    SynthDataset,
    d_of_trait,
    generate_dataset,
    pi_of_trait,
    sample_traits,
    substream,
    traits_to_scores,
)
from .training import (
    FitConfig,
    FitDivergenceError,
    FitResult,
    ModelBundle,
    TrainingSet,
    conversation_nll_gradients,
    fit,
    predict_scores,
)
from .evaluation import (
    EvalReport,
    MissingGroundTruthError,
    EvalSummary,
    ExperimentConfig,
    GroupLoss,
    TrialResult,
    TrueModel,
    boxplot_stats,
    evaluate,
    model_curve,
    run_experiment,
    true_model,
)

__version__ = "0.1.0"

__all__ = [
    "ClassWeights",
    "Conversation",
    "DegenerateDistributionError",
    "DegenerateRatioError",
    "DenseNet",
    "EPS_FLOOR",
    "EvalReport",
    "EvalSummary",
    "ExpDecayProclivity",
    "ExperimentConfig",
    "FitConfig",
    "FitDivergenceError",
    "FitResult",
    "GapState",
    "GradientSet",
    "Group",
    "GroupLoss",
    "LearnedProclivity",
    "MissingGroundTruthError",
    "ModelBundle",
    "NEVER",
    "ProclivityCurve",
    "Roster",
    "ScoreParams",
    "SigmoidProclivity",
    "SynthConfig",
    "SynthDataset",
    "TrainingSet",
    "TrialResult",
    "TrueModel",
    "TurnClass",
    "ZeroLikelihoodError",
    "ZeroProclivity",
    "apply_update",
    "backward",
    "boxplot_stats",
    "by_name",
    "class_weights",
    "classify_turn",
    "classify_turns",
    "clip_gradients",
    "compute_gaps",
    "conversation_nll_gradients",
    "d_of_trait",
    "evaluate",
    "fit",
    "forward",
    "gap_matrix",
    "generate_dataset",
    "init_net",
    "likelihood_sequence",
    "model_curve",
    "next_speaker",
    "nll_loss",
    "pi_of_trait",
    "predict_scores",
    "rescaled_curve",
    "run_experiment",
    "sample_conversation",
    "sample_speaker",
    "sample_traits",
    "sigmoid",
    "speaking_probabilities",
    "speaking_scores",
    "substream",
    "traits_to_scores",
    "true_model",
    "w_exp",
    "w_sig",
    "weighted_loss",
]
