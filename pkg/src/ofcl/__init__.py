"""Open-world few-shot continual learning engine.

Instance-wise token augmentation, margin-based hypersphere open boundaries
and an adaptive knowledge space that clusters detected unknowns and promotes
them to knowns, plus a synthetic task-stream generator and an evaluation
harness for open-world continual-learning metrics.
"""

from .boundaries import (
    Detection,
    Hypersphere,
    MarginConfig,
    compute_centroid,
    detect,
    detect_batch,
    init_radius,
    margin_loss,
    openness_score,
    openness_scores,
)
from .config import RunConfig, resolve_config
from .errors import (
    DegenerateInputError,
    GenerationError,
    NumericalError,
    OfclError,
    ParseError,
    UsageError,
)
from .features import Backbone, augmented_feature, extract, make_backbone, query
from .knowledge import (
    ClusterParams,
    KnowledgeSpace,
    Promotion,
    absorb_unknowns,
    cluster_unknowns,
    promote,
)
from .metrics import (
    MetricsReport,
    PredictionRecord,
    accuracy,
    aggregate,
    auroc,
    fpr_at_tpr,
)
from .pipeline import RunResult, run
from .stream import Episode, StreamSpec, generate, read_episode, write_episode
from .tokens import Token, TokenBank
from .training import (
    Adam,
    Classifier,
    TokenConfig,
    TrainConfig,
    TrainerState,
    classification_loss,
    combined_step,
    init_state,
    train_task,
)

__version__ = "0.1.0"
