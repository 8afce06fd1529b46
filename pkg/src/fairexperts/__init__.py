"""Group-fair classification without harm.

Learns group-specific representations through discriminator linkage,
learnable per-(group, class) centers, and a diversity loss; trains
per-group expert heads; and post-selects between experts and a pooled
baseline under a no-harm constraint (greedy max-min or an exact integer
program).
"""

from .config import ExperimentConfig, load_config
from .data import (
    CsvSchema,
    DataError,
    Dataset,
    GroupStats,
    Sample,
    SyntheticConfig,
    generate_synthetic,
    group_stats,
    load_csv,
    save_csv,
)
from .experiment import run_experiment, run_seed
from .losses import (
    PairAssignment,
    VirtualCenters,
    center_alignment_loss,
    cosine_sim,
    discriminator_loss,
    diversity_loss,
    sample_pairs,
)
from .metrics import (
    GroupMetrics,
    MetricsReport,
    accuracy,
    auc,
    build_report,
    equalized_odds,
    gap,
    group_eval,
    max_min,
)
from .net import Layer, Mlp, SgdState, TrainingDivergence, decay_lr, init_mlp, init_sgd, sgd_step
from .selection import (
    SelectionDecision,
    combine,
    route_predict,
    routed_predictor,
    select_greedy,
    select_ip,
)
from .training import (
    DecoupledModel,
    ErmModel,
    ExpertsModel,
    HyperParams,
    discriminator_accuracy,
    extract_representations,
    probe_group_accuracy,
    train_decoupled,
    train_erm,
    train_experts,
)

__version__ = "0.1.0"
