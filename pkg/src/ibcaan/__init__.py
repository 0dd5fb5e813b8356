"""Information-bottleneck, confidence-aware adversarial training for spoof detection."""

from .autodiff import Tape, Tensor, make_rng
from .metrics import ScoreRecord, compute_eer, eer_from_scores, read_scores, write_scores
from .model import ModelDims, ModelParams, init_params, model_forward, predict_scores
from .objectives import ce_multiclass, grl_lambda, kl_std_normal, total_loss, weighted_bce
from .shiftbench import Dataset, SyntheticSpec, generate_dataset, read_dataset, write_dataset
from .trainer import (
    CheckpointSet,
    TrainConfig,
    adam_step,
    average_checkpoints,
    run_ablation,
    run_experiment,
)
from .variants import Variant

__version__ = "0.1.0"
