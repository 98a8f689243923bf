"""Joint feature-distribution and task-semantic adaptation for unsupervised
transfer between related binary tasks, with synthetic two-domain benchmarks."""

from .autodiff import ShapeError, Tensor, backward, gradient_reversal
from .datasets import (SHIFTED_MOONS_TASKFLIP, SHIFTED_MOONS_TASKFLIP_SEED,
                       DomainDataset, ShiftSpec, generate_gaussian_blobs,
                       generate_task_shift_moons, load_csv, write_csv)
from .evaluation import MetricsReport, compute_prf, format_percent, mmd, roc_auc
from .networks import (AdaptorParams, MlpParams, MlpSpec, NetworkParams, clone_params,
                       default_specs, forward_classifier, forward_discriminator,
                       forward_feature, init_networks, load_checkpoint, save_checkpoint)
from .objectives import (LossWeights, classification_loss, domain_adversarial_loss,
                         feature_critic_loss, gram_features, task_semantic_loss,
                         total_loss)
from .pivot import PivotEntry, PivotSet, pseudo_label, select_pivot
from .trainer import (FitResult, NesterovSGD, TrainConfig, TrainLog, TrainingAborted,
                      fit, lr_schedule, predict, update_adaptor, update_main)

__version__ = "0.1.0"

__all__ = [
    "AdaptorParams", "DomainDataset", "FitResult", "LossWeights", "MetricsReport",
    "MlpParams", "MlpSpec", "NesterovSGD", "NetworkParams", "PivotEntry", "PivotSet",
    "SHIFTED_MOONS_TASKFLIP", "SHIFTED_MOONS_TASKFLIP_SEED", "ShapeError", "ShiftSpec",
    "Tensor", "TrainConfig", "TrainLog", "TrainingAborted", "backward",
    "classification_loss", "clone_params", "compute_prf", "default_specs",
    "domain_adversarial_loss", "feature_critic_loss", "fit", "format_percent",
    "forward_classifier", "forward_discriminator", "forward_feature",
    "generate_gaussian_blobs", "generate_task_shift_moons", "gradient_reversal",
    "gram_features", "init_networks", "load_checkpoint", "load_csv", "lr_schedule",
    "mmd", "predict", "pseudo_label", "roc_auc", "save_checkpoint", "select_pivot",
    "task_semantic_loss", "total_loss", "update_adaptor", "update_main", "write_csv",
]
