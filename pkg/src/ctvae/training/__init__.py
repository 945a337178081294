from ctvae.training.losses import (
    LossWeights,
    loss_action,
    loss_causal,
    loss_standard,
    total_ct_loss,
)
from ctvae.training.config import RunConfig, DataConfig, TrainConfig, parse_schema_spec
from ctvae.training.checkpoint import Bundle, load_bundle, save_checkpoint
from ctvae.training.pretrain import run_pretrain
from ctvae.training.ct_train import run_ct_training

__all__ = [
    "LossWeights",
    "loss_action",
    "loss_causal",
    "loss_standard",
    "total_ct_loss",
    "RunConfig",
    "DataConfig",
    "TrainConfig",
    "parse_schema_spec",
    "Bundle",
    "load_bundle",
    "save_checkpoint",
    "run_pretrain",
    "run_ct_training",
]
