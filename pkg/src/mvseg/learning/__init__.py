"""Toy differentiable RGB-D encoder-decoder, consistency losses and trainer."""

from mvseg.learning.losses import (
    consistency_loss,
    cross_entropy_loss,
    label_pyramid,
    stochastic_pool_labels,
)
from mvseg.learning.net import (
    FrameForward,
    ToyNetConfig,
    init_params,
    toynet_backward,
    toynet_forward,
    toynet_forward_full,
)
from mvseg.learning.train import (
    SequenceSample,
    TrainConfig,
    curriculum_sampler,
    evaluate_fused_keyframes,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    train_toy,
)

__all__ = [
    "FrameForward",
    "SequenceSample",
    "ToyNetConfig",
    "TrainConfig",
    "consistency_loss",
    "cross_entropy_loss",
    "curriculum_sampler",
    "evaluate_fused_keyframes",
    "init_params",
    "label_pyramid",
    "load_checkpoint",
    "save_checkpoint",
    "sgd_step",
    "stochastic_pool_labels",
    "toynet_backward",
    "toynet_forward",
    "toynet_forward_full",
    "train_toy",
]
