"""Toy encoder-decoder sequence model, its CE/CTC/KD losses and greedy decoding."""

from aoscl.seqmodel.losses import (
    batch_ce_and_grad,
    batch_total_and_grad,
    ce_loss,
    ce_loss_and_grad,
    ctc_loss,
    kd_loss,
    kd_loss_and_grad,
    total_loss,
    total_loss_and_grad,
    value_and_grad,
)
from aoscl.seqmodel.model import (
    ModelConfig,
    ModelOutputs,
    Sample,
    Utterance,
    forward,
    greedy_decode,
    init_params,
    shape_of,
)

__all__ = [
    "ModelConfig",
    "ModelOutputs",
    "Sample",
    "Utterance",
    "batch_ce_and_grad",
    "batch_total_and_grad",
    "ce_loss",
    "ce_loss_and_grad",
    "ctc_loss",
    "forward",
    "greedy_decode",
    "init_params",
    "kd_loss",
    "kd_loss_and_grad",
    "shape_of",
    "total_loss",
    "total_loss_and_grad",
    "value_and_grad",
]
