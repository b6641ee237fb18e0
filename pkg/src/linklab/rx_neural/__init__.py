"""Learned receivers: per-RE demappers, conv demapper, neural receiver,
and the jointly trained pilotless constellation."""

from .models import (
    PerReDemapper,
    ResNetBackbone,
    TrainableConstellation,
    clip_llrs,
    gather_re_logits,
)
from .training import (
    TRAINERS,
    InferenceBundle,
    equalized_features,
    equalized_planes,
    load_bundle,
    load_inference,
    read_sidecar,
    received_planes,
    train_conv_demapper,
    train_end_to_end,
    train_neural_receiver,
    train_per_re_demapper,
)

__all__ = [
    "PerReDemapper",
    "ResNetBackbone",
    "TrainableConstellation",
    "clip_llrs",
    "gather_re_logits",
    "TRAINERS",
    "InferenceBundle",
    "equalized_features",
    "equalized_planes",
    "load_bundle",
    "load_inference",
    "read_sidecar",
    "received_planes",
    "train_conv_demapper",
    "train_end_to_end",
    "train_neural_receiver",
    "train_per_re_demapper",
]
