"""Learning-to-adapt framework: instance-weighted neural domain adaptation."""

from .data import Vocabulary, build_vocabulary, encode_documents, load_embeddings, pad_batch
from .io import load_checkpoint, save_checkpoint
from .model import (
    BiGRUEncoder,
    EncoderConfig,
    L2AFModel,
    domain_bce,
    joint_loss,
    moral_cross_entropy,
    register_encoder,
)
from .training import (
    TrainedModel,
    TrainHyper,
    infer,
    instance_weights,
    train,
    train_no_adapt,
)

__all__ = [
    "Vocabulary",
    "build_vocabulary",
    "encode_documents",
    "load_embeddings",
    "pad_batch",
    "EncoderConfig",
    "BiGRUEncoder",
    "L2AFModel",
    "register_encoder",
    "joint_loss",
    "moral_cross_entropy",
    "domain_bce",
    "TrainHyper",
    "TrainedModel",
    "train",
    "train_no_adapt",
    "infer",
    "instance_weights",
    "save_checkpoint",
    "load_checkpoint",
]
