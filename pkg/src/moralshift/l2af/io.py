"""Checkpoint serialization: one self-describing JSON file per model."""

from __future__ import annotations

import json

import numpy as np
import torch

from .data import Vocabulary
from .model import EncoderConfig, L2AFModel
from .training import TrainedModel, TrainHyper

FORMAT = "moralshift-l2af-v1"


def save_checkpoint(trained: TrainedModel, path) -> None:
    params = {
        name: {"shape": list(tensor.shape), "data": tensor.detach().cpu().double().numpy().ravel().tolist()}
        for name, tensor in trained.model.state_dict().items()
    }
    payload = {
        "format": FORMAT,
        "config": trained.config.to_dict(),
        "hyper": trained.hyper.to_dict(),
        "vocab": list(trained.vocab.tokens),
        "best_epoch": trained.best_epoch,
        "params": params,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT:
        raise ValueError(f"unrecognized checkpoint format: {payload.get('format')!r}")
    config = EncoderConfig(**payload["config"])
    hyper_kwargs = payload["hyper"]
    hyper = TrainHyper(**hyper_kwargs)
    model = L2AFModel(config)
    state = {}
    for name, entry in payload["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        state[name] = torch.from_numpy(arr).to(torch.float32)
    model.load_state_dict(state)
    model.eval()
    return TrainedModel(
        model=model,
        vocab=Vocabulary(tuple(payload["vocab"])),
        config=config,
        hyper=hyper,
        best_epoch=payload.get("best_epoch"),
    )
