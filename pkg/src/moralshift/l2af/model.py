"""Shared feature extractor, prediction head, weighting head, joint loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..labels import DEFAULT_SCHEME

WEIGHT_EPS = 1e-7  # keeps sigmoid outputs strictly inside (0, 1)


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embedding_dim: int = 32
    hidden_dim: int = 32
    encoder_kind: str = "bigru"
    max_len: int = 60
    dropout: float = 0.2
    n_classes: int = len(DEFAULT_SCHEME)

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be at least 1")
        if min(self.vocab_size, self.embedding_dim, self.hidden_dim) < 1:
            raise ValueError("dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
            "encoder_kind": self.encoder_kind,
            "max_len": self.max_len,
            "dropout": self.dropout,
            "n_classes": self.n_classes,
        }


class BiGRUEncoder(nn.Module):
    """Embedding plus one bidirectional gated-recurrent layer.

    The document representation is the concatenation of the two final
    directional states; padding is excluded from the recurrence.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.embedding = nn.Embedding(config.vocab_size, config.embedding_dim, padding_idx=0)
        self.gru = nn.GRU(
            config.embedding_dim, config.hidden_dim, batch_first=True, bidirectional=True
        )
        self.output_dim = 2 * config.hidden_dim

    def forward(self, token_ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if token_ids.ndim != 2:
            raise ValueError("token_ids must be (batch, time)")
        if int(lengths.min()) <= 0:
            raise ValueError("cannot encode an empty token sequence")
        emb = self.embedding(token_ids)
        if int(lengths.min()) == token_ids.shape[1]:
            _, h = self.gru(emb)
        else:
            packed = nn.utils.rnn.pack_padded_sequence(
                emb, lengths.cpu(), batch_first=True, enforce_sorted=False
            )
            _, h = self.gru(packed)
        return torch.cat([h[0], h[1]], dim=1)


ENCODER_REGISTRY = {"bigru": BiGRUEncoder}


def register_encoder(name: str, builder) -> None:
    """Plug in an alternative feature extractor (e.g. a contextual encoder).

    ``builder(config)`` must return an nn.Module with an ``output_dim``
    attribute and ``forward(token_ids, lengths) -> (batch, output_dim)``.
    """
    ENCODER_REGISTRY[name] = builder


class L2AFModel(nn.Module):
    """Feature extractor feeding the moral prediction and weighting heads."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        if config.encoder_kind not in ENCODER_REGISTRY:
            raise ValueError(
                f"unknown encoder kind {config.encoder_kind!r}; "
                f"registered: {sorted(ENCODER_REGISTRY)}"
            )
        self.config = config
        self.encoder = ENCODER_REGISTRY[config.encoder_kind](config)
        self.dropout = nn.Dropout(config.dropout)
        self.pred_head = nn.Linear(self.encoder.output_dim, config.n_classes)
        self.weight_head = nn.Linear(self.encoder.output_dim, 1)

    # parameter groups, named after their roles in the joint objective
    def extractor_parameters(self):
        return list(self.encoder.parameters())

    def prediction_parameters(self):
        return list(self.pred_head.parameters())

    def weighting_parameters(self):
        return list(self.weight_head.parameters())

    def encode(self, token_ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        return self.encoder(token_ids, lengths)

    def moral_logits(self, features: torch.Tensor) -> torch.Tensor:
        return self.pred_head(self.dropout(features))

    def predict_moral(self, features: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.moral_logits(features), dim=1)

    def weight_logits(self, features: torch.Tensor) -> torch.Tensor:
        return self.weight_head(features).squeeze(-1)

    def predict_weight(self, features: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.weight_logits(features)).clamp(WEIGHT_EPS, 1.0 - WEIGHT_EPS)

    def init_parameters(self, seed: int, pretrained_embeddings: np.ndarray | None = None) -> None:
        """Deterministic initialization; each head draws from its own stream,
        so adding or removing a head never shifts the others' initial values."""
        children = np.random.SeedSequence(seed).spawn(4)
        rngs = [np.random.Generator(np.random.PCG64(c)) for c in children]
        emb_rng, enc_rng, pred_rng, weight_rng = rngs

        with torch.no_grad():
            named = dict(self.encoder.named_parameters())
            emb_key = next((k for k in named if k.endswith("embedding.weight")), None)
            for name in sorted(named):
                param = named[name]
                if name == emb_key:
                    if pretrained_embeddings is not None:
                        param.copy_(torch.from_numpy(pretrained_embeddings).to(param.dtype))
                    else:
                        # unit-scale rows keep the recurrent gates out of the
                        # tiny-preactivation regime, which matters at the
                        # small learning rates the tuning range allows
                        param.copy_(
                            torch.from_numpy(
                                emb_rng.standard_normal(tuple(param.shape))
                            ).to(param.dtype)
                        )
                        param[0].zero_()  # padding row
                else:
                    bound = 1.0 / np.sqrt(max(1, param.shape[-1] if param.ndim > 1 else param.shape[0]))
                    param.copy_(
                        torch.from_numpy(
                            enc_rng.uniform(-bound, bound, tuple(param.shape))
                        ).to(param.dtype)
                    )
            for head, rng in ((self.pred_head, pred_rng), (self.weight_head, weight_rng)):
                bound = 1.0 / np.sqrt(head.in_features)
                head.weight.copy_(
                    torch.from_numpy(rng.uniform(-bound, bound, tuple(head.weight.shape))).to(
                        head.weight.dtype
                    )
                )
                head.bias.copy_(
                    torch.from_numpy(rng.uniform(-bound, bound, tuple(head.bias.shape))).to(
                        head.bias.dtype
                    )
                )


def moral_cross_entropy(model: L2AFModel, features: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-document cross-entropy of the prediction head (dropout follows
    the module's train/eval mode)."""
    return F.cross_entropy(model.moral_logits(features), labels, reduction="none")


def domain_bce(model: L2AFModel, features: torch.Tensor, domain_labels: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy of the in-domain probability."""
    return F.binary_cross_entropy_with_logits(model.weight_logits(features), domain_labels)


def joint_loss(
    model: L2AFModel,
    token_ids: torch.Tensor,
    lengths: torch.Tensor,
    domain_labels: torch.Tensor,
    moral_labels: torch.Tensor,
    alpha: float,
    weight_gradients: bool = False,
    fixed_weights: torch.Tensor | None = None,
    normalize_weights: bool = False,
) -> tuple[torch.Tensor, dict]:
    """The joint objective: alpha * domain BCE + weighted mean moral CE.

    ``moral_labels`` uses -1 for documents without a moral label (they
    contribute to the domain term only). The moral term's weight
    multiplier is the in-domain probability of each source document,
    treated as a constant by default; pass ``weight_gradients=True`` to
    let the moral term backpropagate into the weighting head through it,
    or ``fixed_weights`` to supply the multipliers explicitly.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    features = model.encode(token_ids, lengths)
    d_loss = domain_bce(model, features, domain_labels)
    source = moral_labels >= 0
    if bool(source.any()):
        ce = moral_cross_entropy(model, features[source], moral_labels[source])
        if fixed_weights is not None:
            mult = fixed_weights
        else:
            w = model.predict_weight(features[source])
            mult = w if weight_gradients else w.detach()
        if normalize_weights:
            mult = mult / mult.mean()
        m_loss = (mult * ce).mean()
    else:
        m_loss = torch.zeros((), dtype=features.dtype)
    total = alpha * d_loss + m_loss
    return total, {"domain": float(d_loss.detach()), "moral": float(m_loss.detach())}
