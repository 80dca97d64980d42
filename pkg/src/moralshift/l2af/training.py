"""Two-phase adaptive training and the no-adaptation baseline trainer.

Phase 1 converges the weighting pathway on the binary in-domain task
(adaptive-moment optimizer over the extractor and weighting head);
convergence means the validation domain loss stops improving by at
least ``phase1_min_delta`` for ``phase1_patience`` epochs. Phase 2
takes per-batch simultaneous steps on the joint objective: the weighted
moral term drives the extractor and prediction head through a
root-mean-square-propagation optimizer, while the domain term keeps
updating the weighting head on the current (frozen-per-step) features,
so the instance weights keep adapting as the extractor moves. No
gradient reaches the weighting head through the moral term's weight
multiplier, and none reaches the extractor through the domain term:
letting the domain term steer the extractor in phase 2 keeps it
domain-locked and stalls the moral task (measured).
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..baseline import f1_score
from ..corpus import Dataset
from .data import PAD_ID, Cycler, EncodedDocs, Vocabulary, build_vocabulary, encode_documents
from .model import EncoderConfig, L2AFModel, domain_bce, moral_cross_entropy

LEARNING_RATE_RANGE = (1e-6, 1e-4)


@dataclass(frozen=True)
class TrainHyper:
    """Training knobs; learning-rate defaults sit at the top of the tuned range."""

    alpha: float = 0.1
    batch_size: int = 16
    epochs: int = 30
    lr_weighting: float = 1e-4
    lr_prediction: float = 1e-4
    phase1_patience: int = 3
    phase1_min_delta: float = 0.01
    phase1_max_epochs: int | None = None
    phase2_patience: int = 10
    source_target_ratio: int = 3
    seed: int = 0
    vocab_limit: int = 10_000
    normalize_weights: bool = False
    weight_gradients: bool = False
    pin_weight: float | None = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.source_target_ratio < 1:
            raise ValueError("source_target_ratio must be at least 1")
        for name in ("lr_weighting", "lr_prediction"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "lr_weighting": self.lr_weighting,
            "lr_prediction": self.lr_prediction,
            "phase1_patience": self.phase1_patience,
            "phase1_min_delta": self.phase1_min_delta,
            "phase1_max_epochs": self.phase1_max_epochs,
            "phase2_patience": self.phase2_patience,
            "source_target_ratio": self.source_target_ratio,
            "seed": self.seed,
            "vocab_limit": self.vocab_limit,
            "normalize_weights": self.normalize_weights,
            "weight_gradients": self.weight_gradients,
            "pin_weight": self.pin_weight,
        }


@dataclass
class TrainedModel:
    model: L2AFModel
    vocab: Vocabulary
    config: EncoderConfig
    hyper: TrainHyper
    history: tuple[dict, ...] = field(default_factory=tuple)
    best_epoch: int | None = None


class _JsonlLogger:
    def __init__(self, path):
        self._fh = open(path, "a", encoding="utf-8") if path else None

    def write(self, record: dict):
        if self._fh:
            slim = {k: v for k, v in record.items() if k != "step_moral_losses"}
            self._fh.write(json.dumps(slim) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()


def _batch_tensors(encoded: EncodedDocs, idx: list[int]):
    ids, lengths = encoded.batch(idx)
    return ids, lengths, encoded.labels[torch.as_tensor(idx, dtype=torch.int64)]


def _mixed_batch(src: EncodedDocs, si: list[int], tgt: EncodedDocs, ti: list[int]):
    ids_a, len_a = src.batch(si)
    ids_b, len_b = tgt.batch(ti)
    width = max(ids_a.shape[1], ids_b.shape[1])
    merged = torch.full((len(si) + len(ti), width), PAD_ID, dtype=torch.int64)
    merged[: len(si), : ids_a.shape[1]] = ids_a
    merged[len(si) :, : ids_b.shape[1]] = ids_b
    return merged, torch.cat([len_a, len_b])


def _forward_in_chunks(model: L2AFModel, encoded: EncodedDocs, idx, fn, chunk: int = 256):
    out = []
    with torch.no_grad():
        for start in range(0, len(idx), chunk):
            ids, lengths = encoded.batch(idx[start : start + chunk])
            out.append(fn(model.encode(ids, lengths)))
    return torch.cat(out) if out else torch.empty(0)


def _validation_macro_f1(model: L2AFModel, encoded: EncodedDocs) -> float:
    model.eval()
    idx = list(range(len(encoded)))
    probs = _forward_in_chunks(model, encoded, idx, model.predict_moral)
    pred = np.argmax(probs.numpy(), axis=1)
    return f1_score(encoded.labels.numpy(), pred, averaging="macro")


def _domain_validation_loss(
    model: L2AFModel, src: EncodedDocs, neg_idx: np.ndarray, tgt: EncodedDocs
) -> float:
    model.eval()
    logits_pos = _forward_in_chunks(model, tgt, list(range(len(tgt))), model.weight_logits)
    logits_neg = _forward_in_chunks(model, src, [int(i) for i in neg_idx], model.weight_logits)
    logits = torch.cat([logits_pos, logits_neg])
    labels = torch.cat([torch.ones(len(logits_pos)), torch.zeros(len(logits_neg))])
    return float(torch.nn.functional.binary_cross_entropy_with_logits(logits, labels))


def _setup(
    train_data: Dataset,
    hyper: TrainHyper,
    embedding_dim: int,
    hidden_dim: int,
    max_len: int,
    encoder_kind: str,
    dropout: float,
    pretrained_embeddings,
):
    torch.set_num_threads(1)
    torch.manual_seed(hyper.seed)
    vocab = build_vocabulary(train_data, hyper.vocab_limit)
    config = EncoderConfig(
        vocab_size=len(vocab),
        embedding_dim=embedding_dim,
        hidden_dim=hidden_dim,
        encoder_kind=encoder_kind,
        max_len=max_len,
        dropout=dropout,
    )
    model = L2AFModel(config)
    model.init_parameters(hyper.seed, pretrained_embeddings)
    return vocab, config, model


def train(
    sources: Dataset,
    target_validation: Dataset,
    hyper: TrainHyper | None = None,
    *,
    embedding_dim: int = 32,
    hidden_dim: int = 32,
    max_len: int = 60,
    encoder_kind: str = "bigru",
    dropout: float = 0.2,
    pretrained_embeddings: np.ndarray | None = None,
    log_path=None,
    check_domains: bool = True,
) -> TrainedModel:
    """Train the adaptive model on source domains plus target validation data.

    Target-validation documents act as in-domain positives for the
    weighting task and as the early-stopping set for the moral task.
    ``hyper.pin_weight`` replaces the weighting pathway with a constant
    multiplier (phase 1 is skipped and batches carry no target rows);
    with the constant at 1 the run is step-for-step the no-adapt baseline.
    """
    hyper = hyper or TrainHyper()
    if check_domains:
        overlap = set(sources.domains) & set(target_validation.domains)
        if overlap:
            raise ValueError(f"target domain(s) {sorted(overlap)} appear in the sources")
    if len(target_validation) == 0:
        raise ValueError("target_validation is empty")

    vocab, config, model = _setup(
        sources, hyper, embedding_dim, hidden_dim, max_len, encoder_kind, dropout,
        pretrained_embeddings,
    )
    src = encode_documents(sources, vocab, max_len)
    tgt = encode_documents(target_validation, vocab, max_len)

    kids = np.random.SeedSequence(hyper.seed).spawn(3)
    rng_src = np.random.Generator(np.random.PCG64(kids[0]))
    rng_tgt = np.random.Generator(np.random.PCG64(kids[1]))
    rng_eval = np.random.Generator(np.random.PCG64(kids[2]))

    pinned = hyper.pin_weight is not None
    if pinned:
        src_per_batch, tgt_per_batch = hyper.batch_size, 0
    else:
        tgt_per_batch = max(1, round(hyper.batch_size / (hyper.source_target_ratio + 1)))
        src_per_batch = hyper.batch_size - tgt_per_batch
    steps_per_epoch = math.ceil(len(src) / src_per_batch)

    src_cycler = Cycler(len(src), rng_src)
    tgt_cycler = Cycler(len(tgt), rng_tgt) if tgt_per_batch else None

    history: list[dict] = []
    log = _JsonlLogger(log_path)

    if not pinned:
        opt_phase1 = torch.optim.Adam(
            model.extractor_parameters() + model.weighting_parameters(), lr=hyper.lr_weighting
        )
        neg_idx = rng_eval.choice(len(src), size=min(len(src), len(tgt)), replace=False)
        best = math.inf
        bad = 0
        phase1_cap = min(hyper.epochs, hyper.phase1_max_epochs or hyper.epochs)
        for epoch in range(phase1_cap):
            model.train()
            epoch_loss = 0.0
            for _ in range(steps_per_epoch):
                si = src_cycler.take(src_per_batch)
                ti = tgt_cycler.take(tgt_per_batch)
                ids, lengths = _mixed_batch(src, si, tgt, ti)
                y_d = torch.cat([torch.zeros(len(si)), torch.ones(len(ti))])
                loss = domain_bce(model, model.encode(ids, lengths), y_d)
                opt_phase1.zero_grad()
                loss.backward()
                opt_phase1.step()
                epoch_loss += float(loss.detach())
            val = _domain_validation_loss(model, src, neg_idx, tgt)
            record = {
                "phase": 1,
                "epoch": epoch,
                "domain_loss": epoch_loss / steps_per_epoch,
                "val_domain_loss": val,
            }
            history.append(record)
            log.write(record)
            if val < best - hyper.phase1_min_delta:
                best = val
                bad = 0
            else:
                bad += 1
                if bad >= hyper.phase1_patience:
                    break

    opt_pred = torch.optim.RMSprop(
        model.extractor_parameters() + model.prediction_parameters(), lr=hyper.lr_prediction
    )
    opt_weight = (
        None if pinned else torch.optim.Adam(model.weighting_parameters(), lr=hyper.lr_weighting)
    )

    best_f1 = -math.inf
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = None
    bad = 0
    for epoch in range(hyper.epochs):
        model.train()
        moral_sum = domain_sum = ce_sum = 0.0
        step_moral: list[float] = []
        for _ in range(steps_per_epoch):
            si = src_cycler.take(src_per_batch)
            if pinned:
                ids, lengths, labels = _batch_tensors(src, si)
                features = model.encode(ids, lengths)
                ce = moral_cross_entropy(model, features, labels)
                loss = (hyper.pin_weight * ce).mean()
                opt_pred.zero_grad()
                loss.backward()
                opt_pred.step()
                step_moral.append(float(loss.detach()))
                moral_sum += step_moral[-1]
                continue
            ti = tgt_cycler.take(tgt_per_batch)
            ids, lengths = _mixed_batch(src, si, tgt, ti)
            y_d = torch.cat([torch.zeros(len(si)), torch.ones(len(ti))])
            features = model.encode(ids, lengths)
            src_features = features[: len(si)]
            if hyper.weight_gradients:
                mult = model.predict_weight(src_features)
            else:
                with torch.no_grad():
                    mult = model.predict_weight(src_features)
            if hyper.normalize_weights:
                mult = mult / mult.mean()
            ce = moral_cross_entropy(model, src_features, src.labels[torch.as_tensor(si)])
            moral_loss = (mult * ce).mean()
            ce_sum += float(ce.detach().mean())
            # domain term sees per-step frozen features: it moves only the
            # weighting head, never the extractor
            d_loss = domain_bce(model, features.detach(), y_d)
            loss = hyper.alpha * d_loss + moral_loss
            opt_pred.zero_grad()
            opt_weight.zero_grad()
            loss.backward()
            opt_pred.step()
            opt_weight.step()
            step_moral.append(float(moral_loss.detach()))
            moral_sum += step_moral[-1]
            domain_sum += float(d_loss.detach())
        val_f1 = _validation_macro_f1(model, tgt)
        record = {
            "phase": 2,
            "epoch": epoch,
            "moral_loss": moral_sum / steps_per_epoch,
            "domain_loss": domain_sum / steps_per_epoch,
            "plain_ce": ce_sum / steps_per_epoch,
            "val_macro_f1": val_f1,
            "step_moral_losses": tuple(step_moral),
        }
        history.append(record)
        log.write(record)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= hyper.phase2_patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    log.close()
    return TrainedModel(model, vocab, config, hyper, tuple(history), best_epoch)


def train_no_adapt(
    train_data: Dataset,
    validation: Dataset,
    hyper: TrainHyper | None = None,
    *,
    embedding_dim: int = 32,
    hidden_dim: int = 32,
    max_len: int = 60,
    encoder_kind: str = "bigru",
    dropout: float = 0.2,
    pretrained_embeddings: np.ndarray | None = None,
    log_path=None,
    check_domains: bool = True,
) -> TrainedModel:
    """Baseline: the same architecture trained on plain mean cross-entropy.

    The weighting head exists but is never evaluated or updated. Early
    stopping monitors validation macro F1, mirroring the adaptive run.
    """
    hyper = hyper or TrainHyper()
    if check_domains:
        overlap = set(train_data.domains) & set(validation.domains)
        if overlap:
            raise ValueError(f"validation domain(s) {sorted(overlap)} appear in the training data")
    if len(validation) == 0:
        raise ValueError("validation set is empty")

    vocab, config, model = _setup(
        train_data, hyper, embedding_dim, hidden_dim, max_len, encoder_kind, dropout,
        pretrained_embeddings,
    )
    src = encode_documents(train_data, vocab, max_len)
    val = encode_documents(validation, vocab, max_len)

    kids = np.random.SeedSequence(hyper.seed).spawn(3)
    rng_src = np.random.Generator(np.random.PCG64(kids[0]))
    src_cycler = Cycler(len(src), rng_src)
    steps_per_epoch = math.ceil(len(src) / hyper.batch_size)

    opt = torch.optim.RMSprop(
        model.extractor_parameters() + model.prediction_parameters(), lr=hyper.lr_prediction
    )
    history: list[dict] = []
    log = _JsonlLogger(log_path)
    best_f1 = -math.inf
    best_state = copy.deepcopy(model.state_dict())
    best_epoch = None
    bad = 0
    for epoch in range(hyper.epochs):
        model.train()
        loss_sum = 0.0
        step_moral: list[float] = []
        for _ in range(steps_per_epoch):
            si = src_cycler.take(hyper.batch_size)
            ids, lengths, labels = _batch_tensors(src, si)
            features = model.encode(ids, lengths)
            loss = moral_cross_entropy(model, features, labels).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            step_moral.append(float(loss.detach()))
            loss_sum += step_moral[-1]
        val_f1 = _validation_macro_f1(model, val)
        record = {
            "phase": 2,
            "epoch": epoch,
            "moral_loss": loss_sum / steps_per_epoch,
            "val_macro_f1": val_f1,
            "step_moral_losses": tuple(step_moral),
        }
        history.append(record)
        log.write(record)
        if val_f1 > best_f1:
            best_f1 = val_f1
            best_state = copy.deepcopy(model.state_dict())
            best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= hyper.phase2_patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    log.close()
    return TrainedModel(model, vocab, config, hyper, tuple(history), best_epoch)


def infer(trained: TrainedModel, documents, batch_size: int = 256) -> np.ndarray:
    """Predicted label indices; argmax ties break toward the lowest index."""
    encoded = encode_documents(documents, trained.vocab, trained.config.max_len)
    trained.model.eval()
    probs = _forward_in_chunks(
        trained.model, encoded, list(range(len(encoded))), trained.model.predict_moral, batch_size
    )
    return np.argmax(probs.numpy(), axis=1)


def instance_weights(trained: TrainedModel, documents, batch_size: int = 256) -> np.ndarray:
    """In-domain probabilities the weighting head assigns to documents."""
    encoded = encode_documents(documents, trained.vocab, trained.config.max_len)
    trained.model.eval()
    w = _forward_in_chunks(
        trained.model, encoded, list(range(len(encoded))), trained.model.predict_weight, batch_size
    )
    return w.numpy()
