"""Leave-one-domain-out experiment protocol and reporting.

For each target domain, every other domain's documents form the source
training pool; the target is split 20% validation / 80% test. Three
approaches share the protocol: in_domain trains on the validation
portion only (training on the test portion would leak), no_adapt trains
the plain multitask model on the sources, and adapt runs the full
instance-weighted framework.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .baseline import f1_score
from .corpus import Dataset
from .l2af import TrainHyper, infer, instance_weights, train, train_no_adapt

APPROACHES = ("in_domain", "no_adapt", "adapt")
RUNTIME_BUDGET_SECONDS = 600.0


def lodo_split(dataset: Dataset, target: str, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """(source_train, target_validation, target_test) for one target domain.

    The target split is stratified by label: validation quotas are
    0.2 * count per label, rounded by largest remainder so the overall
    validation share is exactly round(0.2 * n).
    """
    if target not in dataset.domains:
        raise KeyError(f"unknown target domain: {target!r}")
    target_docs = dataset.domain_documents(target)
    if len(target_docs) < 25:
        raise ValueError(f"target domain {target!r} has fewer than 25 documents")
    sources = Dataset(
        tuple(d for d in dataset if d.domain != target), scheme=dataset.scheme
    )
    rng = np.random.Generator(np.random.PCG64(seed))
    n_val_total = round(0.2 * len(target_docs))

    by_label: dict[int, list] = {}
    for doc in target_docs:
        by_label.setdefault(doc.label, []).append(doc)
    labels = sorted(by_label)
    quotas = {lbl: 0.2 * len(by_label[lbl]) for lbl in labels}
    n_val = {lbl: math.floor(quotas[lbl]) for lbl in labels}
    leftover = n_val_total - sum(n_val.values())
    by_remainder = sorted(
        labels, key=lambda lbl: (-(quotas[lbl] - n_val[lbl]), -len(by_label[lbl]), lbl)
    )
    for lbl in by_remainder:
        if leftover <= 0:
            break
        if n_val[lbl] < len(by_label[lbl]):
            n_val[lbl] += 1
            leftover -= 1

    val_docs = []
    test_docs = []
    for lbl in labels:
        docs = by_label[lbl]
        order = rng.permutation(len(docs))
        k = n_val[lbl]
        val_docs.extend(docs[i] for i in order[:k])
        test_docs.extend(docs[i] for i in order[k:])
    return (
        sources,
        Dataset(tuple(val_docs), scheme=dataset.scheme),
        Dataset(tuple(test_docs), scheme=dataset.scheme),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    target_domain: str
    approach: str
    split_seed: int = 0
    hyper: TrainHyper = field(default_factory=TrainHyper)
    embedding_dim: int = 32
    hidden_dim: int = 32
    max_len: int = 60
    encoder_kind: str = "bigru"
    dropout: float = 0.2

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"approach must be one of {APPROACHES}, got {self.approach!r}")

    def to_dict(self) -> dict:
        return {
            "target_domain": self.target_domain,
            "approach": self.approach,
            "split_seed": self.split_seed,
            "hyper": self.hyper.to_dict(),
            "embedding_dim": self.embedding_dim,
            "hidden_dim": self.hidden_dim,
            "max_len": self.max_len,
            "encoder_kind": self.encoder_kind,
            "dropout": self.dropout,
        }

    def hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


@dataclass
class ExperimentReport:
    target_domain: str
    scores: dict[str, dict[str, float]]
    improvement: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target_domain": self.target_domain,
            "scores": self.scores,
            "improvement": self.improvement,
            "metadata": self.metadata,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_markdown(self) -> str:
        lines = [
            f"Target domain: {self.target_domain}",
            "",
            "| approach | macro F1 | micro F1 | weighted F1 |",
            "|---|---|---|---|",
        ]
        for approach in APPROACHES:
            if approach in self.scores:
                s = self.scores[approach]
                lines.append(
                    f"| {approach} | {s['macro']:.3f} | {s['micro']:.3f} | {s['weighted']:.3f} |"
                )
        if self.improvement:
            lines.append("")
            for key, value in self.improvement.items():
                if isinstance(value, dict):
                    detail = ", ".join(f"{k}: {v:.3f}%" for k, v in value.items())
                    lines.append(f"- {key}: {detail}")
                else:
                    lines.append(f"- {key}: {value:.3f}%")
        return "\n".join(lines) + "\n"


def _train_for_approach(config: ExperimentConfig, sources, target_val):
    kwargs = dict(
        embedding_dim=config.embedding_dim,
        hidden_dim=config.hidden_dim,
        max_len=config.max_len,
        encoder_kind=config.encoder_kind,
        dropout=config.dropout,
    )
    if config.approach == "adapt":
        return train(sources, target_val, config.hyper, **kwargs)
    if config.approach == "no_adapt":
        return train_no_adapt(sources, target_val, config.hyper, **kwargs)
    # in_domain trains on the target validation portion; early stopping
    # monitors the same documents (no disjoint in-domain data exists).
    return train_no_adapt(target_val, target_val, config.hyper, check_domains=False, **kwargs)


def run_experiment(dataset: Dataset, config: ExperimentConfig) -> ExperimentReport:
    """Execute one approach end to end and score it on the target test split."""
    sources, target_val, target_test = lodo_split(
        dataset, config.target_domain, config.split_seed
    )
    start = time.perf_counter()
    trained = _train_for_approach(config, sources, target_val)
    preds = infer(trained, target_test)
    duration = time.perf_counter() - start
    if duration > RUNTIME_BUDGET_SECONDS:
        warnings.warn(
            f"experiment exceeded the {RUNTIME_BUDGET_SECONDS:.0f}s desk-scale budget "
            f"({duration:.0f}s); consider smaller settings",
            stacklevel=2,
        )
    gold = [d.label for d in target_test]
    scores = {
        avg: f1_score(gold, preds, averaging=avg) for avg in ("macro", "micro", "weighted")
    }
    metadata = {
        "config_hash": config.hash(),
        "seed": config.hyper.seed,
        "split_seed": config.split_seed,
        "duration_seconds": duration,
        "n_source": len(sources),
        "n_validation": len(target_val),
        "n_test": len(target_test),
        "best_epoch": trained.best_epoch,
    }
    if config.approach == "adapt":
        weights = instance_weights(trained, sources)
        domains = np.array([d.domain for d in sources])
        metadata["mean_source_weight"] = {
            dom: float(weights[domains == dom].mean()) for dom in sources.domains
        }
    return ExperimentReport(
        target_domain=config.target_domain,
        scores={config.approach: scores},
        metadata={config.approach: metadata},
    )


def improvement_delta(adapt_f1: float, baseline_f1s) -> float:
    """Mean percent improvement of the adaptive score over each baseline."""
    baselines = list(baseline_f1s)
    if not baselines:
        raise ValueError("no baselines given")
    if any(b == 0 for b in baselines):
        raise ValueError("improvement over a zero baseline is undefined")
    return float(np.mean([100.0 * (adapt_f1 - b) / b for b in baselines]))


def pooled_improvement_delta(adapt_f1s, baseline_f1s) -> float:
    """Percent improvement of the mean adaptive score over the mean baseline.

    This pooled form is what a published comparison row typically reports
    when several encoders share one improvement number.
    """
    adapts = list(adapt_f1s)
    baselines = list(baseline_f1s)
    if not adapts or not baselines:
        raise ValueError("need at least one adaptive and one baseline score")
    base = float(np.mean(baselines))
    if base == 0:
        raise ValueError("improvement over a zero baseline is undefined")
    return float(100.0 * (np.mean(adapts) - base) / base)


def run_comparison(
    dataset: Dataset,
    target_domain: str,
    approaches=APPROACHES,
    split_seed: int = 0,
    hyper: TrainHyper | None = None,
    **encoder_kwargs,
) -> ExperimentReport:
    """Run several approaches on one target and attach improvement deltas."""
    hyper = hyper or TrainHyper()
    scores: dict[str, dict[str, float]] = {}
    metadata: dict = {}
    for approach in approaches:
        config = ExperimentConfig(
            target_domain=target_domain,
            approach=approach,
            split_seed=split_seed,
            hyper=hyper,
            **encoder_kwargs,
        )
        report = run_experiment(dataset, config)
        scores.update(report.scores)
        metadata.update(report.metadata)
    improvement = None
    if "adapt" in scores:
        baselines = {a: scores[a]["macro"] for a in scores if a != "adapt"}
        if baselines:
            improvement = {
                "pairwise_mean_pct": improvement_delta(
                    scores["adapt"]["macro"], baselines.values()
                ),
                "pooled_pct": pooled_improvement_delta(
                    [scores["adapt"]["macro"]], baselines.values()
                ),
                "per_baseline_pct": {
                    name: improvement_delta(scores["adapt"]["macro"], [value])
                    for name, value in baselines.items()
                },
            }
    return ExperimentReport(
        target_domain=target_domain,
        scores=scores,
        improvement=improvement,
        metadata=metadata,
    )
