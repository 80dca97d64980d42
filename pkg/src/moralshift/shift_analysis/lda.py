"""Latent topic model fitted by collapsed Gibbs sampling.

The sampler is fully specified and seedable: symmetric Dirichlet priors
(alpha = 50/K on document-topic, beta = 0.01 on topic-word), a fixed
number of sweeps, and posterior estimates averaged over the last sweeps.
The token loop is compiled with numba; the chain is single-threaded so a
fixed seed reproduces the fit bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..corpus import Dataset


@dataclass(frozen=True)
class TopicModel:
    """Posterior-mean estimates of a fitted topic model."""

    K: int
    word_topic: np.ndarray  # K x V, rows sum to 1
    doc_topic: np.ndarray  # D x K, rows sum to 1
    alpha: float
    beta: float
    seed: int
    vocab: tuple[str, ...]
    doc_ids: tuple[str, ...]


@njit(cache=True)
def _gibbs_kernel(seed, iterations, avg_last, K, V, alpha, beta, doc_of, word_of, doc_len, n_docs):
    np.random.seed(seed)
    n_tokens = word_of.shape[0]
    n_dk = np.zeros((n_docs, K), dtype=np.int64)
    n_kw = np.zeros((K, V), dtype=np.int64)
    n_k = np.zeros(K, dtype=np.int64)
    z = np.empty(n_tokens, dtype=np.int64)
    for t in range(n_tokens):
        k = np.random.randint(0, K)
        z[t] = k
        n_dk[doc_of[t], k] += 1
        n_kw[k, word_of[t]] += 1
        n_k[k] += 1

    doc_acc = np.zeros((n_docs, K))
    word_acc = np.zeros((K, V))
    n_samples = 0
    p = np.empty(K)
    for it in range(iterations):
        for t in range(n_tokens):
            d = doc_of[t]
            w = word_of[t]
            k = z[t]
            n_dk[d, k] -= 1
            n_kw[k, w] -= 1
            n_k[k] -= 1
            total = 0.0
            for kk in range(K):
                val = (n_kw[kk, w] + beta) / (n_k[kk] + V * beta) * (n_dk[d, kk] + alpha)
                p[kk] = val
                total += val
            u = np.random.random() * total
            acc = 0.0
            new_k = K - 1
            for kk in range(K):
                acc += p[kk]
                if u < acc:
                    new_k = kk
                    break
            z[t] = new_k
            n_dk[d, new_k] += 1
            n_kw[new_k, w] += 1
            n_k[new_k] += 1
        if it >= iterations - avg_last:
            n_samples += 1
            for d in range(n_docs):
                denom = doc_len[d] + K * alpha
                for kk in range(K):
                    doc_acc[d, kk] += (n_dk[d, kk] + alpha) / denom
            for kk in range(K):
                denom = n_k[kk] + V * beta
                for w in range(V):
                    word_acc[kk, w] += (n_kw[kk, w] + beta) / denom
    return doc_acc / n_samples, word_acc / n_samples


def fit_lda(
    dataset: Dataset,
    K: int = 20,
    iterations: int = 1000,
    seed: int = 0,
    alpha: float | None = None,
    beta: float = 0.01,
    average_last: int = 100,
) -> TopicModel:
    """Fit the topic model over every document in the dataset.

    K defaults to the desk-scale 20; pass K=200 for the full-corpus
    setting. ``average_last`` sweeps at the end of the chain are averaged
    into the returned posterior-mean estimates.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if K < 2:
        raise ValueError("K must be at least 2")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    vocab = tuple(sorted({tok for doc in dataset for tok in doc.tokens}))
    if K > len(vocab):
        raise ValueError(f"K={K} exceeds vocabulary size {len(vocab)}")
    word_index = {w: i for i, w in enumerate(vocab)}

    doc_of = []
    word_of = []
    doc_len = np.empty(len(dataset), dtype=np.int64)
    for d, doc in enumerate(dataset):
        doc_len[d] = len(doc.tokens)
        for tok in doc.tokens:
            doc_of.append(d)
            word_of.append(word_index[tok])
    if alpha is None:
        alpha = 50.0 / K
    avg_last = min(average_last, iterations)
    doc_topic, word_topic = _gibbs_kernel(
        seed,
        iterations,
        avg_last,
        K,
        len(vocab),
        float(alpha),
        float(beta),
        np.asarray(doc_of, dtype=np.int64),
        np.asarray(word_of, dtype=np.int64),
        doc_len,
        len(dataset),
    )
    return TopicModel(
        K=K,
        word_topic=word_topic,
        doc_topic=doc_topic,
        alpha=float(alpha),
        beta=float(beta),
        seed=seed,
        vocab=vocab,
        doc_ids=tuple(doc.id for doc in dataset),
    )


def domain_topic_distribution(model: TopicModel, dataset: Dataset, domain: str) -> np.ndarray:
    """Mean topic distribution over the domain's documents."""
    rows = [
        i
        for i, doc in enumerate(dataset)
        if doc.domain == domain
    ]
    if not rows:
        raise ValueError(f"domain {domain!r} has no documents")
    if len(dataset) != len(model.doc_ids) or any(
        dataset.documents[i].id != model.doc_ids[i] for i in rows
    ):
        raise ValueError("topic model was fitted on a different dataset")
    return model.doc_topic[rows].mean(axis=0)
