"""Classical cross-domain baseline: TF-IDF n-grams plus logistic regression.

The vectorizer and the mutual-information ranking are deterministic by
construction; the regression objective is the mean cross-entropy plus an
L2 penalty, so duplicating every training point leaves the optimum
unchanged.
"""

from __future__ import annotations

import importlib.resources
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .corpus import Dataset
from .labels import NO_MORAL

MAX_FEATURES = 15_000


def _ngrams(tokens) -> list[str]:
    out = list(tokens)
    for n in (2, 3):
        out.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return out


@dataclass(frozen=True)
class Vectorizer:
    """Fitted 1-3-gram TF-IDF vocabulary (top features by document frequency)."""

    vocabulary: dict[str, int]
    idf: np.ndarray
    max_features: int = MAX_FEATURES

    @property
    def feature_names(self) -> tuple[str, ...]:
        names = [""] * len(self.vocabulary)
        for gram, idx in self.vocabulary.items():
            names[idx] = gram
        return tuple(names)

    def transform(self, docs) -> sp.csr_matrix:
        """Raw-count TF times IDF, rows L2-normalized; unknown n-grams dropped."""
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for tokens in docs:
            counts = Counter(g for g in _ngrams(list(tokens)) if g in self.vocabulary)
            row = sorted((self.vocabulary[g], c) for g, c in counts.items())
            vals = np.array([c * self.idf[idx] for idx, c in row])
            norm = np.linalg.norm(vals)
            if norm > 0:
                vals = vals / norm
            indices.extend(idx for idx, _ in row)
            data.extend(vals)
            indptr.append(len(indices))
        return sp.csr_matrix(
            (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(indptr) - 1, len(self.vocabulary)),
        )


def fit_vectorizer(train_docs, max_features: int = MAX_FEATURES) -> Vectorizer:
    """Build the vocabulary from training token lists.

    Keeps the ``max_features`` most document-frequent 1-3-grams (ties
    broken lexicographically) and stores smoothed IDF weights
    ln((1+N)/(1+df)) + 1.
    """
    docs = [list(tokens) for tokens in train_docs]
    if not docs:
        raise ValueError("cannot fit a vectorizer on an empty corpus")
    df = Counter()
    for tokens in docs:
        df.update(set(_ngrams(tokens)))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:max_features]
    vocabulary = {gram: i for i, (gram, _) in enumerate(ranked)}
    n = len(docs)
    idf = np.empty(len(ranked))
    for gram, count in ranked:
        idf[vocabulary[gram]] = np.log((1.0 + n) / (1.0 + count)) + 1.0
    return Vectorizer(vocabulary=vocabulary, idf=idf, max_features=max_features)


@dataclass(frozen=True)
class LinearClassifier:
    """Multinomial logistic regression weights over the fitted classes."""

    weights: np.ndarray  # classes x features
    bias: np.ndarray
    classes: np.ndarray  # label index per internal class
    reg_strength: float

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return self.classes[np.argmax(self.decision_function(X), axis=1)]


def train_logreg(features, labels, reg_strength: float = 1e-4, gtol: float = 1e-4) -> LinearClassifier:
    """Minimize mean cross-entropy + (reg/2)||W||^2 with L-BFGS.

    The penalty applies per sample (mean-loss formulation), so the fitted
    decision function is invariant to duplicating the training set. The
    bias is unpenalized. Optimization stops at projected-gradient
    max-norm ``gtol``.
    """
    X = sp.csr_matrix(features, dtype=np.float64)
    labels = np.asarray(labels)
    classes, y = np.unique(labels, return_inverse=True)
    n_classes = len(classes)
    if n_classes < 2:
        raise ValueError("logistic regression needs at least 2 classes in the training data")
    n, n_feat = X.shape
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), y] = 1.0

    def objective(flat):
        W = flat[: n_classes * n_feat].reshape(n_classes, n_feat)
        b = flat[n_classes * n_feat :]
        logits = X @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        log_z = np.log(exp.sum(axis=1))
        ce = float(np.mean(log_z - logits[np.arange(n), y]))
        loss = ce + 0.5 * reg_strength * float(np.sum(W * W))
        P = exp / exp.sum(axis=1, keepdims=True)
        G = (P - Y) / n
        grad_W = (X.T @ G).T + reg_strength * W
        grad_b = G.sum(axis=0)
        return loss, np.concatenate([np.asarray(grad_W).ravel(), grad_b])

    x0 = np.zeros(n_classes * n_feat + n_classes)
    result = scipy.optimize.minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"gtol": gtol, "ftol": 1e-14, "maxiter": 2000},
    )
    flat = result.x
    return LinearClassifier(
        weights=flat[: n_classes * n_feat].reshape(n_classes, n_feat),
        bias=flat[n_classes * n_feat :],
        classes=classes,
        reg_strength=reg_strength,
    )


def f1_score(gold, pred, averaging: str = "macro", labels=None) -> float:
    """Multiclass F1 with the zero convention (F1 = 0 when P + R = 0).

    The class set defaults to everything observed in gold or pred; pass
    ``labels`` to fix it. Micro averaging equals accuracy for
    single-label data; weighted averaging weights classes by gold support.
    """
    gold = np.asarray(gold)
    pred = np.asarray(pred)
    if gold.shape != pred.shape:
        raise ValueError("gold and pred must have equal length")
    if labels is None:
        labels = np.unique(np.concatenate([gold, pred]))
    labels = np.asarray(labels)
    f1s = np.zeros(len(labels))
    support = np.zeros(len(labels))
    tp_total = fp_total = fn_total = 0
    for i, cls in enumerate(labels):
        tp = int(np.sum((pred == cls) & (gold == cls)))
        fp = int(np.sum((pred == cls) & (gold != cls)))
        fn = int(np.sum((pred != cls) & (gold == cls)))
        tp_total += tp
        fp_total += fp
        fn_total += fn
        support[i] = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1s[i] = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    if averaging == "macro":
        return float(f1s.mean()) if len(f1s) else 0.0
    if averaging == "micro":
        denom = 2 * tp_total + fp_total + fn_total
        return 2 * tp_total / denom if denom else 0.0
    if averaging == "weighted":
        total = support.sum()
        return float((f1s * support).sum() / total) if total else 0.0
    raise ValueError(f"unknown averaging: {averaging!r}")


@dataclass(frozen=True)
class GridReport:
    """F1 of every train-domain x test-domain pair (diagonal = in-domain)."""

    domains: tuple[str, ...]
    values: np.ndarray
    averaging: str
    split_seed: int

    def diagonal_mean(self) -> float:
        return float(np.diag(self.values).mean())

    def off_diagonal_mean(self) -> float:
        mask = ~np.eye(len(self.domains), dtype=bool)
        return float(self.values[mask].mean())

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("train\\test," + ",".join(self.domains) + "\n")
            for i, name in enumerate(self.domains):
                fh.write(name + "," + ",".join(f"{v:.6f}" for v in self.values[i]) + "\n")


def _domain_split(docs, frac_train: float, rng: np.random.Generator):
    order = rng.permutation(len(docs))
    n_train = round(frac_train * len(docs))
    return [docs[i] for i in order[:n_train]], [docs[i] for i in order[n_train:]]


def cross_domain_grid(
    dataset: Dataset,
    split_seed: int = 0,
    reg_strength: float = 1e-4,
    max_features: int = MAX_FEATURES,
    averaging: str = "macro",
) -> GridReport:
    """Train on each domain's 80% split, test on every domain's 20% split.

    One seeded split per domain, reused across all train/test pairings.
    """
    if len(dataset.domains) < 2:
        raise ValueError("cross-domain grid needs at least 2 domains")
    rng = np.random.Generator(np.random.PCG64(split_seed))
    splits = {}
    for domain in dataset.domains:
        docs = dataset.domain_documents(domain)
        if len(docs) < 10:
            raise ValueError(f"domain {domain!r} has fewer than 10 documents")
        splits[domain] = _domain_split(docs, 0.8, rng)

    n = len(dataset.domains)
    values = np.zeros((n, n))
    for i, train_domain in enumerate(dataset.domains):
        train_docs, _ = splits[train_domain]
        vectorizer = fit_vectorizer([d.tokens for d in train_docs], max_features=max_features)
        X_train = vectorizer.transform([d.tokens for d in train_docs])
        clf = train_logreg(X_train, [d.label for d in train_docs], reg_strength=reg_strength)
        for j, test_domain in enumerate(dataset.domains):
            _, test_docs = splits[test_domain]
            X_test = vectorizer.transform([d.tokens for d in test_docs])
            pred = clf.predict(X_test)
            values[i, j] = f1_score([d.label for d in test_docs], pred, averaging=averaging)
    return GridReport(tuple(dataset.domains), values, averaging, split_seed)


@lru_cache(maxsize=1)
def stopwords() -> frozenset[str]:
    text = importlib.resources.files("moralshift.data").joinpath("stopwords.txt").read_text()
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def binary_mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """Exact plug-in mutual information (nats) of two binary vectors."""
    n = len(x)
    mi = 0.0
    for xv in (0, 1):
        px = np.count_nonzero(x == xv) / n
        for yv in (0, 1):
            pxy = np.count_nonzero((x == xv) & (y == yv)) / n
            py = np.count_nonzero(y == yv) / n
            if pxy > 0.0:
                mi += pxy * np.log(pxy / (px * py))
    return mi


def mutual_info_rank(
    features,
    feature_names,
    binarized_labels,
    top_n: int = 10,
    unigrams_only: bool = True,
    remove_stopwords: bool = True,
) -> list[str]:
    """Rank features by mutual information with a binary label.

    ``features`` is a (docs x features) matrix whose nonzero entries mark
    feature presence. Ties rank lexicographically.
    """
    X = sp.csr_matrix(features)
    y = np.asarray(binarized_labels)
    if set(np.unique(y)) - {0, 1}:
        raise ValueError("binarized_labels must contain only 0/1")
    names = list(feature_names)
    if X.shape[1] != len(names):
        raise ValueError("feature_names length must match the feature dimension")
    presence = (X != 0).toarray().astype(np.int8)
    scored = []
    skip = stopwords() if remove_stopwords else frozenset()
    for j, name in enumerate(names):
        if unigrams_only and " " in name:
            continue
        if name in skip:
            continue
        scored.append((-binary_mutual_information(presence[:, j], y), name))
    scored.sort()
    return [name for _, name in scored[:top_n]]


def top_morality_features(
    dataset: Dataset,
    domain: str,
    top_n: int = 10,
    max_features: int = MAX_FEATURES,
) -> list[str]:
    """Appendix-style ranking: moral vs no-moral MI over one domain's n-grams."""
    docs = dataset.domain_documents(domain)
    no_moral = dataset.scheme.index_of(NO_MORAL)
    y = np.array([0 if d.label == no_moral else 1 for d in docs])
    vectorizer = fit_vectorizer([d.tokens for d in docs], max_features=max_features)
    X = vectorizer.transform([d.tokens for d in docs])
    return mutual_info_rank(X, vectorizer.feature_names, y, top_n=top_n)
