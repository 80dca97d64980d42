"""Similarity matrices and the statistical test battery for domain shift.

Domain variation regressors are defined as (1 - topic cosine similarity)
and (1 - label cosine similarity) of a train/test domain pair; performance
variation is the out-domain score minus the in-domain score.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from ..corpus import Dataset, label_distribution
from .lda import TopicModel, domain_topic_distribution

_MIN_NORMALITY_SAMPLES = 20


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ValueError(f"vectors must share one dimension, got {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity of a zero vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


@dataclass(frozen=True)
class SimilarityMatrix:
    domains: tuple[str, ...]
    values: np.ndarray
    kind: str

    def __post_init__(self):
        n = len(self.domains)
        if self.values.shape != (n, n):
            raise ValueError("similarity matrix shape does not match domain count")

    def pair(self, a: str, b: str) -> float:
        return float(self.values[self.domains.index(a), self.domains.index(b)])

    def off_diagonal(self) -> np.ndarray:
        n = len(self.domains)
        mask = ~np.eye(n, dtype=bool)
        return self.values[mask]

    def upper_pairs(self) -> list[tuple[str, str, float]]:
        return [
            (self.domains[i], self.domains[j], float(self.values[i, j]))
            for i, j in itertools.combinations(range(len(self.domains)), 2)
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("," + ",".join(self.domains) + "\n")
            for i, name in enumerate(self.domains):
                fh.write(name + "," + ",".join(f"{v:.10g}" for v in self.values[i]) + "\n")


def similarity_matrix(
    dataset: Dataset,
    model: TopicModel | None = None,
    kind: str = "label",
    label_dims: int = 11,
) -> SimilarityMatrix:
    """Pairwise cosine similarities of per-domain distributions.

    kind="label" uses domain label distributions (11-dim, or 10-dim over
    the moral labels only when label_dims=10); kind="topic" uses mean
    topic distributions and requires a fitted model.
    """
    if len(dataset.domains) < 2:
        raise ValueError("need at least two domains")
    if kind == "label":
        if label_dims not in (10, 11):
            raise ValueError("label_dims must be 10 or 11")
        vectors = [label_distribution(dataset, d)[:label_dims] for d in dataset.domains]
    elif kind == "topic":
        if model is None:
            raise ValueError("topic similarities need a fitted topic model")
        vectors = [domain_topic_distribution(model, dataset, d) for d in dataset.domains]
    else:
        raise ValueError(f"unknown similarity kind: {kind!r}")
    n = len(vectors)
    values = np.empty((n, n))
    for i in range(n):
        values[i, i] = cosine_similarity(vectors[i], vectors[i])
        for j in range(i + 1, n):
            values[i, j] = values[j, i] = cosine_similarity(vectors[i], vectors[j])
    return SimilarityMatrix(tuple(dataset.domains), values, kind)


def normality_test(samples) -> float:
    """Omnibus skewness+kurtosis normality test; returns the p-value."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    if len(samples) < _MIN_NORMALITY_SAMPLES:
        raise ValueError(
            f"normality test needs at least {_MIN_NORMALITY_SAMPLES} samples, got {len(samples)}"
        )
    if np.ptp(samples) == 0.0:
        raise ValueError("normality test is undefined for constant samples")
    return float(scipy.stats.normaltest(samples).pvalue)


def _rank_rho(rx: np.ndarray, ry: np.ndarray) -> float:
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def spearman_test(x, y, method: str = "t") -> tuple[float, float]:
    """Spearman rank correlation with average ranks for ties.

    method="t" computes the p-value from the t approximation with n-2
    degrees of freedom; method="exact" enumerates all rank permutations
    (two-sided, supported for n <= 10).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be one-dimensional with equal length")
    n = len(x)
    if n < 3:
        raise ValueError("spearman test needs at least 3 observations")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise ValueError("spearman correlation is undefined for a constant sequence")
    rx = scipy.stats.rankdata(x)
    ry = scipy.stats.rankdata(y)
    ties = len(np.unique(rx)) < n or len(np.unique(ry)) < n
    if ties:
        rho = _rank_rho(rx, ry)
    else:
        d = rx - ry
        rho = 1.0 - 6.0 * float(np.dot(d, d)) / (n * (n * n - 1))

    if method == "exact":
        if n > 10:
            raise ValueError("exact permutation p-value supported only for n <= 10")
        target = abs(rho) - 1e-12
        hits = total = 0
        perm_iter = itertools.permutations(range(n))
        while True:
            chunk = np.array(list(itertools.islice(perm_iter, 100_000)), dtype=np.intp)
            if chunk.size == 0:
                break
            rows = ry[chunk]
            rows = rows - rows.mean(axis=1, keepdims=True)
            rxc = rx - rx.mean()
            rhos = rows @ rxc / np.sqrt((rows * rows).sum(axis=1) * np.dot(rxc, rxc))
            hits += int(np.sum(np.abs(rhos) >= target))
            total += len(rows)
        return rho, hits / total
    if method != "t":
        raise ValueError(f"unknown method: {method!r}")
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(scipy.stats.t.sf(abs(t), df=n - 2))
    return rho, p


def performance_variation(in_score: float, out_score: float) -> float:
    """Out-domain score minus in-domain score (negative when transfer hurts)."""
    for name, v in (("in_score", in_score), ("out_score", out_score)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    return out_score - in_score


@dataclass(frozen=True)
class RegressionTTest:
    """OLS fit with per-coefficient two-tailed t-tests."""

    coefficients: np.ndarray
    stderrs: np.ndarray
    tstats: np.ndarray
    p_values: np.ndarray
    intercept: float
    intercept_p: float
    n: int
    df: int
    feature_names: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        names = self.feature_names or tuple(f"x{i}" for i in range(len(self.coefficients)))
        return {
            "coefficients": {nm: float(c) for nm, c in zip(names, self.coefficients)},
            "p_values": {nm: float(p) for nm, p in zip(names, self.p_values)},
            "stderrs": {nm: float(s) for nm, s in zip(names, self.stderrs)},
            "intercept": self.intercept,
            "intercept_p": self.intercept_p,
            "n": self.n,
            "df": self.df,
        }


def regression_ttest(domain_vars, perf_vars, feature_names: tuple[str, ...] = ()) -> RegressionTTest:
    """Ordinary least squares of performance variation on domain variation."""
    X = np.asarray(domain_vars, dtype=np.float64)
    y = np.asarray(perf_vars, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise ValueError("perf_vars length must match the number of rows in domain_vars")
    if n < 3:
        raise ValueError("regression needs at least 3 observations")
    if n - k - 1 <= 0:
        raise ValueError(f"not enough observations ({n}) for {k} regressors")
    for j in range(k):
        if np.ptp(X[:, j]) == 0.0:
            raise ValueError(f"regressor column {j} is constant")
    design = np.hstack([np.ones((n, 1)), X])
    if np.linalg.matrix_rank(design) < k + 1:
        raise ValueError("design matrix is rank-deficient")
    gram_inv = np.linalg.inv(design.T @ design)
    beta = gram_inv @ design.T @ y
    resid = y - design @ beta
    df = n - k - 1
    sigma2 = float(resid @ resid) / df
    se = np.sqrt(sigma2 * np.diag(gram_inv))
    with np.errstate(divide="ignore"):
        tstats = beta / se
    p = 2.0 * scipy.stats.t.sf(np.abs(tstats), df=df)
    return RegressionTTest(
        coefficients=beta[1:],
        stderrs=se[1:],
        tstats=tstats[1:],
        p_values=p[1:],
        intercept=float(beta[0]),
        intercept_p=float(p[0]),
        n=n,
        df=df,
        feature_names=feature_names,
    )


@dataclass(frozen=True)
class ShiftTestReport:
    """Bundle of the shift-vs-performance test battery results."""

    normality_p_topic: float | None
    normality_p_label: float | None
    spearman_rho: float
    spearman_p: float
    regression: dict | None = None
    regression_combined: dict | None = None
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_json(self, path) -> None:
        payload = {
            "normality_p_topic": self.normality_p_topic,
            "normality_p_label": self.normality_p_label,
            "spearman_rho": self.spearman_rho,
            "spearman_p": self.spearman_p,
            "regression": self.regression,
            "regression_combined": self.regression_combined,
            "notes": list(self.notes),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)


def run_shift_tests(
    topic_sim: SimilarityMatrix,
    label_sim: SimilarityMatrix,
    grid_values: np.ndarray | None = None,
) -> ShiftTestReport:
    """Run the full battery on one corpus's similarity matrices.

    Unordered-pair variation samples (1 - similarity) feed the normality
    and rank-correlation tests. When an F1 grid (rows = train domain,
    cols = test domain, same domain order as the matrices) is supplied,
    ordered train/test pairs feed the OLS of performance variation on
    topic and label variation, both jointly and as a single summed
    variation regressor.
    """
    if topic_sim.domains != label_sim.domains:
        raise ValueError("similarity matrices cover different domains")
    topic_var = np.array([1.0 - v for _, _, v in topic_sim.upper_pairs()])
    label_var = np.array([1.0 - v for _, _, v in label_sim.upper_pairs()])
    notes = []
    normality_p_topic = normality_p_label = None
    if len(topic_var) >= _MIN_NORMALITY_SAMPLES:
        normality_p_topic = normality_test(topic_var)
        normality_p_label = normality_test(label_var)
    else:
        notes.append(
            f"normality tests skipped: {len(topic_var)} domain pairs < {_MIN_NORMALITY_SAMPLES}"
        )
    rho, p = spearman_test(topic_var, label_var)

    regression = regression_combined = None
    if grid_values is not None:
        domains = topic_sim.domains
        n = len(domains)
        grid_values = np.asarray(grid_values, dtype=np.float64)
        if grid_values.shape != (n, n):
            raise ValueError("grid shape does not match the similarity matrices")
        rows = []
        perf = []
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                rows.append(
                    [
                        1.0 - topic_sim.values[i, j],
                        1.0 - label_sim.values[i, j],
                    ]
                )
                perf.append(performance_variation(grid_values[i, i], grid_values[i, j]))
        X = np.array(rows)
        y = np.array(perf)
        regression = regression_ttest(
            X, y, feature_names=("topic_variation", "label_variation")
        ).to_dict()
        regression_combined = regression_ttest(
            X.sum(axis=1), y, feature_names=("summed_variation",)
        ).to_dict()
    return ShiftTestReport(
        normality_p_topic=normality_p_topic,
        normality_p_label=normality_p_label,
        spearman_rho=rho,
        spearman_p=p,
        regression=regression,
        regression_combined=regression_combined,
        notes=tuple(notes),
    )
