"""Synthetic multi-domain corpora with planted topic and label shift.

Documents follow the usual topic-model generative story: draw a label from
the domain's prior, tilt the domain topic mixture by the label's affinity
vector, then draw each token's topic and word. Because the generator is
fully known, an exact Bayes posterior is available as a reference
classifier, and planted mixtures/priors serve as ground truth for the
shift-analysis machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, Document
from .labels import DEFAULT_SCHEME, LabelScheme

_PROB_ATOL = 1e-9


def _check_prob_vector(v: np.ndarray, what: str) -> None:
    if np.any(v < 0):
        raise ValueError(f"{what} has negative entries")
    if abs(float(v.sum()) - 1.0) > _PROB_ATOL:
        raise ValueError(f"{what} does not sum to 1 (got {v.sum()!r})")


@dataclass(frozen=True)
class DomainSpec:
    """Generator parameters for one synthetic domain."""

    name: str
    vocab_size: int
    topic_mixture: np.ndarray
    label_prior: np.ndarray
    label_topic_affinity: np.ndarray
    doc_length_range: tuple[int, int] = (8, 25)
    num_docs: int = 2000

    def __post_init__(self):
        _check_prob_vector(self.topic_mixture, f"{self.name}: topic_mixture")
        _check_prob_vector(self.label_prior, f"{self.name}: label_prior")
        if self.label_topic_affinity.shape != (len(self.label_prior), len(self.topic_mixture)):
            raise ValueError(f"{self.name}: affinity must be (n_labels, n_topics)")
        if np.any(self.label_topic_affinity < 0):
            raise ValueError(f"{self.name}: affinity has negative entries")
        lo, hi = self.doc_length_range
        if lo < 3 or hi < lo:
            raise ValueError(f"{self.name}: doc_length_range must satisfy 3 <= min <= max")

    def label_mixture(self, label: int) -> np.ndarray:
        """Effective topic mixture of documents carrying ``label``."""
        m = self.topic_mixture * self.label_topic_affinity[label]
        total = m.sum()
        if total <= 0:
            raise ValueError(f"{self.name}: label {label} has empty effective mixture")
        return m / total


@dataclass(frozen=True)
class ShiftKnob:
    """Controls how far apart the domain generators are pushed."""

    topic_shift: float = 0.0
    label_shift: float = 0.0

    def __post_init__(self):
        for name in ("topic_shift", "label_shift"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _word_token(idx: int) -> str:
    return f"w{idx:05d}"


def word_index(token: str) -> int:
    """Inverse of the synthetic token naming."""
    if not token.startswith("w"):
        raise ValueError(f"not a synthetic vocabulary token: {token!r}")
    return int(token[1:])


def _draw(cum: np.ndarray, u) -> np.ndarray:
    return np.searchsorted(cum, u, side="right")


def generate(
    specs: list[DomainSpec],
    topics: np.ndarray,
    seed: int,
    scheme: LabelScheme = DEFAULT_SCHEME,
) -> Dataset:
    """Sample a corpus; bitwise identical for identical (specs, topics, seed)."""
    if not specs:
        raise ValueError("no domain specs given")
    topics = np.asarray(topics, dtype=np.float64)
    for k in range(topics.shape[0]):
        _check_prob_vector(topics[k], f"topic {k} word distribution")
    for spec in specs:
        if spec.vocab_size != topics.shape[1]:
            raise ValueError(f"{spec.name}: vocab_size {spec.vocab_size} != topics width {topics.shape[1]}")
        if len(spec.topic_mixture) != topics.shape[0]:
            raise ValueError(f"{spec.name}: mixture length != number of topics")

    rng = np.random.Generator(np.random.PCG64(seed))
    cum_words = np.cumsum(topics, axis=1)
    documents: list[Document] = []
    for spec in specs:
        cum_label = np.cumsum(spec.label_prior)
        cum_mix = np.cumsum(
            np.stack([spec.label_mixture(lbl) for lbl in range(len(spec.label_prior))]), axis=1
        )
        lo, hi = spec.doc_length_range
        cum_length = np.arange(1, hi - lo + 2) / (hi - lo + 1)
        for i in range(spec.num_docs):
            label = int(_draw(cum_label, rng.random()))
            length = lo + int(_draw(cum_length, rng.random()))
            topic_ids = _draw(cum_mix[label], rng.random(length))
            word_u = rng.random(length)
            tokens = tuple(
                _word_token(int(_draw(cum_words[k], u))) for k, u in zip(topic_ids, word_u)
            )
            documents.append(Document(f"{spec.name}-{i:05d}", spec.name, tokens, label))
    return Dataset(tuple(documents), scheme=scheme)


def bayes_oracle(document: Document, specs: list[DomainSpec], topics: np.ndarray) -> np.ndarray:
    """Exact label posterior under the generative model that produced the doc."""
    by_name = {s.name: s for s in specs}
    spec = by_name[document.domain]
    topics = np.asarray(topics, dtype=np.float64)
    word_ids = [word_index(t) for t in document.tokens]
    n_labels = len(spec.label_prior)
    log_post = np.full(n_labels, -np.inf)
    for lbl in range(n_labels):
        if spec.label_prior[lbl] == 0.0:
            continue
        mix = spec.label_mixture(lbl)
        token_probs = mix @ topics[:, word_ids]
        if np.any(token_probs == 0.0):
            continue
        log_post[lbl] = np.log(spec.label_prior[lbl]) + np.sum(np.log(token_probs))
    top = log_post.max()
    if not np.isfinite(top):
        raise ValueError("document has zero probability under every label")
    post = np.exp(log_post - top)
    return post / post.sum()


@dataclass(frozen=True)
class Benchmark:
    """A ready-to-generate benchmark: specs, shared topics, group structure."""

    specs: tuple[DomainSpec, ...]
    topics: np.ndarray
    groups: dict[str, int]
    knobs: ShiftKnob
    layout: str

    def matching_domains(self, target: str) -> tuple[str, ...]:
        """Domains sharing the target's generator group (target excluded)."""
        g = self.groups[target]
        return tuple(s.name for s in self.specs if s.name != target and self.groups[s.name] == g)

    def generate(self, seed: int) -> Dataset:
        return generate(list(self.specs), self.topics, seed)


def _block_topics(n_topics: int, vocab_size: int, rng: np.random.Generator) -> np.ndarray:
    """Word distributions on disjoint vocabulary blocks, one block per topic."""
    if vocab_size % n_topics != 0:
        raise ValueError("vocab_size must be a multiple of n_topics")
    block = vocab_size // n_topics
    topics = np.zeros((n_topics, vocab_size))
    for k in range(n_topics):
        topics[k, k * block : (k + 1) * block] = rng.dirichlet(np.full(block, 0.8))
    return topics


def make_benchmark(
    n_domains: int = 5,
    docs_per_domain: int = 2000,
    vocab_size: int = 2000,
    n_topics: int = 20,
    knobs: ShiftKnob = ShiftKnob(1.0, 1.0),
    layout: str = "grouped",
    doc_length_range: tuple[int, int] = (8, 25),
    seed: int = 0,
    anchor_boost: float = 10.0,
    background_tilt: float = 1.0,
    prior_concentration: float = 5.0,
    scheme: LabelScheme = DEFAULT_SCHEME,
) -> Benchmark:
    """Build the desk-scale benchmark generators.

    ``grouped`` splits domains into two families. Both families emit the
    same label-anchored topics (one topic per label), but the second
    family anchors each label to the *next* label's topic and draws its
    background tokens from a different topic block, so its documents
    actively conflict with the first family's label-word associations
    while remaining recognizably out-of-family. Background mixtures are
    tilted per domain (log-normal, ``background_tilt``), so domains
    within a family are similar but not identical. ``disjoint`` gives
    every domain its own topic block and (at full label shift) its own
    label pair, which is the configuration the similarity analyses
    expect.

    Both knobs at 0 collapse every layout to identical generators.
    """
    if layout not in ("grouped", "disjoint"):
        raise ValueError(f"unknown layout: {layout!r}")
    n_labels = len(scheme)
    if layout == "grouped" and n_topics < n_labels + 2:
        raise ValueError("grouped layout needs at least n_labels + 2 topics")
    if layout == "disjoint" and n_topics % n_domains != 0:
        raise ValueError("disjoint layout needs n_topics divisible by n_domains")

    rng = np.random.Generator(np.random.PCG64(seed))
    topics = _block_topics(n_topics, vocab_size, rng)
    ts, ls = knobs.topic_shift, knobs.label_shift

    common_mixture = np.full(n_topics, 1.0 / n_topics)
    common_prior = np.full(n_labels, 1.0 / n_labels)
    identity_affinity = np.ones((n_labels, n_topics))
    for lbl in range(n_labels):
        identity_affinity[lbl, lbl % n_topics] = anchor_boost

    specs = []
    groups: dict[str, int] = {}
    names = [f"d{i}" for i in range(n_domains)]
    first_group = (n_domains + 1) // 2
    for d, name in enumerate(names):
        if layout == "grouped":
            group = 0 if d < first_group else 1
            own = np.zeros(n_topics)
            own[:n_labels] = 0.75 / n_labels
            background = np.arange(n_labels, n_topics)
            half = len(background) // 2
            bg = background[:half] if group == 0 else background[half:]
            tilt = np.exp(background_tilt * rng.standard_normal(len(bg)))
            own[bg] = 0.25 * tilt / tilt.sum()
            affinity = np.ones((n_labels, n_topics))
            for lbl in range(n_labels):
                anchor = lbl if group == 0 else (lbl + 1) % n_labels
                affinity[lbl, anchor] = anchor_boost
            prior = np.ones(n_labels)
            prior[group::2] = prior_concentration
            prior /= prior.sum()
        else:
            group = d
            block = n_topics // n_domains
            own = np.zeros(n_topics)
            own[d * block : (d + 1) * block] = 1.0 / block
            affinity = identity_affinity
            prior = np.zeros(n_labels)
            prior[(2 * d) % n_labels] = 0.5
            prior[(2 * d + 1) % n_labels] = 0.5

        mixture = (1.0 - ts) * common_mixture + ts * own
        blended_affinity = (1.0 - ts) * identity_affinity + ts * affinity
        label_prior = (1.0 - ls) * common_prior + ls * prior
        groups[name] = group
        specs.append(
            DomainSpec(
                name=name,
                vocab_size=vocab_size,
                topic_mixture=mixture / mixture.sum(),
                label_prior=label_prior / label_prior.sum(),
                label_topic_affinity=blended_affinity,
                doc_length_range=doc_length_range,
                num_docs=docs_per_domain,
            )
        )
    return Benchmark(tuple(specs), topics, groups, knobs, layout)
