"""Corpus ingestion: preprocessing, vote aggregation, and dataset views.

Input records carry raw text plus per-label annotator vote counts (or a
pre-aggregated label). Loading applies, in order: text preprocessing,
the minimum-length filter, majority-vote aggregation, and a deterministic
collapse to a single label per document.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .labels import DEFAULT_SCHEME, NO_MORAL, LabelScheme

USER_SENTINEL = "USER"
URL_SENTINEL = "URL"

_URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
_MENTION_RE = re.compile(r"(?<!\S)@\w+")
# Word runs stay together; every other non-space character is its own token.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class Reject:
    """Sentinel returned by aggregate_votes when no label survives."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "REJECT"

    def __bool__(self):
        return False


REJECT = Reject()


def preprocess_text(raw: str) -> list[str]:
    """Normalize one raw text into the canonical token list.

    User mentions (whitespace-delimited, ``@`` plus at least one word
    character) become the token ``USER``; anything starting ``http://``,
    ``https://`` or ``www.`` is consumed up to the next whitespace and
    becomes ``URL``. Everything else is lowercased and split into word
    runs and single punctuation marks. The two sentinels keep their
    uppercase spelling, so a standalone uppercase ``USER``/``URL`` chunk
    is treated as an already-inserted sentinel (this is what makes
    preprocessing idempotent).
    """
    text = _URL_RE.sub(f" {URL_SENTINEL} ", raw)
    text = _MENTION_RE.sub(f" {USER_SENTINEL} ", text)
    tokens: list[str] = []
    for chunk in text.split():
        if chunk in (USER_SENTINEL, URL_SENTINEL):
            tokens.append(chunk)
            continue
        tokens.extend(_TOKEN_RE.findall(chunk.lower()))
    return tokens


def aggregate_votes(
    votes: dict[str, int],
    threshold: int = 2,
    scheme: LabelScheme = DEFAULT_SCHEME,
) -> set[str] | Reject:
    """Majority-vote aggregation of annotator counts into a label set.

    Keeps every label whose count reaches ``threshold``. If nothing
    survives the document is rejected. If no-moral outvotes every other
    label strictly, the result is exactly ``{no-moral}`` (a tie does not
    trigger the override).
    """
    if not votes:
        raise ValueError("votes mapping is empty")
    for name, count in votes.items():
        if name not in scheme.index:
            raise KeyError(f"unknown label name: {name!r}")
        if count < 0:
            raise ValueError(f"negative vote count for {name!r}: {count}")
    kept = {name for name, count in votes.items() if count >= threshold}
    if not kept:
        return REJECT
    nm = votes.get(NO_MORAL, 0)
    if nm > 0 and all(count < nm for name, count in votes.items() if name != NO_MORAL):
        return {NO_MORAL}
    return kept


def collapse_to_single_label(
    kept: set[str],
    votes: dict[str, int],
    scheme: LabelScheme = DEFAULT_SCHEME,
) -> int:
    """Pick the kept label with the most votes; ties go to scheme order."""
    if not kept:
        raise ValueError("kept label set is empty")
    return min((-votes.get(name, 0), scheme.index_of(name)) for name in kept)[1]


@dataclass(frozen=True)
class RawRecord:
    id: str
    domain: str
    text: str
    votes: dict[str, int]


@dataclass(frozen=True)
class Document:
    """One preprocessed text with its domain tag and collapsed label index."""

    id: str
    domain: str
    tokens: tuple[str, ...]
    label: int

    def __post_init__(self):
        if len(self.tokens) < 3:
            raise ValueError(f"document {self.id!r} has fewer than 3 tokens")


@dataclass(frozen=True)
class Dataset:
    """Immutable view over documents, iterated in (domain, id) order."""

    documents: tuple[Document, ...]
    domains: tuple[str, ...] = field(default=())
    scheme: LabelScheme = DEFAULT_SCHEME

    def __post_init__(self):
        docs = tuple(sorted(self.documents, key=lambda d: (d.domain, d.id)))
        object.__setattr__(self, "documents", docs)
        object.__setattr__(self, "domains", tuple(sorted({d.domain for d in docs})))

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def domain_documents(self, domain: str) -> tuple[Document, ...]:
        if domain not in self.domains:
            raise KeyError(f"unknown domain: {domain!r}")
        return tuple(d for d in self.documents if d.domain == domain)

    def subset(self, domains: list[str] | tuple[str, ...]) -> "Dataset":
        wanted = set(domains)
        missing = wanted - set(self.domains)
        if missing:
            raise KeyError(f"unknown domains: {sorted(missing)}")
        return Dataset(tuple(d for d in self.documents if d.domain in wanted), scheme=self.scheme)


class RecordError(ValueError):
    """Malformed input record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _record_to_document(
    rec_id: str,
    domain: str,
    text: str,
    votes: dict[str, int] | None,
    label: str | None,
    threshold: int,
    scheme: LabelScheme,
    duplicate_multilabel: bool,
) -> list[Document]:
    tokens = tuple(preprocess_text(text))
    if len(tokens) < 3:
        return []
    if label is not None:
        return [Document(rec_id, domain, tokens, scheme.index_of(label))]
    kept = aggregate_votes(votes, threshold=threshold, scheme=scheme)
    if kept is REJECT:
        return []
    if duplicate_multilabel and len(kept) > 1:
        return [
            Document(f"{rec_id}::{name}", domain, tokens, scheme.index_of(name))
            for name in sorted(kept, key=scheme.index_of)
        ]
    return [Document(rec_id, domain, tokens, collapse_to_single_label(kept, votes, scheme))]


def load_dataset(
    path,
    format: str = "jsonl",
    threshold: int = 2,
    scheme: LabelScheme = DEFAULT_SCHEME,
    duplicate_multilabel: bool = False,
) -> Dataset:
    """Load, preprocess and aggregate a corpus file into a Dataset.

    JSONL records need ``id``, ``domain``, ``text`` and either ``votes``
    (label name -> count) or ``label`` (pre-aggregated). TSV rows are
    ``id<TAB>domain<TAB>label<TAB>text``. Records that fall below 3
    tokens or whose votes aggregate to nothing are dropped.

    ``duplicate_multilabel`` keeps one copy of the document per surviving
    label (ids suffixed ``::<label>``) instead of collapsing.
    """
    if format not in ("jsonl", "tsv"):
        raise ValueError(f"unknown format: {format!r}")
    documents: list[Document] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                if format == "jsonl":
                    obj = json.loads(line)
                    if not isinstance(obj, dict):
                        raise ValueError("record is not a JSON object")
                    rec_id = str(obj["id"])
                    domain = str(obj["domain"])
                    text = obj["text"]
                    votes = obj.get("votes")
                    label = obj.get("label")
                    if votes is None and label is None:
                        raise ValueError("record has neither 'votes' nor 'label'")
                    if votes is not None:
                        votes = {str(k): int(v) for k, v in votes.items()}
                else:
                    parts = line.split("\t")
                    if len(parts) != 4:
                        raise ValueError(f"expected 4 tab-separated fields, got {len(parts)}")
                    rec_id, domain, label, text = parts
                    votes = None
                documents.extend(
                    _record_to_document(
                        rec_id, domain, text, votes, label, threshold, scheme, duplicate_multilabel
                    )
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise RecordError(line_no, str(exc)) from exc
    return Dataset(tuple(documents), scheme=scheme)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset in the canonical pre-aggregated JSONL form."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in dataset:
            fh.write(
                json.dumps(
                    {
                        "id": doc.id,
                        "domain": doc.domain,
                        "text": " ".join(doc.tokens),
                        "label": dataset.scheme.name_of(doc.label),
                    }
                )
                + "\n"
            )


def label_distribution(dataset: Dataset, domain: str) -> np.ndarray:
    """Empirical label distribution of one domain as an 11-dim vector."""
    docs = dataset.domain_documents(domain)
    if not docs:
        raise ValueError(f"domain {domain!r} has no documents")
    counts = np.zeros(len(dataset.scheme), dtype=np.float64)
    for doc in docs:
        counts[doc.label] += 1
    return counts / counts.sum()


def virtue_vice_ratio(dataset: Dataset, domain: str) -> float:
    """Virtue-labeled over vice-labeled document counts (no-moral excluded)."""
    scheme = dataset.scheme
    virtue = vice = 0
    for doc in dataset.domain_documents(domain):
        name = scheme.name_of(doc.label)
        if scheme.is_virtue(name):
            virtue += 1
        elif scheme.is_vice(name):
            vice += 1
    if vice == 0:
        raise ValueError(f"domain {domain!r} has no vice-labeled documents; ratio undefined")
    return virtue / vice


def dataset_summary(dataset: Dataset) -> dict:
    """Per-domain document counts, mean token length and label percentages."""
    scheme = dataset.scheme
    rows = {}
    for domain in dataset.domains:
        docs = dataset.domain_documents(domain)
        dist = label_distribution(dataset, domain)
        rows[domain] = {
            "documents": len(docs),
            "mean_tokens": float(np.mean([len(d.tokens) for d in docs])),
            "label_percent": {name: round(100.0 * dist[i], 2) for i, name in enumerate(scheme.labels)},
        }
    all_counts = np.zeros(len(scheme))
    for doc in dataset:
        all_counts[doc.label] += 1
    rows["overall"] = {
        "documents": len(dataset),
        "mean_tokens": float(np.mean([len(d.tokens) for d in dataset.documents])) if len(dataset) else 0.0,
        "label_percent": {
            name: round(100.0 * all_counts[i] / max(1, len(dataset)), 2)
            for i, name in enumerate(scheme.labels)
        },
    }
    return rows
