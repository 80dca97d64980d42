"""Vocabulary and batching for the neural adaptation framework."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
import torch

from ..corpus import Dataset

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


@dataclass(frozen=True)
class Vocabulary:
    """Token -> id table; out-of-vocabulary tokens map to UNK."""

    tokens: tuple[str, ...]

    @property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens, max_len: int) -> list[int]:
        table = self.index
        return [table.get(t, UNK_ID) for t in list(tokens)[:max_len]]


def build_vocabulary(dataset: Dataset, limit: int = 10_000) -> Vocabulary:
    """Most frequent ``limit`` training tokens, ties broken lexicographically."""
    counts = Counter(tok for doc in dataset for tok in doc.tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:limit]
    return Vocabulary((PAD, UNK) + tuple(t for t, _ in ranked))


def load_embeddings(path, vocab: Vocabulary, dim: int) -> np.ndarray:
    """Read a word2vec-style text file into a static embedding table.

    Rows for words missing from the file stay zero; PAD stays zero.
    """
    table = np.zeros((len(vocab), dim), dtype=np.float32)
    index = vocab.index
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                continue
            word = parts[0]
            if word in index and word != PAD:
                table[index[word]] = np.array(parts[1:], dtype=np.float32)
    return table


@dataclass
class EncodedDocs:
    """Pre-encoded, pre-padded id sequences for one document collection."""

    padded: torch.Tensor  # N x max(doc length), PAD-filled
    lengths: torch.Tensor
    labels: torch.Tensor
    domains: tuple[str, ...]

    def __len__(self) -> int:
        return int(self.padded.shape[0])

    def batch(self, idx) -> tuple[torch.Tensor, torch.Tensor]:
        """Rows ``idx``, trimmed to the longest sequence in the batch."""
        rows = torch.as_tensor(idx, dtype=torch.int64)
        lengths = self.lengths[rows]
        return self.padded[rows, : int(lengths.max())], lengths


def encode_documents(docs, vocab: Vocabulary, max_len: int) -> EncodedDocs:
    docs = list(docs)
    ids = [vocab.encode(d.tokens, max_len) for d in docs]
    padded, lengths = pad_batch(ids)
    return EncodedDocs(
        padded=padded,
        lengths=lengths,
        labels=torch.tensor([d.label for d in docs], dtype=torch.int64),
        domains=tuple(d.domain for d in docs),
    )


def pad_batch(id_lists, dtype=torch.int64) -> tuple[torch.Tensor, torch.Tensor]:
    """Stack variable-length id lists into (padded ids, lengths)."""
    if not id_lists:
        raise ValueError("empty batch")
    lengths = torch.tensor([len(ids) for ids in id_lists], dtype=torch.int64)
    if int(lengths.min()) == 0:
        raise ValueError("cannot encode an empty token sequence")
    width = int(lengths.max())
    out = torch.full((len(id_lists), width), PAD_ID, dtype=dtype)
    for i, ids in enumerate(id_lists):
        out[i, : len(ids)] = torch.tensor(ids, dtype=dtype)
    return out, lengths


class Cycler:
    """Endless shuffled index stream; reshuffles whenever it wraps around."""

    def __init__(self, n: int, rng: np.random.Generator):
        if n <= 0:
            raise ValueError("cannot cycle over an empty collection")
        self._n = n
        self._rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def take(self, k: int) -> list[int]:
        out: list[int] = []
        while k > 0:
            if self._pos == self._n:
                self._order = self._rng.permutation(self._n)
                self._pos = 0
            step = min(k, self._n - self._pos)
            out.extend(int(i) for i in self._order[self._pos : self._pos + step])
            self._pos += step
            k -= step
        return out
