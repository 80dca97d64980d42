import numpy as np
import pytest

from moralshift import synth
from moralshift.corpus import Dataset, Document
from moralshift.labels import DEFAULT_SCHEME, LABELS


def docs_from_counts(domain: str, counts: dict[str, int], start: int = 0) -> list[Document]:
    """One three-token document per unit count, labeled as given."""
    docs = []
    i = start
    for name, count in counts.items():
        label = DEFAULT_SCHEME.index_of(name)
        for _ in range(count):
            docs.append(Document(f"{domain}-{i:06d}", domain, ("tok", "tok", "tok"), label))
            i += 1
    return docs


def dataset_from_counts(per_domain: dict[str, dict[str, int]]) -> Dataset:
    docs = []
    for domain, counts in per_domain.items():
        docs.extend(docs_from_counts(domain, counts))
    return Dataset(tuple(docs))


@pytest.fixture(scope="session")
def small_benchmark():
    """Grouped strong-shift benchmark at reduced size (5 domains x 400 docs)."""
    bench = synth.make_benchmark(docs_per_domain=400, seed=0)
    return bench, bench.generate(seed=11)


@pytest.fixture(scope="session")
def small_noshift_benchmark():
    bench = synth.make_benchmark(docs_per_domain=400, knobs=synth.ShiftKnob(0.0, 0.0), seed=0)
    return bench, bench.generate(seed=11)


__all__ = ["docs_from_counts", "dataset_from_counts", "LABELS"]
