"""The fixed 11-category moral label scheme.

The ordering below is canonical: every module that builds label vectors,
breaks ties, or indexes classes uses this exact order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

LABELS: tuple[str, ...] = (
    "authority",
    "betrayal",
    "care",
    "cheating",
    "degradation",
    "fairness",
    "harm",
    "loyalty",
    "purity",
    "subversion",
    "no-moral",
)

VIRTUES: frozenset[str] = frozenset({"authority", "care", "fairness", "loyalty", "purity"})
VICES: frozenset[str] = frozenset({"betrayal", "cheating", "degradation", "harm", "subversion"})
NO_MORAL = "no-moral"


@dataclass(frozen=True)
class LabelScheme:
    """Ordered label set with its virtue/vice grouping."""

    labels: tuple[str, ...] = LABELS
    virtue_set: frozenset[str] = VIRTUES
    vice_set: frozenset[str] = VICES

    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.labels) != 11:
            raise ValueError(f"label scheme must have exactly 11 labels, got {len(self.labels)}")
        full = self.virtue_set | self.vice_set | {NO_MORAL}
        if full != set(self.labels):
            raise ValueError("virtue_set, vice_set and no-moral must partition the label set")
        if self.virtue_set & self.vice_set:
            raise ValueError("virtue_set " "and vice_set must be disjoint")
        object.__setattr__(self, "index", {name: i for i, name in enumerate(self.labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise KeyError(f"unknown label name: {label!r}") from None

    def name_of(self, idx: int) -> str:
        return self.labels[idx]

    def is_virtue(self, label: str) -> bool:
        return label in self.virtue_set

    def is_vice(self, label: str) -> bool:
        return label in self.vice_set


#: Shared default instance; the scheme is fixed, so modules can just use this.
DEFAULT_SCHEME = LabelScheme()
