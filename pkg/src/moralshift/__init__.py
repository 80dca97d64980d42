"""moralshift: domain-shift analysis and adaptive morality classification."""

from . import baseline, corpus, eval, l2af, shift_analysis, synth
from .labels import DEFAULT_SCHEME, LABELS, LabelScheme

__version__ = "0.1.0"

__all__ = [
    "corpus",
    "synth",
    "shift_analysis",
    "baseline",
    "l2af",
    "eval",
    "LabelScheme",
    "DEFAULT_SCHEME",
    "LABELS",
    "__version__",
]
