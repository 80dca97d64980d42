"""Domain-shift quantification: topic modeling, similarities, statistical tests."""

from .lda import TopicModel, domain_topic_distribution, fit_lda
from .stats import (
    RegressionTTest,
    ShiftTestReport,
    SimilarityMatrix,
    cosine_similarity,
    normality_test,
    performance_variation,
    regression_ttest,
    run_shift_tests,
    similarity_matrix,
    spearman_test,
)

__all__ = [
    "TopicModel",
    "fit_lda",
    "domain_topic_distribution",
    "SimilarityMatrix",
    "cosine_similarity",
    "similarity_matrix",
    "normality_test",
    "spearman_test",
    "performance_variation",
    "regression_ttest",
    "RegressionTTest",
    "ShiftTestReport",
    "run_shift_tests",
]
