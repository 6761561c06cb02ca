"""Spectral eigenvector augmentation for reconstruction-based graph anomaly detection."""
from .graph import (
    AttributedGraph,
    FeatureMatrix,
    SparseGraph,
    generate_synthetic,
    inject_contextual_anomalies,
    inject_structural_anomalies,
    make_benchmark,
    normalized_adjacency,
    parse_edge_list,
)
from .metrics import evaluate, roc_auc, score_gap
from .models import TrainConfig, run_comparison, train
from .spectral import (
    EigenPairs,
    augment_features,
    dense_eig_oracle,
    neighbor_average_residual,
    top_eigenpairs,
)

__version__ = "0.1.0"
