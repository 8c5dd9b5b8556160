"""Python surface of the graph masked auto-encoder library.

The compiled extension `_dgmae` must be importable (it is built into the
CMake build tree; put that directory on PYTHONPATH).
"""

from _dgmae import (
    Dataset,
    Graph,
    ModelParams,
    edge_homophily,
    embed,
    fit,
    generate_synthetic,
    kmeans_cluster,
    laplacian_discrepancy,
    linear_probe,
    load_checkpoint,
    load_graph,
    local_feature_homophily,
    pairwise_similarity_histogram,
    save_checkpoint,
    save_graph,
    sym_norm_adjacency_apply,
)

__all__ = [
    "Dataset",
    "Graph",
    "ModelParams",
    "edge_homophily",
    "embed",
    "fit",
    "generate_synthetic",
    "kmeans_cluster",
    "laplacian_discrepancy",
    "linear_probe",
    "load_checkpoint",
    "load_graph",
    "local_feature_homophily",
    "pairwise_similarity_histogram",
    "save_checkpoint",
    "save_graph",
    "sym_norm_adjacency_apply",
]
