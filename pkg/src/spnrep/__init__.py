"""spnrep: sum-product networks as density estimators and feature extractors.

Core objects live in :mod:`spnrep.core`; inference in :mod:`spnrep.inference`;
structure learning in :mod:`spnrep.learnspn`; embeddings, tree mixtures,
the logistic regression probe and visualization helpers in their own modules.
"""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    LeafNode,
    ProductNode,
    ScopeRanges,
    Spn,
    SumNode,
    build_spn,
    deserialize,
    leaf_node,
    product_node,
    serialize,
    structural_stats,
    sum_node,
)
from .exceptions import SpnError, SpnFormatError, SpnStructureError, ZeroProbabilityError  # noqa: E402
from .inference import (  # noqa: E402
    build_mpn,
    conditional,
    evaluate,
    evaluate_batch,
    log_marginal_batch,
    marginal,
    mpe_assign,
    sample,
)
from .learnspn import LearnParams, LearnSPN, learn_structure  # noqa: E402
from .embeddings import NodeEmbedding, RandomQueryEmbedding, spn_embedding  # noqa: E402
from .mixtrees import MixtureOfTrees, learn_chow_liu, learn_mixture  # noqa: E402
from .classify import OneVsRestLogisticRegression, grid_select, train_logreg_ovr  # noqa: E402

__all__ = [
    "LeafNode", "ProductNode", "SumNode", "Spn", "ScopeRanges",
    "build_spn", "leaf_node", "product_node", "sum_node",
    "serialize", "deserialize", "structural_stats",
    "SpnError", "SpnFormatError", "SpnStructureError", "ZeroProbabilityError",
    "evaluate", "evaluate_batch", "log_marginal_batch", "marginal", "conditional",
    "build_mpn", "mpe_assign", "sample",
    "LearnParams", "LearnSPN", "learn_structure",
    "NodeEmbedding", "RandomQueryEmbedding", "spn_embedding",
    "MixtureOfTrees", "learn_chow_liu", "learn_mixture",
    "OneVsRestLogisticRegression", "grid_select", "train_logreg_ovr",
]
