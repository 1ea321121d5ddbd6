"""Python bindings for the relrec sequential-recommendation core."""

from ._relrec import (
    Dataset,
    Model,
    RelrecError,
    baseline_loss,
    evaluate,
    hr_at_k,
    load_dataset,
    make_profile,
    ndcg_at_k,
    relevance_loss,
    report,
    train,
)

__all__ = [
    "Dataset",
    "Model",
    "RelrecError",
    "baseline_loss",
    "evaluate",
    "hr_at_k",
    "load_dataset",
    "make_profile",
    "ndcg_at_k",
    "relevance_loss",
    "report",
    "train",
]
