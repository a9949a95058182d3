"""Input checks shared by the estimators."""
import numpy as np
from sklearn.utils.validation import check_is_fitted as _sk_check_is_fitted

from .graph import InteractionGraph, MultiRelGraph

__all__ = ["check_graph", "check_interactions", "check_ids", "check_is_fitted"]


def check_graph(graph):
    if not isinstance(graph, MultiRelGraph):
        raise TypeError(f"expected a MultiRelGraph, got {type(graph).__name__}")
    if graph.n_entities == 0:
        raise ValueError("graph has no entities")
    return graph


def check_interactions(graph):
    if not isinstance(graph, InteractionGraph):
        raise TypeError(f"expected an InteractionGraph, got {type(graph).__name__}")
    if graph.n_users == 0 or graph.n_items == 0:
        raise ValueError("interaction graph has no users or no items")
    return graph


def check_ids(ids, bound, what="id"):
    ids = np.atleast_1d(np.asarray(ids))
    if ids.size and not np.issubdtype(ids.dtype, np.integer):
        raise TypeError(f"{what}s must be integers")
    ids = ids.astype(np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= bound):
        raise ValueError(f"{what} out of range [0, {bound})")
    return ids


def check_is_fitted(estimator, attributes=None):
    _sk_check_is_fitted(estimator, attributes)
