"""Bipartite model/selective-node graphs and candidate sampling.

Adjacency matrices are ``J x M``: row ``j`` lists the models attached to
selective node ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import get_kernels

PMF_TOL = 1e-9


@dataclass(frozen=True)
class GraphParams:
    n_models: int
    n_selective: int = 1
    n_trials: int = 1
    eta_e: float = 0.1

    def __post_init__(self):
        for name in ("n_models", "n_selective", "n_trials"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
        if not 0.0 <= self.eta_e <= 1.0:
            raise ValueError(f"eta_e must be in [0, 1], got {self.eta_e}")


@dataclass(frozen=True)
class GraphRealization:
    adjacency: np.ndarray
    node_weights: np.ndarray
    node_pmf: np.ndarray
    candidate_set: frozenset
    chosen_node: int
    connection_pmf: np.ndarray
    inclusion_probs: np.ndarray


def _check_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    if not w.sum() > 0:
        raise ValueError("weights sum to zero")
    return w


def connection_pmf(weights, eta_e: float) -> np.ndarray:
    """Weight-proportional PMF mixed with ``eta_e`` of uniform exploration."""
    w = _check_weights(weights)
    if np.any(w == 0):
        raise ValueError("weights must be strictly positive")
    if not 0.0 <= eta_e <= 1.0:
        raise ValueError(f"eta_e must be in [0, 1], got {eta_e}")
    return (1.0 - eta_e) * w / w.sum() + eta_e / w.shape[0]


def generate_graph(params: GraphParams, pmf, rng: np.random.Generator) -> np.ndarray:
    """Each selective node makes ``n_trials`` categorical draws from ``pmf``.

    Repeated draws of the same model collapse into one edge.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.shape != (params.n_models,):
        raise ValueError(f"pmf has shape {pmf.shape}, expected ({params.n_models},)")
    unif = rng.random((params.n_selective, params.n_trials))
    return np.asarray(get_kernels().sample_adjacency(pmf, unif))


def node_weights(adjacency, model_weights) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=bool)
    w = np.asarray(model_weights, dtype=np.float64)
    if adj.ndim != 2 or adj.shape[1] != w.shape[0]:
        raise ValueError(f"adjacency {adj.shape} does not match {w.shape[0]} model weights")
    empty = np.flatnonzero(~adj.any(axis=1))
    if empty.size:
        raise ValueError(f"selective node {int(empty[0])} has no edges")
    return adj.astype(np.float64) @ w


def select_node_and_candidates(adjacency, node_w, rng: np.random.Generator):
    """Pick a selective node proportionally to ``node_w``; return it with its models."""
    adj = np.asarray(adjacency, dtype=bool)
    node_w = _check_weights(node_w)
    j = int(get_kernels().categorical(node_w, rng.random()))
    return j, frozenset(int(m) for m in np.flatnonzero(adj[j]))


def select_model(candidate_set, model_weights, rng: np.random.Generator) -> int:
    """Draw one model from ``candidate_set`` by its normalized weights."""
    if not candidate_set:
        raise ValueError("candidate set is empty")
    w = np.asarray(model_weights, dtype=np.float64)
    mask = np.zeros(w.shape[0], dtype=bool)
    mask[sorted(candidate_set)] = True
    return int(get_kernels().categorical(np.where(mask, w, 0.0), rng.random()))


def inclusion_probability(node_pmf, conn_pmf, n_trials: int) -> np.ndarray:
    """Probability that each model lands in the candidate set.

    ``sum_j p'_j * (1 - (1 - p_m)^N)``; the node PMF enters only through its
    total, which is 1.
    """
    node_pmf = np.asarray(node_pmf, dtype=np.float64)
    reach = 1.0 - (1.0 - np.asarray(conn_pmf, dtype=np.float64)) ** n_trials
    # a connection PMF entry can exceed 1 by an ulp
    return np.minimum(node_pmf.sum() * reach, 1.0)


def realize_graph(model_weights, params: GraphParams, rng: np.random.Generator) -> GraphRealization:
    """One full draw: graph, node weights, node choice and inclusion probabilities."""
    pmf = connection_pmf(model_weights, params.eta_e)
    adj = generate_graph(params, pmf, rng)
    u = node_weights(adj, model_weights)
    node_pmf = u / u.sum()
    j, cands = select_node_and_candidates(adj, node_pmf, rng)
    return GraphRealization(
        adjacency=adj,
        node_weights=u,
        node_pmf=node_pmf,
        candidate_set=cands,
        chosen_node=j,
        connection_pmf=pmf,
        inclusion_probs=inclusion_probability(node_pmf, pmf, params.n_trials),
    )
