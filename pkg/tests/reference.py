"""Slow step-by-step loop assembled from the public per-module operations.

Serves as an oracle for the fused kernel loop: it keeps one ``ScoreHistory``
and ``ModelState`` per model, plain multiplicative weights, and decides
coverage by building the prediction set label by label.
"""
import numpy as np

from gmocp import (
    ModelState,
    alpha_bar,
    connection_pmf,
    importance_loss,
    inclusion_probability,
    mw_update,
    node_weights,
    nonconformity_score,
    pinball_loss,
    prediction_set,
    scale_exponent,
    select_model,
    select_node_and_candidates,
    sf_ogd_update,
    threshold,
)
from gmocp._backend import get_kernels
from gmocp.engine import _draws


class Replay:
    """Stands in for a Generator, handing out pre-drawn uniforms."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def random(self, size=None):
        if size is None:
            return float(self.values.reshape(-1)[0])
        return self.values.reshape(size)


def reference_run(stream, config):
    T, M, _ = stream.probs.shape
    u, graph_u, node_u, model_u = _draws(config, T)
    sp = config.score_params
    target = config.alpha_target
    states = [ModelState(alpha=target) for _ in range(M)]
    b = scale_exponent(config.n_selective)
    out = {"chosen": [], "set_size": [], "covered": [], "updates": [], "alpha_chosen": [],
           "candidates": [], "history_lengths": []}

    for i in range(T):
        t = i + 1
        probs, label = stream.probs[i], int(stream.labels[i])
        weights = np.array([s.weight for s in states])
        if config.method == "gmocp":
            pmf = connection_pmf(weights, config.eta_e)
            adj = np.asarray(get_kernels("numpy").sample_adjacency(pmf, graph_u[i]))
            u_nodes = node_weights(adj, weights)
            node_pmf = u_nodes / u_nodes.sum()
            _, cands = select_node_and_candidates(adj, node_pmf, Replay(node_u[i]))
            m_hat = select_model(cands, weights, Replay(model_u[i]))
            q = inclusion_probability(node_pmf, pmf, config.n_trials)
        elif config.method == "mocp":
            cands = frozenset(range(M))
            m_hat = select_model(cands, weights, Replay(model_u[i]))
            q = np.ones(M)
        else:
            cands = frozenset([config.model])
            m_hat = config.model
            q = np.ones(M)

        s_true = [nonconformity_score(probs[m], label, sp, u[i]) for m in range(M)]
        chosen = states[m_hat]
        qhat = threshold(chosen.history, chosen.alpha, t)
        pset = prediction_set(probs[m_hat], sp, u[i], qhat)
        out["chosen"].append(m_hat)
        out["set_size"].append(len(pset))
        out["covered"].append(label in pset)
        out["alpha_chosen"].append(chosen.alpha)
        out["candidates"].append(cands)

        for m in sorted(cands):
            st = states[m]
            ab = alpha_bar(st.history, s_true[m], t)
            own_set = prediction_set(probs[m], sp, u[i], threshold(st.history, st.alpha, t))
            err = 0.0 if label in own_set else 1.0
            loss = pinball_loss(ab, st.alpha, target)
            sf_ogd_update(st, err - target, config.eta)
            if config.method == "gmocp":
                st.weight = mw_update(st.weight, importance_loss(loss, q[m], True), config.epsilon, b)
            else:
                st.weight = mw_update(st.weight, loss, config.epsilon, 0)
        out["updates"].append(len(cands))
        for m in range(M):
            states[m].history.append(s_true[m])
        out["history_lengths"].append([len(s.history) for s in states])

    out = {k: (np.asarray(v) if k != "candidates" else v) for k, v in out.items()}
    out["final_alphas"] = np.array([s.alpha for s in states])
    w = np.array([s.weight for s in states])
    out["final_weights"] = w / w.sum()
    return out
