"""Compiled kernels for scoring, graph sampling and the online loop.

Every function here has a twin with the same signature in
``_kernels_numpy``; the two must agree bit-for-bit on integer outputs.
"""
import math

import numpy as np
from numba import njit

GMOCP = 0
MOCP = 1
SINGLE = 2

# floor on log-weight gaps so exp() never underflows to an exact zero
LOG_WEIGHT_FLOOR = -700.0
RANK_SNAP = 1e-9


@njit(cache=True)
def score_one(p, y, u, xi, k_reg):
    py = p[y]
    k = 0
    rho = 0.0
    for j in range(p.shape[0]):
        if p[j] >= py:
            k += 1
        if p[j] > py:
            rho += p[j]
    reg = k - k_reg
    penalty = xi * math.sqrt(reg) if reg > 0 else 0.0
    return penalty + u * py + rho


@njit(cache=True)
def label_scores(p, u, xi, k_reg):
    K = p.shape[0]
    out = np.empty(K)
    for y in range(K):
        out[y] = score_one(p, y, u, xi, k_reg)
    return out


@njit(cache=True)
def count_within(p, u, xi, k_reg, qhat):
    size = 0
    for y in range(p.shape[0]):
        if score_one(p, y, u, xi, k_reg) <= qhat:
            size += 1
    return size


@njit(cache=True)
def true_label_scores(probs, labels, u, xi, k_reg):
    T, M, _ = probs.shape
    out = np.empty((T, M))
    for i in range(T):
        for m in range(M):
            out[i, m] = score_one(probs[i, m], labels[i], u[i], xi, k_reg)
    return out


@njit(cache=True)
def categorical(weights, x):
    """Inverse-CDF draw from unnormalized ``weights`` using uniform ``x``."""
    total = 0.0
    for w in weights:
        total += w
    target = x * total
    cum = 0.0
    last = -1
    for idx in range(weights.shape[0]):
        if weights[idx] > 0.0:
            cum += weights[idx]
            last = idx
            if target < cum:
                return idx
    return last


@njit(cache=True)
def _fill_adjacency(adj, pmf, unif):
    J, N = unif.shape
    adj[:, :] = False
    for j in range(J):
        for n in range(N):
            adj[j, categorical(pmf, unif[j, n])] = True


@njit(cache=True)
def sample_adjacency(pmf, unif):
    adj = np.zeros((unif.shape[0], pmf.shape[0]), dtype=np.bool_)
    _fill_adjacency(adj, pmf, unif)
    return adj


@njit(cache=True)
def _tree_add(tree, pos):
    i = pos + 1
    n = tree.shape[0] - 1
    while i <= n:
        tree[i] += 1
        i += i & (-i)


@njit(cache=True)
def _tree_prefix(tree, pos):
    # number of inserted sorted positions < pos
    total = 0
    i = pos
    while i > 0:
        total += tree[i]
        i -= i & (-i)
    return total


@njit(cache=True)
def _tree_kth(tree, k):
    # 0-based sorted position of the k-th smallest inserted element (k >= 1)
    n = tree.shape[0] - 1
    step = 1
    while step * 2 <= n:
        step *= 2
    pos = 0
    while step > 0:
        nxt = pos + step
        if nxt <= n and tree[nxt] < k:
            pos = nxt
            k -= tree[nxt]
        step //= 2
    return pos


@njit(cache=True)
def needed_rank(t, alpha):
    # snap products within rounding noise of an integer before the ceiling
    x = t * (1.0 - alpha)
    n = math.floor(x + 0.5)
    if abs(x - n) <= RANK_SNAP * max(1.0, abs(x)):
        return n
    return math.ceil(x)


@njit(cache=True)
def run_loop(method, probs, labels, s_true, sorted_scores, ranks, u,
             graph_u, node_u, model_u, n_trials, n_selective,
             alpha_target, eta, epsilon, eta_e, b_scale, xi, k_reg,
             single_model):
    T, M, _ = probs.shape
    J = n_selective
    logw = np.zeros(M)
    w = np.ones(M)
    alpha = np.full(M, alpha_target)
    gsq = np.zeros(M)
    tree = np.zeros((M, T + 1), dtype=np.int64)
    member = np.zeros(M, dtype=np.bool_)
    q = np.ones(M)
    masked = np.empty(M)
    pmf = np.empty(M)
    adj = np.zeros((J, M), dtype=np.bool_)
    node_w = np.empty(J)
    node_pmf = np.empty(J)

    chosen = np.empty(T, dtype=np.int64)
    set_size = np.empty(T, dtype=np.int64)
    covered = np.empty(T, dtype=np.bool_)
    updates = np.empty(T, dtype=np.int64)
    alpha_chosen = np.empty(T)
    divisor = 2.0 ** b_scale
    trials_f = float(n_trials)

    for i in range(T):
        t = i + 1
        top = logw.max()
        for m in range(M):
            w[m] = math.exp(max(logw[m] - top, LOG_WEIGHT_FLOOR))

        if method == GMOCP:
            wsum = 0.0
            for m in range(M):
                wsum += w[m]
            for m in range(M):
                pmf[m] = (1.0 - eta_e) * w[m] / wsum + eta_e / M
            _fill_adjacency(adj, pmf, graph_u[i])
            node_sum = 0.0
            for j in range(J):
                node_w[j] = 0.0
                for m in range(M):
                    if adj[j, m]:
                        node_w[j] += w[m]
                node_sum += node_w[j]
            for j in range(J):
                node_pmf[j] = node_w[j] / node_sum
            jstar = categorical(node_pmf, node_u[i])
            for m in range(M):
                member[m] = adj[jstar, m]
                masked[m] = w[m] if member[m] else 0.0
            m_hat = categorical(masked, model_u[i])
            for m in range(M):
                reach = 1.0 - math.pow(1.0 - pmf[m], trials_f)
                acc = 0.0
                for j in range(J):
                    acc += node_pmf[j] * reach
                q[m] = min(acc, 1.0)
        elif method == MOCP:
            for m in range(M):
                member[m] = True
            m_hat = categorical(w, model_u[i])
        else:
            for m in range(M):
                member[m] = m == single_model
            m_hat = single_model

        # threshold and set for the selected model
        k = needed_rank(t, alpha[m_hat])
        if i == 0 or k > i:
            qhat = np.inf
        elif k <= 0:
            qhat = -np.inf
        else:
            qhat = sorted_scores[m_hat, _tree_kth(tree[m_hat], k)]
        chosen[i] = m_hat
        set_size[i] = count_within(probs[i, m_hat], u[i], xi, k_reg, qhat)
        covered[i] = s_true[i, m_hat] <= qhat
        alpha_chosen[i] = alpha[m_hat]

        n_upd = 0
        for m in range(M):
            if not member[m]:
                continue
            n_upd += 1
            s = s_true[i, m]
            pos = np.searchsorted(sorted_scores[m], s)
            r = _tree_prefix(tree[m], pos)
            abar = 1.0 - r / t
            km = needed_rank(t, alpha[m])
            if i == 0 or km > i:
                err = 0.0
            elif km <= 0:
                err = 1.0
            else:
                err = 0.0 if r < km else 1.0
            diff = abar - alpha[m]
            loss = alpha_target * diff - min(0.0, diff)
            grad = err - alpha_target
            gsq[m] += grad * grad
            if gsq[m] > 0.0:
                alpha[m] -= eta * grad / math.sqrt(gsq[m])
                alpha[m] = min(1.0, max(0.0, alpha[m]))
            if method == GMOCP:
                logw[m] -= epsilon * (loss / q[m]) / divisor
            else:
                logw[m] -= epsilon * loss
        updates[i] = n_upd

        for m in range(M):
            _tree_add(tree[m], ranks[m, i])

    top = logw.max()
    for m in range(M):
        w[m] = math.exp(max(logw[m] - top, LOG_WEIGHT_FLOOR))
    return chosen, set_size, covered, updates, alpha_chosen, w, alpha
