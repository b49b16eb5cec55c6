"""Pure numpy/Python twins of ``_kernels_numba``.

Sums that feed comparisons use ``cumsum(...)[-1]`` so the accumulation order
matches the sequential loops of the compiled path.
"""
import bisect
import math
from itertools import accumulate

import numpy as np

GMOCP = 0
MOCP = 1
SINGLE = 2

LOG_WEIGHT_FLOOR = -700.0
RANK_SNAP = 1e-9


def _seqsum(a, axis=-1):
    if a.shape[axis] == 0:
        return np.zeros(np.delete(a.shape, axis))
    return np.take(np.cumsum(a, axis=axis), -1, axis=axis)


def _penalty(k, xi, k_reg):
    reg = k - k_reg
    return np.where(reg > 0, xi * np.sqrt(np.maximum(reg, 0)), 0.0)


def score_one(p, y, u, xi, k_reg):
    py = p[y]
    k = int(np.count_nonzero(p >= py))
    rho = float(_seqsum(np.where(p > py, p, 0.0)))
    reg = k - k_reg
    penalty = xi * math.sqrt(reg) if reg > 0 else 0.0
    return penalty + u * py + rho


def label_scores(p, u, xi, k_reg):
    p = np.asarray(p, dtype=np.float64)
    py = p[:, None]
    k = np.count_nonzero(p[None, :] >= py, axis=1)
    rho = _seqsum(np.where(p[None, :] > py, p[None, :], 0.0), axis=1)
    return _penalty(k, xi, k_reg) + u * p + rho


def true_label_scores(probs, labels, u, xi, k_reg):
    probs = np.asarray(probs, dtype=np.float64)
    T, M, K = probs.shape
    py = np.take_along_axis(
        probs, np.broadcast_to(labels[:, None, None], (T, M, 1)), axis=2
    )
    k = np.count_nonzero(probs >= py, axis=2)
    rho = _seqsum(np.where(probs > py, probs, 0.0), axis=2)
    return _penalty(k, xi, k_reg) + u[:, None] * py[..., 0] + rho


def categorical(weights, x):
    """Inverse-CDF draw from unnormalized ``weights`` using uniform ``x``."""
    weights = np.asarray(weights, dtype=np.float64)
    positive = weights > 0.0
    cum = np.cumsum(np.where(positive, weights, 0.0))
    target = x * _seqsum(weights)
    idx = int(np.searchsorted(cum, target, side="right"))
    if idx >= weights.shape[0]:
        # rounding at the upper edge: fall back to the last live entry
        nz = np.flatnonzero(positive)
        return int(nz[-1]) if nz.size else -1
    return idx


def sample_adjacency(pmf, unif):
    pmf = np.asarray(pmf, dtype=np.float64)
    J, _ = unif.shape
    cum = np.cumsum(pmf)
    total = cum[-1]
    draws = np.searchsorted(cum, unif * total, side="right")
    draws = np.minimum(draws, pmf.shape[0] - 1)
    adj = np.zeros((J, pmf.shape[0]), dtype=bool)
    np.put_along_axis(adj, draws, True, axis=1)
    return adj


class _Fenwick:
    __slots__ = ("tree", "n")

    def __init__(self, n):
        self.n = n
        self.tree = [0] * (n + 1)

    def add(self, pos):
        i = pos + 1
        tree, n = self.tree, self.n
        while i <= n:
            tree[i] += 1
            i += i & (-i)

    def prefix(self, pos):
        total = 0
        tree = self.tree
        while pos > 0:
            total += tree[pos]
            pos -= pos & (-pos)
        return total

    def kth(self, k):
        tree, n = self.tree, self.n
        step = 1 << (n.bit_length() - 1) if n else 0
        pos = 0
        while step:
            nxt = pos + step
            if nxt <= n and tree[nxt] < k:
                pos = nxt
                k -= tree[nxt]
            step >>= 1
        return pos


def _weights(logw):
    # libm exp per element so the weights match the compiled path bit for bit
    top = max(logw)
    return [math.exp(max(v - top, LOG_WEIGHT_FLOOR)) for v in logw]


def _pick(cum, x):
    idx = bisect.bisect_right(cum, x * cum[-1])
    if idx >= len(cum):
        # rounding at the upper edge: last entry with positive mass
        idx = len(cum) - 1
        while idx > 0 and cum[idx] == cum[idx - 1]:
            idx -= 1
    return idx


def needed_rank(t, alpha):
    # snap products within rounding noise of an integer before the ceiling
    x = t * (1.0 - alpha)
    n = math.floor(x + 0.5)
    if abs(x - n) <= RANK_SNAP * max(1.0, abs(x)):
        return n
    return math.ceil(x)


def run_loop(method, probs, labels, s_true, sorted_scores, ranks, u,
             graph_u, node_u, model_u, n_trials, n_selective,
             alpha_target, eta, epsilon, eta_e, b_scale, xi, k_reg,
             single_model):
    # The per-step vectors have length M or J, so plain Python floats beat
    # numpy calls here; sums are accumulated left to right like the loops
    # in the compiled kernel.
    T, M, _ = probs.shape
    logw = [0.0] * M
    alpha = [float(alpha_target)] * M
    gsq = [0.0] * M
    q = [1.0] * M
    trees = [_Fenwick(T) for _ in range(M)]
    sorted_lists = [sorted_scores[m].tolist() for m in range(M)]
    ranks_t = np.ascontiguousarray(ranks.T).tolist()
    s_true_l = s_true.tolist()
    u_l = u.tolist()
    trials_f = float(n_trials)
    divisor = 2.0 ** b_scale
    everyone = list(range(M))
    if method == GMOCP:
        graph_l = graph_u.tolist()
        node_l = node_u.tolist()
    model_l = model_u.tolist()

    chosen = np.empty(T, dtype=np.int64)
    set_size = np.empty(T, dtype=np.int64)
    covered = np.empty(T, dtype=bool)
    updates = np.empty(T, dtype=np.int64)
    alpha_chosen = np.empty(T)

    for i in range(T):
        t = i + 1
        w = _weights(logw)

        if method == GMOCP:
            wsum = list(accumulate(w))[-1]
            pmf = [(1.0 - eta_e) * x / wsum + eta_e / M for x in w]
            cum = list(accumulate(pmf))
            rows = [sorted({_pick(cum, x) for x in draws}) for draws in graph_l[i]]
            node_w = [list(accumulate([w[m] for m in row]))[-1] for row in rows]
            node_sum = list(accumulate(node_w))[-1]
            node_pmf = [x / node_sum for x in node_w]
            members = rows[_pick(list(accumulate(node_pmf)), node_l[i])]
            live = set(members)
            masked = [w[m] if m in live else 0.0 for m in range(M)]
            m_hat = _pick(list(accumulate(masked)), model_l[i])
            for m in range(M):
                reach = 1.0 - math.pow(1.0 - pmf[m], trials_f)
                acc = 0.0
                for pj in node_pmf:
                    acc += pj * reach
                q[m] = min(acc, 1.0)
        elif method == MOCP:
            m_hat = _pick(list(accumulate(w)), model_l[i])
            members = everyone
        else:
            m_hat = single_model
            members = [single_model]

        row = s_true_l[i]
        k = needed_rank(t, alpha[m_hat])
        if i == 0 or k > i:
            qhat = math.inf
        elif k <= 0:
            qhat = -math.inf
        else:
            qhat = sorted_lists[m_hat][trees[m_hat].kth(k)]
        scores = label_scores(probs[i, m_hat], u_l[i], xi, k_reg)
        chosen[i] = m_hat
        set_size[i] = int(np.count_nonzero(scores <= qhat))
        covered[i] = row[m_hat] <= qhat
        alpha_chosen[i] = alpha[m_hat]

        for m in members:
            s = row[m]
            r = trees[m].prefix(bisect.bisect_left(sorted_lists[m], s))
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
                a = alpha[m] - eta * grad / math.sqrt(gsq[m])
                alpha[m] = min(1.0, max(0.0, a))
            if method == GMOCP:
                logw[m] -= epsilon * (loss / q[m]) / divisor
            else:
                logw[m] -= epsilon * loss
        updates[i] = len(members)

        for m, pos in enumerate(ranks_t[i]):
            trees[m].add(pos)

    return chosen, set_size, covered, updates, alpha_chosen, np.array(_weights(logw)), np.array(alpha)
