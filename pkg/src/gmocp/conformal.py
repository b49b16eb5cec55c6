"""Nonconformity scores, quantile thresholds and prediction sets."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from ._backend import get_kernels
from ._kernels_numpy import needed_rank

PROB_TOL = 1e-6


@dataclass(frozen=True)
class ScoreParams:
    """Regularization of the rank-penalized score.

    ``xi`` scales the penalty ``sqrt(max(rank - k_reg, 0))`` added to the
    cumulative-probability score.
    """

    xi: float = 0.01
    k_reg: int = 2

    def __post_init__(self):
        if not (self.xi >= 0 and math.isfinite(self.xi)):
            raise ValueError(f"xi must be a finite non-negative number, got {self.xi}")
        if int(self.k_reg) != self.k_reg or self.k_reg < 0:
            raise ValueError(f"k_reg must be a non-negative integer, got {self.k_reg}")


class ScoreHistory:
    """Append-only record of one model's true-label scores.

    A sorted copy is kept alongside insertion order so order statistics and
    rank counts cost ``O(log t)`` lookups.
    """

    def __init__(self, scores: Iterable[float] = ()):
        self._scores: list[float] = []
        self._sorted: list[float] = []
        for s in scores:
            self.append(s)

    def append(self, score: float) -> None:
        score = float(score)
        if not math.isfinite(score) or score < 0:
            raise ValueError(f"scores must be finite and non-negative, got {score}")
        self._scores.append(score)
        bisect.insort(self._sorted, score)

    def __len__(self) -> int:
        return len(self._scores)

    def __iter__(self):
        return iter(self._scores)

    @property
    def scores(self) -> np.ndarray:
        return np.asarray(self._scores, dtype=np.float64)

    def kth_smallest(self, k: int) -> float:
        """1-based order statistic."""
        if not 1 <= k <= len(self._sorted):
            raise IndexError(f"k={k} outside 1..{len(self._sorted)}")
        return self._sorted[k - 1]

    def count_less(self, value: float) -> int:
        return bisect.bisect_left(self._sorted, value)


HistoryLike = Union[ScoreHistory, Sequence[float], np.ndarray]


def validate_probs(probs, n_labels: int | None = None) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 2:
        raise ValueError(f"probability vector must be 1-D with at least 2 labels, got shape {p.shape}")
    if n_labels is not None and p.shape[0] != n_labels:
        raise ValueError(f"expected {n_labels} labels, got {p.shape[0]}")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if abs(p.sum() - 1.0) > PROB_TOL:
        raise ValueError(f"probabilities sum to {p.sum():.8f}, not 1")
    return p


def _check_u(u: float) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    return u


def nonconformity_score(probs, label: int, params: ScoreParams = ScoreParams(), u: float = 0.0) -> float:
    """Score of ``label`` under one model's probability vector.

    The score adds the mass of strictly more probable labels, a ``u``-scaled
    share of the label's own mass, and ``xi * sqrt(max(k - k_reg, 0))`` where
    ``k`` counts labels at least as probable as ``label`` (ties included).
    """
    p = validate_probs(probs)
    if not 0 <= label < p.shape[0]:
        raise ValueError(f"label {label} outside [0, {p.shape[0]})")
    u = _check_u(u)
    return float(get_kernels().score_one(p, int(label), u, float(params.xi), int(params.k_reg)))


def label_scores(probs, params: ScoreParams = ScoreParams(), u: float = 0.0) -> np.ndarray:
    """Scores of every label with a shared randomization ``u``."""
    p = validate_probs(probs)
    u = _check_u(u)
    return np.asarray(get_kernels().label_scores(p, u, float(params.xi), int(params.k_reg)))


def _sorted_history(history: HistoryLike):
    if isinstance(history, ScoreHistory):
        return history
    return ScoreHistory(np.asarray(history, dtype=np.float64).ravel())


def threshold(history: HistoryLike, alpha_t: float, t: int) -> float:
    """Empirical quantile of past scores at level ``ceil(t(1-alpha_t)) / (t-1)``.

    Returns ``+inf`` when the history is empty or the level exceeds 1 and
    ``-inf`` when the level is non-positive.  ``t(1-alpha_t)`` values within
    1e-9 (relative) of an integer are taken as that integer, so the rank
    agrees with exact arithmetic on the stored float.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    hist = _sorted_history(history)
    if len(hist) != t - 1:
        raise ValueError(f"history has {len(hist)} scores, expected t-1={t - 1}")
    # level * (t-1) is the integer rank itself, so no second ceil is needed
    rank = needed_rank(t, alpha_t)
    if len(hist) == 0 or rank > t - 1:
        return math.inf
    if rank <= 0:
        return -math.inf
    return hist.kth_smallest(rank)


def prediction_set(probs, params: ScoreParams, u: float, qhat: float) -> frozenset[int]:
    scores = label_scores(probs, params, u)
    return frozenset(int(y) for y in np.flatnonzero(scores <= qhat))


def alpha_bar(history: HistoryLike, s_true: float, t: int) -> float:
    """Largest miscoverage level whose set would still contain the true label.

    With ``r`` past scores strictly below ``s_true`` the set covers exactly
    when ``alpha < 1 - r/t``; the supremum is returned.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    hist = _sorted_history(history)
    if len(hist) != t - 1:
        raise ValueError(f"history has {len(hist)} scores, expected t-1={t - 1}")
    if len(hist) == 0:
        return 1.0
    return 1.0 - hist.count_less(s_true) / t
