"""Per-model miscoverage tracking and multiplicative weights."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .conformal import ScoreHistory


@dataclass
class ModelState:
    weight: float = 1.0
    alpha: float = 0.1
    grad_sq_sum: float = 0.0
    history: ScoreHistory = field(default_factory=ScoreHistory)

    def __post_init__(self):
        if not self.weight > 0:
            raise ValueError(f"weight must be positive, got {self.weight}")


@dataclass(frozen=True)
class AdaptationParams:
    alpha_target: float = 0.1
    eta: float = 0.05
    epsilon: float = 0.5
    b_scale: int = 0

    def __post_init__(self):
        if not 0 < self.alpha_target < 1:
            raise ValueError(f"alpha_target must be in (0, 1), got {self.alpha_target}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if int(self.b_scale) != self.b_scale or self.b_scale < 0:
            raise ValueError(f"b_scale must be a non-negative integer, got {self.b_scale}")


def scale_exponent(n_selective: int) -> int:
    """``floor(log2 J)`` without floating-point log."""
    if n_selective < 1:
        raise ValueError(f"n_selective must be >= 1, got {n_selective}")
    return int(n_selective).bit_length() - 1


def pinball_loss(alpha_bar: float, alpha: float, alpha_target: float) -> float:
    diff = alpha_bar - alpha
    return alpha_target * diff - min(0.0, diff)


def pinball_gradient(alpha_bar: float, alpha: float, alpha_target: float) -> float:
    """Subgradient of the pinball loss in ``alpha``: ``1[alpha_bar < alpha] - target``."""
    return (1.0 if alpha_bar < alpha else 0.0) - alpha_target


def sf_ogd_update(state: ModelState, grad: float, eta: float) -> float:
    """Scale-free gradient step on ``state.alpha``, clamped to [0, 1].

    The accumulated squared gradient includes the current step.
    """
    state.grad_sq_sum += grad * grad
    if state.grad_sq_sum > 0.0:
        state.alpha -= eta * grad / math.sqrt(state.grad_sq_sum)
        state.alpha = min(1.0, max(0.0, state.alpha))
    return state.alpha


def importance_loss(loss: float, q_m: float, selected: bool) -> float:
    if not selected:
        return 0.0
    if not q_m > 0:
        raise ValueError(f"selected model has inclusion probability {q_m}")
    return loss / q_m


def mw_update(weight: float, est_loss: float, epsilon: float, b: int) -> float:
    return weight * math.exp(-epsilon * est_loss / 2.0 ** b)
