"""Online loops: graph-structured selection, full-pool selection, single model.

All three share one kernel loop.  Randomness comes from four independent
child streams of the run seed (graph trials, node choice, model choice,
score randomization), each drawn in bulk before the loop starts.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional, Union

import numpy as np

from ._backend import active_backend, get_kernels
from .adaptation import scale_exponent
from .conformal import ScoreParams
from .streams import Stream, StreamFormatError, StreamRecord

METHODS = ("gmocp", "mocp", "single")
_METHOD_CODE = {"gmocp": 0, "mocp": 1, "single": 2}


@dataclass(frozen=True)
class RunConfig:
    method: str = "gmocp"
    alpha_target: float = 0.1
    eta: float = 0.05
    epsilon: float = 0.5
    eta_e: float = 0.1
    n_trials: int = 1
    n_selective: int = 1
    score_params: ScoreParams = ScoreParams()
    seed: int = 0
    warmup: int = 50
    model: Optional[int] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 < self.alpha_target < 1:
            raise ValueError(f"alpha_target must be in (0, 1), got {self.alpha_target}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0 < self.epsilon < 1:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")
        if not 0 <= self.eta_e <= 1:
            raise ValueError(f"eta_e must be in [0, 1], got {self.eta_e}")
        if self.n_trials < 1 or self.n_selective < 1:
            raise ValueError("n_trials and n_selective must be >= 1")
        if self.warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {self.warmup}")
        if self.method == "single" and (self.model is None or self.model < 0):
            raise ValueError("single-model runs need a non-negative model index")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def label(self) -> str:
        if self.method == "single":
            return f"single[{self.model}]"
        return self.method

    def to_flat(self) -> dict:
        return {
            "method": self.method,
            "model": self.model,
            "alpha": self.alpha_target,
            "eta": self.eta,
            "epsilon": self.epsilon,
            "eta_e": self.eta_e,
            "N": self.n_trials,
            "J": self.n_selective,
            "xi": self.score_params.xi,
            "k_reg": self.score_params.k_reg,
            "warmup": self.warmup,
            "seed": self.seed,
        }

    def digest(self) -> str:
        """Hash of every setting except the seed."""
        flat = self.to_flat()
        flat.pop("seed")
        return hashlib.sha256(json.dumps(flat, sort_keys=True).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class StepOutcome:
    t: int
    chosen_model: int
    set_size: int
    covered: bool
    updates_performed: int
    alpha_of_chosen: float


@dataclass
class RunReport:
    coverage: float
    avg_width: float
    runtime_seconds: float
    config: RunConfig
    chosen: np.ndarray
    set_size: np.ndarray
    covered: np.ndarray
    updates: np.ndarray
    alpha_chosen: np.ndarray
    final_weights: np.ndarray
    final_alphas: np.ndarray
    warmup: int
    backend: str = field(default="numba")

    @property
    def n_steps(self) -> int:
        """Evaluated (post-warmup) steps."""
        return int(self.chosen.shape[0]) - self.warmup

    @property
    def updates_total(self) -> int:
        return int(self.updates.sum())

    @property
    def per_step(self) -> list:
        """Post-warmup outcomes, re-indexed from t = 1."""
        w = self.warmup
        return [
            StepOutcome(
                t=i - w + 1,
                chosen_model=int(self.chosen[i]),
                set_size=int(self.set_size[i]),
                covered=bool(self.covered[i]),
                updates_performed=int(self.updates[i]),
                alpha_of_chosen=float(self.alpha_chosen[i]),
            )
            for i in range(w, self.chosen.shape[0])
        ]


class Metrics(NamedTuple):
    coverage: float
    avg_width: float
    runtime_seconds: float


def _as_stream(stream: Union[Stream, Iterable[StreamRecord]]) -> Stream:
    if isinstance(stream, Stream):
        return stream
    return Stream.from_records(stream)


def _check_stream(stream: Stream, config: RunConfig) -> None:
    T = len(stream)
    if T == 0:
        raise StreamFormatError("stream is empty")
    _, M, K = stream.probs.shape
    if M != stream.header.n_models or K != stream.header.n_labels:
        raise StreamFormatError(
            f"stream arrays are {M} models x {K} labels, header says "
            f"{stream.header.n_models} x {stream.header.n_labels}"
        )
    if not np.all(np.isfinite(stream.probs)):
        raise StreamFormatError("stream contains non-finite probabilities")
    if config.warmup >= T:
        raise ValueError(f"warmup {config.warmup} leaves no evaluated steps in a stream of {T}")
    if config.method == "single" and config.model >= M:
        raise ValueError(f"model index {config.model} out of range for {M} models")


def _draws(config: RunConfig, T: int):
    graph_ss, node_ss, model_ss, score_ss = np.random.SeedSequence(config.seed).spawn(4)
    u = np.random.default_rng(score_ss).random(T)
    if config.method == "gmocp":
        graph_u = np.random.default_rng(graph_ss).random((T, config.n_selective, config.n_trials))
        node_u = np.random.default_rng(node_ss).random(T)
    else:
        graph_u = np.zeros((1, 1, 1))
        node_u = np.zeros(1)
    model_u = np.random.default_rng(model_ss).random(T)
    return u, graph_u, node_u, model_u


_warmed = set()


def _warm_up(kernels) -> None:
    # compile outside the timed region
    name = kernels.__name__
    if name in _warmed:
        return
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(3), size=(4, 2))
    labels = np.zeros(4, dtype=np.int64)
    for code in (0, 1, 2):
        _loop(kernels, code, probs, labels, rng.random(4), rng.random((4, 1, 1)),
              rng.random(4), rng.random(4), RunConfig(), 0)
    _warmed.add(name)


def _loop(kernels, code, probs, labels, u, graph_u, node_u, model_u, config, single):
    sp = config.score_params
    s_true = kernels.true_label_scores(probs, labels, u, float(sp.xi), int(sp.k_reg))
    order = np.argsort(s_true, axis=0, kind="stable").T  # (M, T)
    sorted_scores = np.ascontiguousarray(np.take_along_axis(s_true.T, order, axis=1))
    ranks = np.empty(order.shape, dtype=np.int64)
    np.put_along_axis(ranks, order, np.arange(order.shape[1]), axis=1)
    return kernels.run_loop(
        code, probs, labels, s_true, sorted_scores, ranks, u,
        graph_u, node_u, model_u, int(config.n_trials), int(config.n_selective),
        float(config.alpha_target), float(config.eta), float(config.epsilon),
        float(config.eta_e), scale_exponent(config.n_selective),
        float(sp.xi), int(sp.k_reg), int(single),
    )


def _run(stream, config: RunConfig) -> RunReport:
    stream = _as_stream(stream)
    _check_stream(stream, config)
    kernels = get_kernels()
    _warm_up(kernels)
    probs = np.ascontiguousarray(stream.probs, dtype=np.float64)
    labels = np.ascontiguousarray(stream.labels, dtype=np.int64)
    draws = _draws(config, len(stream))
    single = config.model if config.method == "single" else 0

    start = time.perf_counter()
    chosen, size, covered, updates, alpha_c, w, alphas = _loop(
        kernels, _METHOD_CODE[config.method], probs, labels, *draws, config, single
    )
    runtime = time.perf_counter() - start

    w0 = config.warmup
    return RunReport(
        coverage=float(np.mean(covered[w0:])),
        avg_width=float(np.mean(size[w0:])),
        runtime_seconds=runtime,
        config=config,
        chosen=np.asarray(chosen),
        set_size=np.asarray(size),
        covered=np.asarray(covered, dtype=bool),
        updates=np.asarray(updates),
        alpha_chosen=np.asarray(alpha_c),
        final_weights=np.asarray(w) / np.sum(w),
        final_alphas=np.asarray(alphas),
        warmup=w0,
        backend=active_backend(),
    )


def gmocp_run(stream, config: RunConfig) -> RunReport:
    """Graph-structured selection: only models on the sampled selective node
    are candidates and only they are updated."""
    if config.method != "gmocp":
        config = replace(config, method="gmocp")
    return _run(stream, config)


def mocp_run(stream, config: RunConfig) -> RunReport:
    """Sample from the whole pool and update every model with raw losses."""
    if config.method != "mocp":
        config = replace(config, method="mocp")
    return _run(stream, config)


def single_run(stream, config: RunConfig) -> RunReport:
    if config.method != "single":
        config = replace(config, method="single")
    return _run(stream, config)


def run(stream, config: RunConfig) -> RunReport:
    return _run(stream, config)


def evaluate(report: RunReport) -> Metrics:
    """Coverage and mean width over the post-warmup steps, plus runtime."""
    if report.n_steps <= 0:
        raise ValueError("report has no evaluated steps")
    w = report.warmup
    return Metrics(
        coverage=float(np.mean(report.covered[w:])),
        avg_width=float(np.mean(report.set_size[w:])),
        runtime_seconds=report.runtime_seconds,
    )
