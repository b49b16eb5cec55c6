"""Model-probability streams: synthetic generation and line-delimited JSON files.

A stream file starts with one header object followed by one record per line::

    {"format": "gmocp-stream", "version": 1, "n_models": 8, "n_labels": 20, ...}
    {"t": 0, "label": 3, "probs": [[...], ...]}
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_NAME = "gmocp-stream"
FORMAT_VERSION = 1
ROW_TOL = 1e-6

DEFAULT_QUALITY = (0.75,) * 6 + (0.45, 0.15)
DEFAULT_NAMES = tuple(f"high-{i}" for i in range(6)) + ("medium", "weak")


class StreamFormatError(ValueError):
    """Raised for malformed or inconsistent stream files and records."""


@dataclass(frozen=True)
class StreamHeader:
    n_models: int
    n_labels: int
    length: int
    model_names: tuple = ()
    generator: Optional[dict] = None

    def __post_init__(self):
        if self.n_models < 1:
            raise StreamFormatError(f"n_models must be >= 1, got {self.n_models}")
        if self.n_labels < 2:
            raise StreamFormatError(f"n_labels must be >= 2, got {self.n_labels}")
        if self.length < 1:
            raise StreamFormatError(f"length must be >= 1, got {self.length}")
        if self.model_names and len(self.model_names) != self.n_models:
            raise StreamFormatError(
                f"{len(self.model_names)} model names for {self.n_models} models"
            )

    def to_json(self) -> dict:
        out = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "n_models": self.n_models,
            "n_labels": self.n_labels,
            "length": self.length,
            "model_names": list(self.model_names),
        }
        if self.generator is not None:
            out["generator"] = self.generator
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "StreamHeader":
        if obj.get("format") != FORMAT_NAME:
            raise StreamFormatError(f"not a {FORMAT_NAME} file (format={obj.get('format')!r})")
        if obj.get("version") != FORMAT_VERSION:
            raise StreamFormatError(f"unsupported stream version {obj.get('version')!r}")
        try:
            return cls(
                n_models=int(obj["n_models"]),
                n_labels=int(obj["n_labels"]),
                length=int(obj["length"]),
                model_names=tuple(obj.get("model_names") or ()),
                generator=obj.get("generator"),
            )
        except KeyError as exc:
            raise StreamFormatError(f"header is missing {exc.args[0]!r}") from None


@dataclass(frozen=True)
class StreamRecord:
    t: int
    label: int
    probs: np.ndarray  # (M, K), row m is model m's probability vector


def check_record(record: StreamRecord, header: StreamHeader) -> None:
    probs = record.probs
    if probs.shape != (header.n_models, header.n_labels):
        raise StreamFormatError(
            f"record {record.t}: probs shape {probs.shape}, "
            f"expected ({header.n_models}, {header.n_labels})"
        )
    if not 0 <= record.label < header.n_labels:
        raise StreamFormatError(f"record {record.t}: label {record.label} out of range")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
        raise StreamFormatError(f"record {record.t}: probabilities must be finite and in [0, 1]")
    sums = probs.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        m = int(bad[0])
        raise StreamFormatError(
            f"record {record.t}: model {m} probabilities sum to {sums[m]:.6g}"
        )


@dataclass
class Stream:
    header: StreamHeader
    labels: np.ndarray  # (T,) int64
    probs: np.ndarray  # (T, M, K) float64

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def __iter__(self) -> Iterator[StreamRecord]:
        for i in range(len(self)):
            yield StreamRecord(i, int(self.labels[i]), self.probs[i])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.probs, dtype=np.float64).tobytes())
        return h.hexdigest()[:16]

    def select_models(self, models: Sequence[int]) -> "Stream":
        models = list(models)
        names = tuple(self.header.model_names[m] for m in models) if self.header.model_names else ()
        header = StreamHeader(len(models), self.header.n_labels, len(self), names, self.header.generator)
        return Stream(header, self.labels, self.probs[:, models, :])

    def head(self, length: int) -> "Stream":
        h = self.header
        header = StreamHeader(h.n_models, h.n_labels, length, h.model_names, h.generator)
        return Stream(header, self.labels[:length], self.probs[:length])

    @classmethod
    def from_records(cls, records: Iterable[StreamRecord], model_names: Sequence[str] = ()) -> "Stream":
        records = list(records)
        if not records:
            raise StreamFormatError("stream is empty")
        shapes = {np.shape(r.probs) for r in records}
        if len(shapes) != 1:
            raise StreamFormatError(f"records disagree on (models, labels): {sorted(shapes)}")
        M, K = shapes.pop()
        header = StreamHeader(M, K, len(records), tuple(model_names))
        labels = np.array([r.label for r in records], dtype=np.int64)
        probs = np.stack([np.asarray(r.probs, dtype=np.float64) for r in records])
        for i, r in enumerate(records):
            check_record(StreamRecord(i, int(labels[i]), probs[i]), header)
        return cls(header, labels, probs)


@dataclass(frozen=True)
class DriftProfile:
    """Per-model top-1 accuracy over time.

    ``gradual``: ``base + amplitude * sin(2 pi t / period + phase_m)`` with
    phases spread evenly across models.  ``abrupt``: piecewise constant over
    ``n_segments`` equal segments; the first segment uses ``base_quality`` as
    given and each later one a random permutation of it across models.
    """

    kind: str = "gradual"
    base_quality: tuple = DEFAULT_QUALITY
    amplitude: tuple = (0.1,) * 8
    period: int = 1000
    n_segments: int = 4

    def __post_init__(self):
        if self.kind not in ("gradual", "abrupt"):
            raise ValueError(f"drift kind must be 'gradual' or 'abrupt', got {self.kind!r}")
        object.__setattr__(self, "base_quality", tuple(float(q) for q in self.base_quality))
        amp = self.amplitude
        if np.isscalar(amp):
            amp = (float(amp),) * len(self.base_quality)
        object.__setattr__(self, "amplitude", tuple(float(a) for a in amp))
        if len(self.amplitude) != len(self.base_quality):
            raise ValueError("amplitude and base_quality lengths differ")
        if self.period < 1 or self.n_segments < 1:
            raise ValueError("period and n_segments must be positive")

    @property
    def n_models(self) -> int:
        return len(self.base_quality)

    def trajectories(self, length: int, rng: np.random.Generator) -> np.ndarray:
        base = np.asarray(self.base_quality)
        M = base.shape[0]
        t = np.arange(length)[:, None]
        if self.kind == "gradual":
            phase = 2.0 * np.pi * np.arange(M) / M
            q = base + np.asarray(self.amplitude) * np.sin(2.0 * np.pi * t / self.period + phase)
        else:
            seg = np.minimum(np.arange(length) * self.n_segments // length, self.n_segments - 1)
            table = np.empty((self.n_segments, M))
            table[0] = base
            for s in range(1, self.n_segments):
                table[s] = base[rng.permutation(M)]
            q = table[seg]
        return np.clip(q, 0.0, 1.0)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "base_quality": list(self.base_quality),
            "amplitude": list(self.amplitude),
            "period": self.period,
            "n_segments": self.n_segments,
        }


def _probability_rows(quality, labels, n_labels, concentration, rng):
    """Probability vectors whose argmax is the true label with prob ``quality``.

    A sorted Dirichlet draw supplies the values; the true label takes rank 0
    with probability ``quality`` and otherwise a rank drawn from a truncated
    geometric law with ratio ``1 - quality``, so stronger models also rank
    the true label near the top when they miss.
    """
    T, M = quality.shape
    K = n_labels
    g = rng.gamma(concentration, size=(T, M, K))
    values = -np.sort(-g, axis=2)
    values /= values.sum(axis=2, keepdims=True)

    hit = rng.random((T, M)) < quality
    ratio = np.clip(1.0 - quality, 1e-12, 1.0)[..., None]
    miss_w = ratio ** np.arange(1, K)
    cdf = np.cumsum(miss_w, axis=2)
    draw = rng.random((T, M, 1)) * cdf[..., -1:]
    miss_rank = 1 + np.minimum((cdf <= draw).sum(axis=2), K - 2)
    rank = np.where(hit, 0, miss_rank)

    keys = rng.random((T, M, K))
    true_idx = np.broadcast_to(labels[:, None, None], (T, M, 1))
    np.put_along_axis(keys, true_idx, -1.0, axis=2)
    others = np.argsort(keys, axis=2)[..., 1:]  # non-true labels, random order

    pos = np.arange(K)
    r = rank[..., None]
    before = np.take_along_axis(others, np.minimum(pos, K - 2) + 0 * r, axis=2)
    after = np.take_along_axis(others, np.maximum(pos - 1, 0) + 0 * r, axis=2)
    label_at = np.where(pos < r, before, np.where(pos == r, true_idx, after))

    probs = np.empty((T, M, K))
    np.put_along_axis(probs, label_at, values, axis=2)
    return probs


def generate_stream(
    length: int = 3000,
    n_labels: int = 20,
    drift: DriftProfile = DriftProfile(),
    seed: int = 0,
    model_names: Sequence[str] = (),
    concentration: float = 0.5,
) -> Stream:
    """Synthetic drifting stream; the defaults give 8 models, 20 labels, 3000 steps."""
    if n_labels < 2:
        raise ValueError(f"n_labels must be >= 2, got {n_labels}")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    M = drift.n_models
    if not model_names:
        model_names = DEFAULT_NAMES if M == len(DEFAULT_NAMES) and drift.base_quality == DEFAULT_QUALITY \
            else tuple(f"model-{m}" for m in range(M))
    rng = np.random.default_rng(seed)
    quality = drift.trajectories(length, rng)
    if np.all(quality <= 1.0 / n_labels):
        logger.warning("every model is at or below chance accuracy 1/%d", n_labels)
        raise ValueError("degenerate drift profile: no model is better than chance")
    labels = rng.integers(0, n_labels, size=length)
    probs = _probability_rows(quality, labels, n_labels, concentration, rng)
    header = StreamHeader(
        n_models=M,
        n_labels=n_labels,
        length=length,
        model_names=tuple(model_names),
        generator={"seed": int(seed), "concentration": concentration, "drift": drift.to_json()},
    )
    return Stream(header, labels.astype(np.int64), probs)


def write_stream(stream: Stream, path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps(stream.header.to_json()) + "\n")
            for rec in stream:
                fh.write(json.dumps({"t": rec.t, "label": rec.label, "probs": rec.probs.tolist()}) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write stream to {path}: {exc}") from exc


def load_stream(path):
    """Open a stream file; return its header and a validating record iterator."""
    path = Path(path)
    fh = path.open("r", encoding="utf-8")
    first = fh.readline()
    if not first.strip():
        fh.close()
        raise StreamFormatError(f"{path}: empty file, no header")
    try:
        header = StreamHeader.from_json(json.loads(first))
    except json.JSONDecodeError as exc:
        fh.close()
        raise StreamFormatError(f"{path}:1: malformed header: {exc.msg}") from None
    except StreamFormatError as exc:
        fh.close()
        raise StreamFormatError(f"{path}:1: {exc}") from None
    return header, _iter_records(fh, header, path)


def _iter_records(fh, header: StreamHeader, path: Path) -> Iterator[StreamRecord]:
    count = 0
    with fh:
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                if not line.endswith("\n"):
                    raise StreamFormatError(
                        f"{path}:{lineno}: file ends in the middle of record {count}"
                    ) from None
                raise StreamFormatError(f"{path}:{lineno}: malformed record {count}: {exc.msg}") from None
            try:
                rec = StreamRecord(
                    t=int(obj["t"]),
                    label=int(obj["label"]),
                    probs=np.asarray(obj["probs"], dtype=np.float64),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise StreamFormatError(f"{path}:{lineno}: malformed record {count}: {exc}") from None
            if rec.t != count:
                raise StreamFormatError(f"{path}:{lineno}: record index {rec.t}, expected {count}")
            try:
                check_record(rec, header)
            except StreamFormatError as exc:
                raise StreamFormatError(f"{path}:{lineno}: {exc}") from None
            count += 1
            if count > header.length:
                raise StreamFormatError(f"{path}:{lineno}: more records than header length {header.length}")
            yield rec
    if count < header.length:
        raise StreamFormatError(
            f"{path}: stream ended cleanly after {count} records but header declares {header.length}"
        )


def read_stream(path) -> Stream:
    header, records = load_stream(path)
    labels = np.empty(header.length, dtype=np.int64)
    probs = np.empty((header.length, header.n_models, header.n_labels))
    for rec in records:
        labels[rec.t] = rec.label
        probs[rec.t] = rec.probs
    return Stream(header, labels, probs)
