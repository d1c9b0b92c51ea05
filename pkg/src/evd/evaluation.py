"""Baseline filters, denoising metrics, and the throughput bench harness.

The SNR metric is computed on the *survivors* of denoising: M counts kept
events that are truly real, N counts kept events that are truly noise, and
the score is ``factor * log10(M / N)`` with factor 20 by default (a
``factor=10`` convention is selectable for power-style reporting). N = 0
maps to +inf and M = 0 to -inf.

The three reference filters are causal single-pass scans over a time-sorted
stream: support-within-dt in the 8-neighborhood (BAF), a neighbor-count
threshold over a spatiotemporal box (NNb), and a same-pixel refractory
period (RP). All of them label every event exactly once.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_left
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import EventStream, Label, SensorGeometry
from .errors import ConfigError, EmptyStream


def snr_db_from_counts(m: int, n: int, factor: float = 20.0) -> float:
    if n == 0:
        return math.inf
    if m == 0:
        return -math.inf
    return factor * math.log10(m / n)


def snr_db(truth, predicted, factor: float = 20.0) -> float:
    """Survivor SNR: predicted-Real events split by their true labels.

    Events with unknown truth are excluded. Raises EmptyStream when there is
    nothing to score.
    """
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape:
        raise ConfigError(f"label arrays disagree: {truth.shape} vs {predicted.shape}")
    if truth.size == 0:
        raise EmptyStream("no events to score")
    kept = predicted == int(Label.REAL)
    m = int(np.count_nonzero(kept & (truth == int(Label.REAL))))
    n = int(np.count_nonzero(kept & (truth == int(Label.NOISE))))
    return snr_db_from_counts(m, n, factor)


@dataclass(frozen=True)
class ConfusionMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float


def confusion_metrics(truth, predicted) -> ConfusionMetrics:
    """Standard binary metrics with Real as the positive class.

    Events with unknown truth are excluded; empty denominators yield 0.
    """
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    known = truth != int(Label.UNKNOWN)
    truth_real = truth[known] == int(Label.REAL)
    pred_real = predicted[known] == int(Label.REAL)
    tp = int(np.count_nonzero(truth_real & pred_real))
    fp = int(np.count_nonzero(~truth_real & pred_real))
    fn = int(np.count_nonzero(truth_real & ~pred_real))
    tn = int(np.count_nonzero(~truth_real & ~pred_real))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    total = tp + fp + fn + tn
    accuracy = (tp + tn) / total if total else 0.0
    return ConfusionMetrics(precision=precision, recall=recall, f1=f1, accuracy=accuracy)


@dataclass(frozen=True)
class FilterConfig:
    baf_dt_us: float = 2000.0
    radius_px: int = 1
    nnb_count: int = 2
    nnb_dt_us: float = 5000.0
    rp_period_us: float = 500.0

    def __post_init__(self):
        for name in ("baf_dt_us", "radius_px", "nnb_count", "nnb_dt_us", "rp_period_us"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


def baf_filter(stream: EventStream, geometry: SensorGeometry, config: FilterConfig) -> np.ndarray:
    """Real iff an earlier event hit the 8-neighborhood within ``baf_dt_us``.

    Same-timestamp support counts (delta 0 is within any dt); an event never
    supports itself because the map updates after the check.
    """
    last = np.full((geometry.height + 2, geometry.width + 2), -np.inf)
    out = np.full(len(stream), int(Label.NOISE), dtype=np.uint8)
    xs = stream.x + 1
    ys = stream.y + 1
    ts = stream.t
    dt = config.baf_dt_us
    for i in range(len(stream)):
        x = xs[i]
        y = ys[i]
        t = ts[i]
        center = last[y, x]
        last[y, x] = -np.inf
        neighborhood = last[y - 1 : y + 2, x - 1 : x + 2]
        if t - neighborhood.max() <= dt:
            out[i] = int(Label.REAL)
        last[y, x] = max(center, float(t))
    return out


def nnb_filter(stream: EventStream, geometry: SensorGeometry, config: FilterConfig) -> np.ndarray:
    """Real iff >= ``nnb_count`` prior events sit within the spatiotemporal
    box (Chebyshev radius, ``nnb_dt_us``), the event's own pixel included."""
    out = np.full(len(stream), int(Label.NOISE), dtype=np.uint8)
    if config.nnb_count == 0:
        out[:] = int(Label.REAL)
        return out
    history: list[list[int]] = [[] for _ in range(geometry.width * geometry.height)]
    r = config.radius_px
    dt = config.nnb_dt_us
    xs, ys, ts = stream.x, stream.y, stream.t
    for i in range(len(stream)):
        x = int(xs[i])
        y = int(ys[i])
        t = int(ts[i])
        cutoff = t - dt
        count = 0
        for ny in range(max(0, y - r), min(geometry.height, y + r + 1)):
            base = ny * geometry.width
            for nx in range(max(0, x - r), min(geometry.width, x + r + 1)):
                cell = history[base + nx]
                count += len(cell) - bisect_left(cell, cutoff)
                if count >= config.nnb_count:
                    break
            if count >= config.nnb_count:
                break
        if count >= config.nnb_count:
            out[i] = int(Label.REAL)
        history[y * geometry.width + x].append(t)
    return out


def rp_filter(stream: EventStream, geometry: SensorGeometry, config: FilterConfig) -> np.ndarray:
    """Noise iff the same pixel fired within ``rp_period_us`` before."""
    last = np.full((geometry.height, geometry.width), -np.inf)
    out = np.full(len(stream), int(Label.REAL), dtype=np.uint8)
    xs, ys, ts = stream.x, stream.y, stream.t
    period = config.rp_period_us
    for i in range(len(stream)):
        x = xs[i]
        y = ys[i]
        t = ts[i]
        if t - last[y, x] <= period:
            out[i] = int(Label.NOISE)
        last[y, x] = t
    return out


class Denoiser(Protocol):
    name: str

    def events_per_inference(self, stream: EventStream) -> float: ...

    def predict(self, stream: EventStream, geometry: SensorGeometry) -> np.ndarray: ...


@dataclass(frozen=True)
class DenoiseResult:
    """One timed denoising pass: per-event labels plus run accounting."""

    labels: np.ndarray
    wall_time_s: float
    events: int
    inferences: int

    def __post_init__(self):
        if len(self.labels) != self.events:
            raise ConfigError("label count must equal event count")
        if self.wall_time_s < 0:
            raise ConfigError("wall time must be >= 0")


def run_denoiser(
    denoiser: Denoiser, stream: EventStream, geometry: SensorGeometry
) -> DenoiseResult:
    start = time.perf_counter()
    labels = denoiser.predict(stream, geometry)
    elapsed = time.perf_counter() - start
    per_inference = denoiser.events_per_inference(stream)
    inferences = int(math.ceil(len(stream) / per_inference)) if per_inference else 0
    return DenoiseResult(
        labels=labels, wall_time_s=elapsed, events=len(stream), inferences=inferences
    )


@dataclass
class RawDenoiser:
    """Identity baseline: keeps everything (the 'raw data' table row)."""

    name: str = "raw"

    def events_per_inference(self, stream: EventStream) -> float:
        return float(len(stream))

    def predict(self, stream: EventStream, geometry: SensorGeometry) -> np.ndarray:
        return np.full(len(stream), int(Label.REAL), dtype=np.uint8)


@dataclass
class BafDenoiser:
    config: FilterConfig = FilterConfig()
    name: str = "baf"

    def events_per_inference(self, stream: EventStream) -> float:
        return 1.0

    def predict(self, stream: EventStream, geometry: SensorGeometry) -> np.ndarray:
        return baf_filter(stream, geometry, self.config)


@dataclass
class NnbDenoiser:
    config: FilterConfig = FilterConfig()
    name: str = "nnb"

    def events_per_inference(self, stream: EventStream) -> float:
        return 1.0

    def predict(self, stream: EventStream, geometry: SensorGeometry) -> np.ndarray:
        return nnb_filter(stream, geometry, self.config)


@dataclass
class RpDenoiser:
    config: FilterConfig = FilterConfig()
    name: str = "rp"

    def events_per_inference(self, stream: EventStream) -> float:
        return 1.0

    def predict(self, stream: EventStream, geometry: SensorGeometry) -> np.ndarray:
        return rp_filter(stream, geometry, self.config)


@dataclass(frozen=True)
class BenchRow:
    method: str
    events: int
    median_seconds: float
    events_per_second: float
    events_per_inference: float
    snr_db: float  # nan when the stream carries no ground truth
    precision: float
    recall: float


def bench(
    denoiser: Denoiser,
    stream: EventStream,
    geometry: SensorGeometry,
    repetitions: int = 5,
    snr_factor: float = 20.0,
) -> BenchRow:
    """Median-of-repetitions wall time plus label quality for one method."""
    if repetitions < 3:
        raise ConfigError(f"repetitions must be >= 3, got {repetitions}")
    runs = [run_denoiser(denoiser, stream, geometry) for _ in range(repetitions)]
    predictions = runs[-1].labels
    median = float(np.median([r.wall_time_s for r in runs]))
    has_truth = bool(np.any(stream.label != int(Label.UNKNOWN)))
    if has_truth and len(stream):
        score = snr_db(stream.label, predictions, factor=snr_factor)
        quality = confusion_metrics(stream.label, predictions)
        precision, recall = quality.precision, quality.recall
    else:
        score, precision, recall = math.nan, math.nan, math.nan
    return BenchRow(
        method=denoiser.name,
        events=len(stream),
        median_seconds=median,
        events_per_second=len(stream) / median if median > 0 else math.inf,
        events_per_inference=denoiser.events_per_inference(stream),
        snr_db=score,
        precision=precision,
        recall=recall,
    )


BENCH_COLUMNS = (
    "method",
    "events",
    "median_seconds",
    "events_per_second",
    "events_per_inference",
    "SNR_dB",
    "precision",
    "recall",
)


def bench_report_csv(rows: list[BenchRow]) -> str:
    lines = [",".join(BENCH_COLUMNS)]
    for r in rows:
        lines.append(
            f"{r.method},{r.events},{r.median_seconds:.6f},{r.events_per_second:.1f},"
            f"{r.events_per_inference:g},{_fmt(r.snr_db)},{_fmt(r.precision)},{_fmt(r.recall)}"
        )
    return "\n".join(lines) + "\n"


def bench_report_text(rows: list[BenchRow]) -> str:
    header = f"{'method':<10}{'events':>10}{'med_s':>10}{'ev/s':>14}{'ev/inf':>9}{'SNR_dB':>10}{'prec':>8}{'recall':>8}"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.method:<10}{r.events:>10}{r.median_seconds:>10.4f}{r.events_per_second:>14.1f}"
            f"{r.events_per_inference:>9g}{_fmt(r.snr_db):>10}{_fmt(r.precision):>8}{_fmt(r.recall):>8}"
        )
    return "\n".join(lines) + "\n"


def _fmt(value: float) -> str:
    if math.isnan(value):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.4f}"
