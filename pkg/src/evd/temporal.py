"""Temporal Window filter: Gaussian timestamp weighting and adaptive cutoff.

A window's timestamps get a discrete Gaussian weight centered on the mean
timestamp and normalized over the window, so the weights sum to one. The
filter keeps events whose deviation from the mean is within ``t_lim``; the
two formulations (weight threshold vs. absolute deviation) select identical
sets because the Gaussian decays monotonically away from the mean.

The adaptive cutoff divides the window span by the number of transient
movements it plausibly contains, assuming ``L`` events per movement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import EventStream, EventWindow
from .errors import ConfigError, ZeroVariance


@dataclass(frozen=True)
class TemporalStats:
    """Mean/stddev/extremes of a window's timestamps."""

    t_mu: float
    sigma: float
    t_min: int
    t_max: int
    count_m: int

    @classmethod
    def from_timestamps(cls, timestamps) -> "TemporalStats":
        ts = np.asarray(timestamps, dtype=np.float64)
        if ts.size == 0:
            raise ConfigError("cannot compute temporal stats of an empty window")
        return cls(
            t_mu=float(ts.mean()),
            sigma=float(ts.std()),
            t_min=int(ts.min()),
            t_max=int(ts.max()),
            count_m=int(ts.size),
        )

    @classmethod
    def from_window(cls, window: EventWindow) -> "TemporalStats":
        return cls.from_timestamps(window.events.t)


@dataclass(frozen=True)
class TwConfig:
    """``events_per_movement`` is L; ``explicit_t_lim`` overrides adaptation."""

    events_per_movement: int = 500
    explicit_t_lim: Optional[float] = None

    def __post_init__(self):
        if self.events_per_movement < 1:
            raise ConfigError(f"L must be >= 1, got {self.events_per_movement}")
        if self.explicit_t_lim is not None and self.explicit_t_lim < 0:
            raise ConfigError(f"explicit t_lim must be >= 0, got {self.explicit_t_lim}")


def temporal_probabilities(timestamps, stats: TemporalStats) -> np.ndarray:
    """Normalized Gaussian weight of every timestamp in the window.

    Duplicate timestamps each contribute their own term to the normalizer.
    Raises ZeroVariance when all timestamps coincide; callers that want the
    sigma=0 convention (uniform 1/M, keep everything) handle it themselves.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    if stats.sigma == 0.0:
        raise ZeroVariance("all timestamps equal; Gaussian weight undefined")
    z = np.exp(-((ts - stats.t_mu) ** 2) / (2.0 * stats.sigma**2))
    return z / z.sum()


def temporal_probability(t: float, stats: TemporalStats, timestamps) -> float:
    """Gaussian weight of one timestamp, normalized over the window."""
    ts = np.asarray(timestamps, dtype=np.float64)
    if stats.sigma == 0.0:
        raise ZeroVariance("all timestamps equal; Gaussian weight undefined")
    z = np.exp(-((ts - stats.t_mu) ** 2) / (2.0 * stats.sigma**2))
    num = np.exp(-((float(t) - stats.t_mu) ** 2) / (2.0 * stats.sigma**2))
    return float(num / z.sum())


def adaptive_t_lim(stats: TemporalStats, config: TwConfig) -> float:
    """Window span divided by the movement count floor(M / L).

    Falls back to the full span when the window holds fewer than L events
    (the filter then passes everything); an explicit override wins.
    """
    if config.explicit_t_lim is not None:
        return float(config.explicit_t_lim)
    span = float(stats.t_max - stats.t_min)
    k = stats.count_m // config.events_per_movement
    return span / k if k >= 1 else span


def tw_filter(window: EventWindow, t_lim: float) -> tuple[EventStream, EventStream]:
    """Split a window into (kept, dropped) by |t - t_mu| <= t_lim.

    The boundary is inclusive and order is preserved in both outputs; when
    all timestamps coincide every deviation is zero and everything is kept.
    """
    if len(window.events) == 0:
        raise ConfigError("cannot filter an empty window")
    dev = np.abs(window.events.t.astype(np.float64) - window.t_mu)
    keep = dev <= t_lim
    return window.events.take(keep), window.events.take(~keep)
