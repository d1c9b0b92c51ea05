"""Spatiotemporal geometry for the hierarchical feature levels.

Events are normalized to the unit cube (pixel coordinates divided by
dimension-1, timestamps affinely mapped from the window's [t_min, t_max]) so
space and time become commensurate; all distances here are Euclidean over
the normalized (nx, ny, nt) triple, with polarity carried along as a fourth
channel that never enters a distance.

Provides farthest-event sampling restricted to an eligibility mask (bone
events), fixed-size radius grouping with self-padding, the relative-offset
transform, and 3-nearest inverse-distance-squared interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import ball_select, fps_select, knn_select
from .core import EventWindow, SensorGeometry
from .errors import ConfigError, NoEligibleEvents

MAX_RADIUS = float(np.sqrt(3.0))  # diagonal of the normalized cube


def _coords(points: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(points, dtype=np.float64)[:, :3])


@dataclass(frozen=True)
class LevelSpec:
    """One abstraction level: centroid count, group size, radius, channels."""

    centroids: int
    group_size: int
    radius: float
    channels: int

    def __post_init__(self):
        if self.centroids < 1:
            raise ConfigError(f"centroids must be >= 1, got {self.centroids}")
        if self.group_size < 1:
            raise ConfigError(f"group_size must be >= 1, got {self.group_size}")
        if not (0.0 < self.radius <= MAX_RADIUS):
            raise ConfigError(f"radius must be in (0, sqrt(3)], got {self.radius}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")


def normalize_coords(window: EventWindow, geometry: SensorGeometry) -> np.ndarray:
    """Map a window's events to (nx, ny, nt, p) rows in [0,1]^3 x {-1,+1}.

    Degenerate axes (single-pixel dimension or zero time span) map to 0.5.
    """
    ev = window.events
    out = np.empty((len(ev), 4), dtype=np.float64)
    for col, values, extent in ((0, ev.x, geometry.width - 1), (1, ev.y, geometry.height - 1)):
        if extent > 0:
            out[:, col] = values / extent
        else:
            out[:, col] = 0.5
    span = window.t_max - window.t_min
    if span > 0:
        out[:, 2] = (ev.t - window.t_min) / span
    else:
        out[:, 2] = 0.5
    out[:, 3] = ev.p
    return out


def denormalize_coords(
    points: np.ndarray, geometry: SensorGeometry, window: EventWindow
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Invert normalize_coords back to integer (x, y, t)."""
    x = np.rint(points[:, 0] * (geometry.width - 1)).astype(np.int64)
    y = np.rint(points[:, 1] * (geometry.height - 1)).astype(np.int64)
    t = np.rint(window.t_min + points[:, 2] * (window.t_max - window.t_min)).astype(np.int64)
    return x, y, t


def farthest_event_sampling(
    points: np.ndarray,
    count: int,
    eligible: np.ndarray | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Pick ``count`` centroid indices by farthest-first traversal.

    The first centroid is the eligible point of smallest index (``seed`` is
    accepted for signature stability but the start rule is deterministic);
    each further pick maximizes the minimum distance to the chosen set over
    the remaining eligible points, lowest index winning ties. When fewer
    eligible points exist than requested, the chosen set is cycled to pad.
    """
    del seed
    if count < 1:
        raise ConfigError(f"centroid count must be >= 1, got {count}")
    coords = _coords(points)
    n = len(coords)
    if eligible is None:
        eligible = np.ones(n, dtype=bool)
    else:
        eligible = np.asarray(eligible, dtype=bool)
    elig_idx = np.flatnonzero(eligible)
    if elig_idx.size == 0:
        raise NoEligibleEvents("no eligible events to seed sampling")

    cand = np.ascontiguousarray(coords[elig_idx])  # (m, 3)
    n_pick = min(count, len(cand))
    chosen = fps_select(cand, 0, n_pick)  # start at the smallest eligible index
    result = elig_idx[chosen]
    if count > n_pick:
        result = result[np.arange(count) % n_pick]
    return result


def ball_group(
    points: np.ndarray, centroid_idx: np.ndarray, radius: float, group_size: int
) -> np.ndarray:
    """Index grid (T, K): the K nearest points within ``radius`` per centroid.

    Members are ordered nearest-first with ascending-index tie-break (the
    centroid itself sits at distance zero); slots beyond the in-radius count
    repeat the centroid's own index.
    """
    coords = _coords(points)
    centroid_idx = np.ascontiguousarray(centroid_idx, dtype=np.int64)
    return ball_select(coords, centroid_idx, radius * radius, int(group_size))


def relative_transform(
    points: np.ndarray, grid: np.ndarray, centroid_idx: np.ndarray
) -> np.ndarray:
    """Grouped features (T, K, 4): member minus centroid on (nx, ny, nt), plus
    the member's own polarity in the last channel."""
    points = np.asarray(points)
    member = points[grid]  # (T, K, 4)
    rel = member.copy()
    rel[:, :, :3] -= points[np.asarray(centroid_idx, dtype=np.int64)][:, None, :3]
    return rel


def idw_weights(
    targets: np.ndarray, sources: np.ndarray, k: int = 3
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and normalized 1/d^2 weights of the k nearest sources.

    Weights are computed in float64 and sum to one per target; a target that
    coincides with a source short-circuits to weight one on the nearest
    (lowest-index) coincident source.
    """
    tc = _coords(targets)
    sc = _coords(sources)
    if len(sc) == 0:
        raise ConfigError("need at least one source for interpolation")
    k = min(k, len(sc))
    idx, near = knn_select(tc, sc, k)
    exact = near[:, 0] == 0.0
    with np.errstate(divide="ignore"):
        w = 1.0 / near
    if np.any(exact):
        w[exact] = 0.0
        w[exact, 0] = 1.0
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def idw_interpolate(
    targets: np.ndarray, sources: np.ndarray, source_features: np.ndarray
) -> np.ndarray:
    """Interpolate per-source features onto targets (3-nearest, 1/d^2)."""
    idx, w = idw_weights(targets, sources)
    feats = np.asarray(source_features)
    return np.einsum("tk,tkd->td", w.astype(feats.dtype, copy=False), feats[idx])
