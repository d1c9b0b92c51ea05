"""Bone Events Check: frame projection, 4-connected domain labeling, flags.

A window is compressed into a binary occupancy frame (a pixel is occupied
when at least one event hit it, polarity ignored). Occupied pixels are
grouped into 4-connected domains with a two-pass union-find restricted to
the occupied pixels, and an event is a "bone event" when its domain covers
at least ``tau`` pixels. Bone events are the only ones eligible to seed
centroid sampling downstream; isolated firings are still classified, they
just cannot anchor a neighborhood.

Domain ids are dense 1..n and assigned by raster order of each domain's
first pixel, so the labeling is deterministic and order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import union_find_components
from .core import EventStream, SensorGeometry


@dataclass(frozen=True)
class BinaryFrame:
    """Occupancy grid of one window, shape (height, width)."""

    occupancy: np.ndarray

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]


@dataclass(frozen=True)
class DomainLabeling:
    """Per-pixel component ids (0 = background) and per-id pixel counts."""

    label_of: np.ndarray  # (height, width) int32
    size_of: np.ndarray  # (n_components + 1,), size_of[0] == 0

    @property
    def n_components(self) -> int:
        return len(self.size_of) - 1


def project_frame(events: EventStream, geometry: SensorGeometry) -> BinaryFrame:
    """Occupancy frame: pixel set iff it received at least one event."""
    occ = np.zeros((geometry.height, geometry.width), dtype=bool)
    occ[events.y, events.x] = True
    return BinaryFrame(occupancy=occ)


def label_connected_domains(frame: BinaryFrame) -> DomainLabeling:
    """4-connectivity components of the occupied pixels.

    Union-find runs over occupied pixels only (two edge sets: left and up
    neighbors), so cost scales with occupancy rather than the full frame.
    """
    occ = frame.occupancy
    ys, xs = np.nonzero(occ)  # raster order
    n = len(ys)
    label_of = np.zeros(occ.shape, dtype=np.int32)
    if n == 0:
        return DomainLabeling(label_of=label_of, size_of=np.zeros(1, dtype=np.int64))

    node_of = np.full(occ.shape, -1, dtype=np.int64)
    node_of[ys, xs] = np.arange(n)
    roots = union_find_components(
        np.ascontiguousarray(ys), np.ascontiguousarray(xs), node_of, occ
    )
    # Unions always keep the smaller node index as root, so a component's
    # root is its first raster-order node; ascending root order therefore is
    # raster-first order and np.unique yields dense ids directly.
    uniq, inverse = np.unique(roots, return_inverse=True)
    ids = (inverse + 1).astype(np.int32)
    label_of[ys, xs] = ids
    size_of = np.bincount(ids, minlength=len(uniq) + 1).astype(np.int64)
    size_of[0] = 0
    return DomainLabeling(label_of=label_of, size_of=size_of)


def mark_bone_events(events: EventStream, labeling: DomainLabeling, tau: float = 2) -> np.ndarray:
    """Boolean flag per event: its pixel's domain covers >= tau pixels.

    Domain size counts pixels, not events, so a pile of events on one
    isolated pixel is still below the default tau of 2.
    """
    component = labeling.label_of[events.y, events.x]
    return labeling.size_of[component] >= tau
