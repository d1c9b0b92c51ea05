"""Shared helpers: random streams, windows, and small oracles."""

import numpy as np
import pytest

from evd.core import EventStream, EventWindow, Label, SensorGeometry, partition_windows


def random_stream(rng, n, width=64, height=48, t_max=1_000_000, labeled=False):
    """Time-sorted random stream; labels drawn from {Real, Noise} if asked."""
    t = np.sort(rng.integers(0, t_max, n))
    labels = None
    if labeled:
        labels = rng.choice(
            [int(Label.REAL), int(Label.NOISE)], size=n
        ).astype(np.uint8)
    return EventStream(
        t,
        rng.integers(0, width, n),
        rng.integers(0, height, n),
        rng.integers(0, 2, n) * 2 - 1,
        labels,
    )


def random_window(rng, n, **kwargs) -> EventWindow:
    stream = random_stream(rng, n, **kwargs)
    (window,) = partition_windows(stream, max(n, 1))
    return window


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def geometry():
    return SensorGeometry(width=64, height=48)
