"""Synthetic labeled event data: moving-edge scenes plus Poisson noise.

The simulator renders simple bright objects on a dark background at a fixed
internal sampling rate, accumulates the per-pixel log-intensity change
against a reference level, and emits an event every time the accumulation
crosses the comparator threshold (the reference then advances by one
threshold step per crossing, so high-contrast steps can emit several events
spaced uniformly inside the sampling interval). All simulated events are
labeled Real.

Background-activity noise is injected either as a homogeneous per-pixel
Poisson process of rate ``eta`` (events per pixel per second) or, in ratio
mode, as a fixed total count relative to the number of real events. Noise
sampling uses a counter-based generator keyed by (seed, pixel) so a parallel
implementation would reproduce the serial output exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import US_PER_S, EventStream, Label, SensorGeometry, concat_streams
from .errors import ConfigError, DegenerateScene

SCENE_KINDS = ("moving_bar", "moving_disk", "two_objects")


@dataclass(frozen=True)
class SceneSpec:
    """Parametric moving-object scene.

    ``velocity`` is pixels/second per axis; ``start`` positions the object at
    t=0 (bar: leftmost column, disk: center). ``frame_rate`` is the internal
    sampling rate and must keep the per-step displacement at or below one
    pixel so no edge skips a pixel between samples.
    """

    kind: str
    velocity: tuple[float, float] = (40.0, 0.0)
    object_size: int = 16
    contrast: float = 1.5
    duration_us: int = 500_000
    frame_rate: float = 200.0
    start: tuple[float, float] = (0.0, 0.0)
    refractory_us: float = 0.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ConfigError(f"unknown scene kind {self.kind!r}, expected one of {SCENE_KINDS}")
        if self.duration_us <= 0:
            raise ConfigError(f"duration must be > 0 us, got {self.duration_us}")
        if self.frame_rate <= 0:
            raise ConfigError(f"frame_rate must be > 0, got {self.frame_rate}")
        if self.object_size < 1:
            raise ConfigError(f"object_size must be >= 1, got {self.object_size}")
        if self.contrast < 1:
            raise ConfigError(f"contrast must be >= 1, got {self.contrast}")
        if self.refractory_us < 0:
            raise ConfigError(f"refractory_us must be >= 0, got {self.refractory_us}")
        step_px = max(abs(self.velocity[0]), abs(self.velocity[1])) / self.frame_rate
        if step_px > 1.0 + 1e-9:
            raise ConfigError(
                f"per-step displacement {step_px:.3f} px exceeds 1; raise frame_rate"
            )


@dataclass(frozen=True)
class NoiseSpec:
    """Background-activity noise parameters.

    Exactly one regime applies: ``ratio`` (noise count = round(ratio * real
    count), pixels and timestamps uniform) when set, otherwise rate ``eta``.
    """

    eta: float = 0.0
    ratio: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.ratio is not None and self.ratio < 0:
            raise ConfigError(f"ratio must be >= 0, got {self.ratio}")


def render_intensity(scene: SceneSpec, geometry: SensorGeometry, t_s: float) -> np.ndarray:
    """Intensity image at time ``t_s``: background 1.0, objects at ``contrast``.

    Objects are clipped at the sensor borders (no wrap-around), so a bar can
    slide in from off-screen and out again.
    """
    frame = np.ones((geometry.height, geometry.width), dtype=np.float64)
    vx, vy = scene.velocity
    x0, y0 = scene.start
    size = scene.object_size

    def paint_bar(left: float):
        lo = int(math.floor(left))
        hi = lo + size  # columns [lo, hi)
        lo_c = max(lo, 0)
        hi_c = min(hi, geometry.width)
        if lo_c < hi_c:
            frame[:, lo_c:hi_c] = scene.contrast

    def paint_disk(cx: float, cy: float):
        radius = size / 2.0
        xs = np.arange(geometry.width, dtype=np.float64)
        ys = np.arange(geometry.height, dtype=np.float64)
        mask = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2 <= radius**2
        frame[mask] = scene.contrast

    if scene.kind == "moving_bar":
        paint_bar(x0 + vx * t_s)
    elif scene.kind == "moving_disk":
        paint_disk(x0 + vx * t_s, y0 + vy * t_s)
    else:  # two_objects: bar from the left, disk drifting in from the right
        paint_bar(x0 + vx * t_s)
        paint_disk(geometry.width - 1 - x0 - vx * t_s, y0 + vy * t_s)
    return frame


def simulate_events(scene: SceneSpec, geometry: SensorGeometry, seed: int = 0) -> EventStream:
    """Run the threshold-crossing sensor model over the rendered scene.

    Returns a time-sorted stream labeled Real. Raises DegenerateScene when no
    pixel ever accumulates a full threshold crossing (e.g. zero velocity).
    ``seed`` is accepted for interface symmetry; the simulation itself is
    deterministic.
    """
    del seed
    a, b, theta = geometry.gain_a, geometry.offset_b, geometry.threshold_theta
    duration_s = scene.duration_us / US_PER_S
    n_steps = max(1, round(duration_s * scene.frame_rate))
    dt_us = scene.duration_us / n_steps

    ref = np.log(a * render_intensity(scene, geometry, 0.0) + b)
    last_event_us = np.full(ref.shape, -np.inf) if scene.refractory_us > 0 else None
    ts_parts, xs_parts, ys_parts, ps_parts = [], [], [], []

    for step in range(1, n_steps + 1):
        t_s = step * dt_us / US_PER_S
        cur = np.log(a * render_intensity(scene, geometry, t_s) + b)
        omega = cur - ref
        n_cross = np.floor(np.abs(omega) / theta).astype(np.int64)
        if not n_cross.any():
            continue
        sign = np.sign(omega).astype(np.int64)
        ref = ref + sign * theta * n_cross.astype(np.float64)
        t0 = (step - 1) * dt_us
        ys, xs = np.nonzero(n_cross)
        counts = n_cross[ys, xs]
        signs = sign[ys, xs]
        for j in range(1, int(counts.max()) + 1):
            m = counts >= j
            t_event = t0 + j * dt_us / (counts[m].astype(np.float64) + 1.0)
            t_us = np.rint(t_event).astype(np.int64)
            if last_event_us is not None:
                allowed = t_us >= last_event_us[ys[m], xs[m]] + scene.refractory_us
                sel = np.flatnonzero(m)[allowed]
                last_event_us[ys[sel], xs[sel]] = t_us[allowed]
                ts_parts.append(t_us[allowed])
                xs_parts.append(xs[sel])
                ys_parts.append(ys[sel])
                ps_parts.append(signs[sel])
            else:
                ts_parts.append(t_us)
                xs_parts.append(xs[m])
                ys_parts.append(ys[m])
                ps_parts.append(signs[m])

    if not ts_parts or sum(len(t) for t in ts_parts) == 0:
        raise DegenerateScene(f"scene {scene.kind!r} produced no intensity change")

    t = np.concatenate(ts_parts)
    stream = EventStream(
        t,
        np.concatenate(xs_parts),
        np.concatenate(ys_parts),
        np.concatenate(ps_parts),
        np.full(len(t), int(Label.REAL), dtype=np.uint8),
    )
    return stream.time_sorted()


def pixel_rng(seed: int, pixel_index: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, pixel index)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, pixel_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def inject_ba_noise(
    stream: EventStream,
    spec: NoiseSpec,
    geometry: SensorGeometry,
    duration_us: int,
) -> EventStream:
    """Merge background-activity noise into a labeled stream.

    Real events pass through untouched (labels and relative order preserved;
    at equal timestamps real events stay ahead of injected noise). Noise
    timestamps are uniform on [0, duration_us), polarity is uniform +-1, and
    labels are Noise.
    """
    if duration_us <= 0:
        raise ConfigError(f"duration must be > 0 us, got {duration_us}")
    if spec.ratio is not None:
        real_count = int(np.count_nonzero(stream.label != int(Label.NOISE)))
        n_noise = int(round(spec.ratio * real_count))
        rng = np.random.Generator(np.random.Philox(key=np.uint64(spec.seed)))
        xs = rng.integers(0, geometry.width, n_noise)
        ys = rng.integers(0, geometry.height, n_noise)
        ts = rng.integers(0, duration_us, n_noise)
        ps = rng.integers(0, 2, n_noise) * 2 - 1
    else:
        if spec.eta == 0.0:
            return stream
        lam = spec.eta * duration_us / US_PER_S
        xs_l, ys_l, ts_l, ps_l = [], [], [], []
        for pix in range(geometry.width * geometry.height):
            rng = pixel_rng(spec.seed, pix)
            count = int(rng.poisson(lam))
            if count == 0:
                continue
            ts_l.append(rng.integers(0, duration_us, count))
            ps_l.append(rng.integers(0, 2, count) * 2 - 1)
            xs_l.append(np.full(count, pix % geometry.width, dtype=np.int64))
            ys_l.append(np.full(count, pix // geometry.width, dtype=np.int64))
        if not ts_l:
            return stream
        ts = np.concatenate(ts_l)
        xs = np.concatenate(xs_l)
        ys = np.concatenate(ys_l)
        ps = np.concatenate(ps_l)

    noise = EventStream(ts, xs, ys, ps, np.full(len(ts), int(Label.NOISE), dtype=np.uint8))
    return concat_streams([stream, noise]).time_sorted()


def poisson_count_pmf(n: int, eta: float, t: float) -> float:
    """Probability of ``n`` noise events in ``t`` seconds at rate ``eta``/s."""
    if eta < 0 or t < 0:
        raise ConfigError("eta and t must be >= 0")
    if n < 0:
        raise ConfigError(f"count must be >= 0, got {n}")
    lam = eta * t
    if lam == 0.0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(lam) - lam - math.lgamma(n + 1))
