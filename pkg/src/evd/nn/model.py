"""Window-classifier assembly: parameters, shape algebra, forward, backward.

The network runs a pyramid of abstraction levels (farthest-event sampling,
radius grouping, relative transform, sparse-coding embedding, sum pooling)
followed by the mirrored propagation levels (3-nearest inverse-distance
interpolation, skip concatenation, pointwise decode) and a per-event affine
head; a positive logit means predicted Real.

Geometry is separated into a WindowPlan: sampling indices, group grids,
relative offsets, and interpolation weights depend only on the window's
coordinates, never on parameters, so a plan can be built once per window and
reused across training epochs. Gradients flow through feature values only;
all discrete selections are constants of the plan.

Every parameter block's shape is derived from the level list up front and
validated at construction, so malformed level stacks fail before any
arithmetic runs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import EventWindow, SensorGeometry
from ..errors import ConfigError, ShapeMismatch
from ..geometry import (
    LevelSpec,
    ball_group,
    farthest_event_sampling,
    idw_weights,
    normalize_coords,
    relative_transform,
)
from .layers import (
    ConvParams,
    LevelView,
    bce_with_logits,
    sfe_backward,
    sfe_forward_cached,
    ssfe_backward,
    ssfe_forward_cached,
    sum_pool,
    sum_pool_backward,
)

RAW_CHANNELS = 4  # (nx, ny, nt, p)

DESK_LEVELS = [
    LevelSpec(256, 16, 0.05, 8),
    LevelSpec(64, 8, 0.1, 16),
    LevelSpec(16, 8, 0.2, 32),
    LevelSpec(8, 4, 0.4, 64),
]
FULL_LEVELS = [
    LevelSpec(2048, 64, 0.05, 8),
    LevelSpec(512, 32, 0.1, 16),
    LevelSpec(64, 16, 0.2, 32),
    LevelSpec(16, 8, 0.4, 64),
]
TINY_LEVELS = [
    LevelSpec(8, 4, 0.3, 3),
    LevelSpec(4, 2, 0.6, 3),
]


@dataclass(frozen=True)
class LcscHyperParams:
    """Sparse-coding hyperparameters.

    ``iterations`` is the unrolled update count (default 1). The remaining
    fields document the prior scales whose ratio would set a fixed threshold
    (sigma_n^2 / beta); the per-channel threshold is learned instead, so they
    only seed its initial value.
    """

    iterations: int = 1
    sigma_n: float = 0.1
    beta: float = 1.0
    gamma_shape: float = 1.0
    p_exponent: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")

    @property
    def initial_threshold(self) -> float:
        return self.sigma_n**2 / self.beta


def kernel_width(group_size: int) -> int:
    """Neighbor-axis kernel width: 3 when the group can carry it, else 1."""
    return 3 if group_size >= 3 else 1


def level_in_channels(i: int, levels: list[LevelSpec]) -> int:
    return RAW_CHANNELS if i == 0 else RAW_CHANNELS + levels[i - 1].channels


def prop_out_channels(j: int, levels: list[LevelSpec]) -> int:
    # decode widths mirror the skip hierarchy, doubled: per-event decisions
    # need more width than the abstraction side's narrow early levels
    n = len(levels)
    return 2 * (levels[n - 2 - j].channels if j <= n - 2 else levels[0].channels)


def prop_src_channels(j: int, levels: list[LevelSpec]) -> int:
    return levels[-1].channels if j == 0 else prop_out_channels(j - 1, levels)


def prop_skip_channels(j: int, levels: list[LevelSpec]) -> int:
    n = len(levels)
    return levels[n - 2 - j].channels if j <= n - 2 else RAW_CHANNELS


def expected_shapes(levels: list[LevelSpec]) -> dict[str, tuple[int, ...]]:
    """Every parameter block's shape, in closed form from the level list."""
    if not levels:
        raise ConfigError("need at least one level")
    shapes: dict[str, tuple[int, ...]] = {}
    for i, spec in enumerate(levels):
        width = kernel_width(spec.group_size)
        c_in = level_in_channels(i, levels)
        d = spec.channels
        shapes[f"sa{i}.init.weight"] = (width, c_in, d)
        shapes[f"sa{i}.init.bias"] = (d,)
        shapes[f"sa{i}.w.weight"] = (width, c_in, d)
        shapes[f"sa{i}.w.bias"] = (d,)
        shapes[f"sa{i}.q.weight"] = (width, d, c_in)
        shapes[f"sa{i}.q.bias"] = (c_in,)
        shapes[f"sa{i}.soft"] = (d,)
    for j in range(len(levels)):
        c_in = prop_src_channels(j, levels) + prop_skip_channels(j, levels)
        c_out = prop_out_channels(j, levels)
        shapes[f"fp{j}.decode.weight"] = (1, c_in, c_out)
        shapes[f"fp{j}.decode.bias"] = (c_out,)
    shapes["fc.weight"] = (prop_out_channels(len(levels) - 1, levels),)
    shapes["fc.bias"] = (1,)
    return shapes


class ModelParams:
    """All learnable blocks plus the level specs they are shaped by."""

    def __init__(
        self,
        levels: list[LevelSpec],
        blocks: dict[str, np.ndarray],
        iterations: int = 1,
        window_size: int = 4096,
        version: int = 1,
    ):
        expect = expected_shapes(levels)
        if set(blocks) != set(expect):
            missing = sorted(set(expect) - set(blocks))
            extra = sorted(set(blocks) - set(expect))
            raise ShapeMismatch(f"block names mismatch; missing={missing} extra={extra}")
        for name, shape in expect.items():
            if blocks[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {blocks[name].shape}, expected {shape}")
        for i in range(len(levels)):
            if np.any(blocks[f"sa{i}.soft"] < 0):
                raise ShapeMismatch(f"sa{i}.soft must be >= 0")
        if iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {iterations}")
        self.levels = list(levels)
        self.blocks = blocks
        self.iterations = int(iterations)
        self.window_size = int(window_size)
        self.version = int(version)

    @property
    def dtype(self) -> np.dtype:
        return self.blocks["fc.weight"].dtype

    @classmethod
    def initialize(
        cls,
        levels: list[LevelSpec],
        hyper: Optional[LcscHyperParams] = None,
        seed: int = 0,
        dtype=np.float32,
        window_size: int = 4096,
    ) -> "ModelParams":
        """He-scaled init for the rectified embeddings, small symmetric init
        for the iteration maps, hyper-seeded soft thresholds, zero biases."""
        hyper = hyper or LcscHyperParams()
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        blocks: dict[str, np.ndarray] = {}
        for name, shape in expected_shapes(levels).items():
            if name.endswith(".bias"):
                blocks[name] = np.zeros(shape, dtype=dtype)
            elif name.endswith(".soft"):
                blocks[name] = np.full(shape, hyper.initial_threshold, dtype=dtype)
            elif name == "fc.weight":
                std = np.sqrt(1.0 / shape[0])
                blocks[name] = (rng.standard_normal(shape) * std).astype(dtype)
            else:
                width, c_in, _ = shape
                fan_in = width * c_in
                std = np.sqrt(2.0 / fan_in)
                if ".w." in name or ".q." in name:
                    std = 0.5 * np.sqrt(1.0 / fan_in)
                if name.startswith("sa"):
                    # sum pooling over K correlated neighbor responses scales
                    # features by ~K; shrink every map feeding the pooled
                    # code (embedding and iteration alike) to compensate
                    level_index = int(name[2:].split(".", 1)[0])
                    std /= levels[level_index].group_size
                blocks[name] = (rng.standard_normal(shape) * std).astype(dtype)
        return cls(
            levels, blocks, iterations=hyper.iterations, window_size=window_size
        )

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(
            self.levels,
            {k: v.astype(dtype) for k, v in self.blocks.items()},
            iterations=self.iterations,
            window_size=self.window_size,
            version=self.version,
        )

    def copy(self) -> "ModelParams":
        return self.astype(self.dtype)

    def checksum(self) -> int:
        """CRC32 over the canonical little-endian f32 serialization."""
        crc = zlib.crc32(b"WEDN" + np.uint32(self.version).tobytes())
        for name in sorted(self.blocks):
            crc = zlib.crc32(name.encode(), crc)
            crc = zlib.crc32(
                np.ascontiguousarray(self.blocks[name], dtype="<f4").tobytes(), crc
            )
        return crc

    def level_view(self, i: int) -> LevelView:
        b = self.blocks
        return LevelView(
            init=ConvParams(b[f"sa{i}.init.weight"], b[f"sa{i}.init.bias"]),
            w=ConvParams(b[f"sa{i}.w.weight"], b[f"sa{i}.w.bias"]),
            q=ConvParams(b[f"sa{i}.q.weight"], b[f"sa{i}.q.bias"]),
            soft=b[f"sa{i}.soft"],
        )

    def prop_view(self, j: int) -> ConvParams:
        return ConvParams(
            self.blocks[f"fp{j}.decode.weight"], self.blocks[f"fp{j}.decode.bias"]
        )

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.blocks.items()}


# ---------------------------------------------------------------------------
# Geometry plan
# ---------------------------------------------------------------------------


@dataclass
class WindowPlan:
    """Parameter-independent geometry of one window's forward pass."""

    points: np.ndarray  # (N, 4) normalized
    centroid_idx: list[np.ndarray]
    groups: list[np.ndarray]
    rel: list[np.ndarray]
    prop_idx: list[np.ndarray]
    prop_w: list[np.ndarray]

    @property
    def n_events(self) -> int:
        return len(self.points)


def plan_level(points: np.ndarray, spec: LevelSpec, eligible: np.ndarray | None):
    """Sampling, grouping, and relative transform of one level."""
    centroid_idx = farthest_event_sampling(points, spec.centroids, eligible)
    groups = ball_group(points, centroid_idx, spec.radius, spec.group_size)
    rel = relative_transform(points, groups, centroid_idx)
    return centroid_idx, groups, rel, points[centroid_idx]


def build_plan(
    points: np.ndarray, bone_flags: np.ndarray | None, levels: list[LevelSpec]
) -> WindowPlan:
    """Precompute every index grid and interpolation weight for one window.

    Bone flags gate the first sampling only; if no event is a bone event the
    whole window stays eligible so degenerate all-noise windows still run.
    """
    if len(points) == 0:
        raise ConfigError("cannot plan an empty window")
    eligible = None
    if bone_flags is not None and np.any(bone_flags):
        eligible = np.asarray(bone_flags, dtype=bool)
    level_points = [np.asarray(points, dtype=np.float64)]
    centroid_idx, groups, rel = [], [], []
    cur = level_points[0]
    for i, spec in enumerate(levels):
        c_idx, grid, r, cur = plan_level(cur, spec, eligible if i == 0 else None)
        centroid_idx.append(c_idx)
        groups.append(grid)
        rel.append(r)
        level_points.append(cur)
    prop_idx, prop_w = [], []
    n = len(levels)
    for j in range(n):
        targets = level_points[n - 1 - j]
        sources = level_points[n - j]
        idx, w = idw_weights(targets, sources)
        prop_idx.append(idx)
        prop_w.append(w)
    return WindowPlan(
        points=level_points[0],
        centroid_idx=centroid_idx,
        groups=groups,
        rel=rel,
        prop_idx=prop_idx,
        prop_w=prop_w,
    )


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def set_abstraction_level(
    points: np.ndarray,
    features: np.ndarray | None,
    spec: LevelSpec,
    bone_flags: np.ndarray | None,
    level: LevelView,
    iterations: int = 1,
):
    """One full abstraction level: sample, group, embed, pool.

    Returns (centroid points, centroid features). ``features`` carries the
    previous level's output and is gathered into the groups alongside the
    relative offsets; at the first level it is None.
    """
    eligible = None
    if bone_flags is not None and np.any(bone_flags):
        eligible = np.asarray(bone_flags, dtype=bool)
    _, groups, rel, centroid_points = plan_level(points, spec, eligible)
    if features is None:
        s = rel
    else:
        s = np.concatenate([rel.astype(features.dtype), features[groups]], axis=2)
    e, _ = ssfe_forward_cached(s, level, iterations)
    return centroid_points, sum_pool(e)


def feature_propagation_level(
    targets: np.ndarray,
    sources: np.ndarray,
    source_features: np.ndarray,
    skip_features: np.ndarray,
    decode: ConvParams,
):
    """Interpolate source features onto targets, concat skips, decode."""
    idx, w = idw_weights(targets, sources)
    interp = np.einsum(
        "tk,tkd->td", w.astype(source_features.dtype, copy=False), source_features[idx]
    )
    cat = np.concatenate([interp, skip_features], axis=1)
    out, _ = sfe_forward_cached(cat[:, None, :], decode, rectify=True)
    return out[:, 0, :]


def forward_from_plan(plan: WindowPlan, params: ModelParams, with_cache: bool = False):
    """Per-event logits from a prepared plan; logit > 0 means predicted Real."""
    dtype = params.dtype
    levels = params.levels
    n = len(levels)
    pts = plan.points.astype(dtype)

    sa_caches, sa_feats = [], []
    feats = None
    for i in range(n):
        rel = plan.rel[i].astype(dtype)
        s = rel if feats is None else np.concatenate([rel, feats[plan.groups[i]]], axis=2)
        e, cache = ssfe_forward_cached(s, params.level_view(i), params.iterations)
        feats = sum_pool(e)
        sa_caches.append((cache, e.shape[1]))
        sa_feats.append(feats)

    prop_caches = []
    cur = sa_feats[-1]
    for j in range(n):
        w = plan.prop_w[j].astype(dtype)
        interp = np.einsum("tk,tkd->td", w, cur[plan.prop_idx[j]])
        skip = sa_feats[n - 2 - j] if j <= n - 2 else pts
        cat = np.concatenate([interp, skip], axis=1)
        out, cache = sfe_forward_cached(cat[:, None, :], params.prop_view(j), rectify=True)
        prop_caches.append((cache, interp.shape[1], len(cur)))
        cur = out[:, 0, :]

    logits = cur @ params.blocks["fc.weight"] + params.blocks["fc.bias"][0]
    if not with_cache:
        return logits
    return logits, {
        "sa_caches": sa_caches,
        "prop_caches": prop_caches,
        "head_in": cur,
    }


def backward_from_plan(
    plan: WindowPlan, params: ModelParams, cache, dlogits: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of the forward pass w.r.t. every block.

    Sampling indices, group grids, interpolation neighbors, and bone flags
    are plan constants; gradients flow through feature values only.
    """
    levels = params.levels
    n = len(levels)
    dtype = params.dtype
    grads = params.zero_grads()

    head_in = cache["head_in"]
    dlogits = dlogits.astype(dtype)
    grads["fc.weight"] += dlogits @ head_in
    grads["fc.bias"] += dlogits.sum()
    dcur = np.outer(dlogits, params.blocks["fc.weight"])

    d_sa = [None] * n  # gradient buffers for abstraction-level outputs

    def _accumulate(buffer_idx: int, value: np.ndarray):
        if d_sa[buffer_idx] is None:
            d_sa[buffer_idx] = value.copy()
        else:
            d_sa[buffer_idx] += value

    for j in reversed(range(n)):
        conv_cache, src_channels, n_sources = cache["prop_caches"][j]
        dout = dcur[:, None, :]
        dcat, dweight, dbias = sfe_backward(params.prop_view(j), conv_cache, dout)
        grads[f"fp{j}.decode.weight"] += dweight
        grads[f"fp{j}.decode.bias"] += dbias
        dcat = dcat[:, 0, :]
        dinterp = dcat[:, :src_channels]
        dskip = dcat[:, src_channels:]
        if j <= n - 2:
            _accumulate(n - 2 - j, dskip)
        # else: skip was the raw coordinate block, a plan constant
        dsrc = np.zeros((n_sources, src_channels), dtype=dtype)
        w = plan.prop_w[j].astype(dtype)
        np.add.at(dsrc, plan.prop_idx[j], w[:, :, None] * dinterp[:, None, :])
        if j == 0:
            _accumulate(n - 1, dsrc)
        else:
            dcur = dsrc

    for i in reversed(range(n)):
        ssfe_cache, k = cache["sa_caches"][i]
        de = sum_pool_backward(k, d_sa[i])
        ds, level_grads = ssfe_backward(params.level_view(i), ssfe_cache, de)
        for key, value in level_grads.items():
            grads[f"sa{i}.{key}"] += value
        if i > 0:
            d_feats = ds[:, :, RAW_CHANNELS:]
            buf = np.zeros((len(plan.rel[i - 1]), d_feats.shape[2]), dtype=dtype)
            np.add.at(
                buf,
                plan.groups[i].ravel(),
                d_feats.reshape(-1, d_feats.shape[2]),
            )
            _accumulate(i - 1, buf)
    return grads


def loss_and_gradients(
    plan: WindowPlan,
    params: ModelParams,
    is_real: np.ndarray,
    balanced: bool = True,
):
    """Forward + loss + full backward for one window."""
    logits, cache = forward_from_plan(plan, params, with_cache=True)
    loss, dlogits = bce_with_logits(logits, is_real, balanced)
    grads = backward_from_plan(plan, params, cache, dlogits)
    return loss, grads, logits


def wednet_forward(
    window: EventWindow,
    geometry: SensorGeometry,
    bone_flags: np.ndarray | None,
    params: ModelParams,
) -> np.ndarray:
    """Logits for every event of an already filtered-and-flagged window."""
    points = normalize_coords(window, geometry)
    plan = build_plan(points, bone_flags, params.levels)
    return forward_from_plan(plan, params)


def merge_plans(plans: list[WindowPlan], levels: list[LevelSpec]) -> WindowPlan:
    """Stack window plans block-diagonally so one forward covers them all.

    Every index grid is offset into the concatenated point/centroid arrays;
    the per-window math is unchanged, only the numpy dispatch overhead is
    amortized. Levels have a fixed centroid count, so offsets are uniform.
    """
    if len(plans) == 1:
        return plans[0]
    n = len(levels)
    event_offsets = np.cumsum([0] + [p.n_events for p in plans])
    points = np.concatenate([p.points for p in plans])
    centroid_idx, groups, rel = [], [], []
    for i in range(n):
        # groups at level i index the previous level's points
        src_offsets = (
            event_offsets[:-1]
            if i == 0
            else np.arange(len(plans)) * levels[i - 1].centroids
        )
        centroid_idx.append(
            np.concatenate([p.centroid_idx[i] + off for p, off in zip(plans, src_offsets)])
        )
        groups.append(
            np.concatenate([p.groups[i] + off for p, off in zip(plans, src_offsets)])
        )
        rel.append(np.concatenate([p.rel[i] for p in plans]))
    prop_idx, prop_w = [], []
    for j in range(n):
        # propagation j interpolates from the points of level n - j
        src_offsets = np.arange(len(plans)) * levels[n - 1 - j].centroids
        prop_idx.append(
            np.concatenate([p.prop_idx[j] + off for p, off in zip(plans, src_offsets)])
        )
        prop_w.append(np.concatenate([p.prop_w[j] for p in plans]))
    return WindowPlan(
        points=points,
        centroid_idx=centroid_idx,
        groups=groups,
        rel=rel,
        prop_idx=prop_idx,
        prop_w=prop_w,
    )
