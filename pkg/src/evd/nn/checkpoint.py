"""Checkpoint serialization.

Layout (little-endian): magic ``WEDN``, u32 version, then one record per
block in sorted name order — u32 name length, UTF-8 name, u32 rank,
u32 dims[rank], f32 values — and a trailing CRC32 of everything before it.
Level specs, the iteration count, and the window size ride along as
``meta.*`` blocks so a checkpoint is self-describing.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import CorruptCheckpoint, MagicMismatch, ParseError, TruncatedFile
from ..geometry import LevelSpec
from .model import ModelParams

MAGIC = b"WEDN"
VERSION = 1
_U32 = struct.Struct("<I")


def _meta_blocks(params: ModelParams) -> dict[str, np.ndarray]:
    return {
        "meta.level_centroids": np.array([s.centroids for s in params.levels], dtype=np.float32),
        "meta.level_group_sizes": np.array([s.group_size for s in params.levels], dtype=np.float32),
        "meta.level_radii": np.array([s.radius for s in params.levels], dtype=np.float32),
        "meta.level_channels": np.array([s.channels for s in params.levels], dtype=np.float32),
        "meta.iterations": np.array([params.iterations], dtype=np.float32),
        "meta.window_size": np.array([params.window_size], dtype=np.float32),
    }


def save_checkpoint(path, params: ModelParams) -> None:
    blocks = dict(params.blocks)
    blocks.update(_meta_blocks(params))
    parts = [MAGIC, _U32.pack(VERSION)]
    for name in sorted(blocks):
        data = np.ascontiguousarray(blocks[name], dtype="<f4")
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(data.ndim))
        for dim in data.shape:
            parts.append(_U32.pack(dim))
        parts.append(data.tobytes())
    payload = b"".join(parts)
    Path(path).write_bytes(payload + _U32.pack(zlib.crc32(payload)))


def load_checkpoint(path, dtype=np.float32) -> ModelParams:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + _U32.size * 2:
        raise TruncatedFile(f"{path}: too short for a checkpoint")
    if blob[:4] != MAGIC:
        raise MagicMismatch(f"{path}: magic {blob[:4]!r} != {MAGIC!r}")
    stored_crc = _U32.unpack_from(blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CorruptCheckpoint(f"{path}: CRC32 mismatch")
    (version,) = _U32.unpack_from(blob, 4)
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", offset=4)

    blocks: dict[str, np.ndarray] = {}
    pos = 8
    end = len(blob) - 4
    while pos < end:
        if pos + 4 > end:
            raise TruncatedFile(f"{path}: record header runs past the payload")
        (name_len,) = _U32.unpack_from(blob, pos)
        pos += 4
        if pos + name_len + 4 > end:
            raise TruncatedFile(f"{path}: block name runs past the payload")
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (rank,) = _U32.unpack_from(blob, pos)
        pos += 4
        if pos + 4 * rank > end:
            raise TruncatedFile(f"{path}: dims run past the payload")
        dims = struct.unpack_from(f"<{rank}I", blob, pos) if rank else ()
        pos += 4 * rank
        count = int(np.prod(dims)) if dims else 1
        nbytes = 4 * count
        if pos + nbytes > end:
            raise TruncatedFile(f"{path}: values of {name!r} run past the payload")
        blocks[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=pos).reshape(dims).copy()
        pos += nbytes
    if pos != end:
        raise ParseError("trailing bytes inside checkpoint payload", offset=pos)

    try:
        centroids = blocks.pop("meta.level_centroids")
        group_sizes = blocks.pop("meta.level_group_sizes")
        radii = blocks.pop("meta.level_radii")
        channels = blocks.pop("meta.level_channels")
        iterations = int(blocks.pop("meta.iterations")[0])
        window_size = int(blocks.pop("meta.window_size")[0])
    except KeyError as missing:
        raise ParseError(f"checkpoint lacks required block {missing}") from None
    levels = [
        LevelSpec(int(t), int(k), float(r), int(d))
        for t, k, r, d in zip(centroids, group_sizes, radii, channels)
    ]
    params = ModelParams(
        levels,
        {k: v.astype(dtype) for k, v in blocks.items()},
        iterations=iterations,
        window_size=window_size,
        version=VERSION,
    )
    return params
