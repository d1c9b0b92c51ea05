"""Event data model, stream validation, window partitioning, and file formats.

Streams are column-oriented (one numpy array per field) so that filtering,
windowing, and the geometry stages can stay vectorized; `Event` exists as the
per-element view. Timestamps are microseconds in a 64-bit field, polarities
are exactly -1 or +1, and labels are a three-state enum (Unknown/Real/Noise).

Two interchangeable file formats are provided:

* text: first line ``# width=<W> height=<H>``, then one event per line as
  ``t,x,y,p[,label]`` with ``label`` in ``{R, N}`` and omitted when unknown;
* binary (little-endian): magic ``EVD1``, u16 width, u16 height,
  u32 reserved=0, u64 event count (20-byte header), then 14-byte records of
  u64 t, u16 x, u16 y, i8 p, u8 label (0=Unknown, 1=Real, 2=Noise).

Both round-trip exactly and writes are byte-deterministic.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    ConfigError,
    MagicMismatch,
    NegativePolarityEncoding,
    OutOfBounds,
    ParseError,
    TruncatedFile,
)

US_PER_S = 1_000_000

BINARY_MAGIC = b"EVD1"
BINARY_HEADER = struct.Struct("<4sHHIQ")  # magic, width, height, reserved, count
BINARY_RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "<i1"), ("label", "<u1")]
)


class Label(IntEnum):
    UNKNOWN = 0
    REAL = 1
    NOISE = 2


_LABEL_TO_CHAR = {Label.REAL: "R", Label.NOISE: "N"}
_CHAR_TO_LABEL = {"R": Label.REAL, "N": Label.NOISE}


@dataclass(frozen=True)
class Event:
    """One sensor firing: pixel position, microsecond timestamp, polarity."""

    x: int
    y: int
    t: int
    p: int
    label: Label = Label.UNKNOWN


@dataclass(frozen=True)
class SensorGeometry:
    """Pixel-array dimensions plus the sensor-model constants.

    ``gain_a`` and ``offset_b`` shape the log-intensity response,
    ``threshold_theta`` is the comparator threshold, and ``noise_rate_eta``
    is the background-activity rate in events per pixel per second.
    """

    width: int
    height: int
    gain_a: float = 1.0
    offset_b: float = 1.0
    threshold_theta: float = 0.2
    noise_rate_eta: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError(f"sensor dimensions must be >= 1, got {self.width}x{self.height}")
        if self.threshold_theta <= 0:
            raise ConfigError(f"threshold_theta must be > 0, got {self.threshold_theta}")
        if self.noise_rate_eta < 0:
            raise ConfigError(f"noise_rate_eta must be >= 0, got {self.noise_rate_eta}")


class EventStream(Sequence[Event]):
    """Immutable column-oriented sequence of events.

    Arrays are copied on construction and marked read-only, so streams can be
    shared freely across windows and (potential) worker threads.
    """

    __slots__ = ("t", "x", "y", "p", "label")

    def __init__(self, t, x, y, p, label=None):
        t = np.ascontiguousarray(t, dtype=np.int64).copy()
        x = np.ascontiguousarray(x, dtype=np.int64).copy()
        y = np.ascontiguousarray(y, dtype=np.int64).copy()
        p = np.ascontiguousarray(p, dtype=np.int8).copy()
        if label is None:
            label = np.zeros(len(t), dtype=np.uint8)
        else:
            label = np.ascontiguousarray(label, dtype=np.uint8).copy()
        n = len(t)
        if not (len(x) == len(y) == len(p) == len(label) == n):
            raise ValueError("field arrays must share one length")
        for arr in (t, x, y, p, label):
            arr.setflags(write=False)
        self.t = t
        self.x = x
        self.y = y
        self.p = p
        self.label = label

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def from_events(cls, events: Iterable[Event]) -> "EventStream":
        events = list(events)
        return cls(
            [e.t for e in events],
            [e.x for e in events],
            [e.y for e in events],
            [e.p for e in events],
            [int(e.label) for e in events],
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return EventStream(self.t[i], self.x[i], self.y[i], self.p[i], self.label[i])
        i = int(i)
        return Event(
            x=int(self.x[i]),
            y=int(self.y[i]),
            t=int(self.t[i]),
            p=int(self.p[i]),
            label=Label(int(self.label[i])),
        )

    def __iter__(self) -> Iterator[Event]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            len(self) == len(other)
            and bool(np.array_equal(self.t, other.t))
            and bool(np.array_equal(self.x, other.x))
            and bool(np.array_equal(self.y, other.y))
            and bool(np.array_equal(self.p, other.p))
            and bool(np.array_equal(self.label, other.label))
        )

    def __repr__(self) -> str:
        return f"EventStream(n={len(self)})"

    def take(self, indices) -> "EventStream":
        """Select events by integer or boolean index, keeping order."""
        return EventStream(
            self.t[indices], self.x[indices], self.y[indices], self.p[indices], self.label[indices]
        )

    def with_labels(self, labels) -> "EventStream":
        """Copy of the stream with the label column replaced."""
        return EventStream(self.t, self.x, self.y, self.p, labels)

    def time_sorted(self) -> "EventStream":
        """Stable sort by timestamp (ties keep current order)."""
        order = np.argsort(self.t, kind="stable")
        return self.take(order)

    def count_label(self, label: Label) -> int:
        return int(np.count_nonzero(self.label == int(label)))


def concat_streams(streams: Sequence[EventStream]) -> EventStream:
    streams = [s for s in streams if len(s) > 0]
    if not streams:
        return EventStream.empty()
    return EventStream(
        np.concatenate([s.t for s in streams]),
        np.concatenate([s.x for s in streams]),
        np.concatenate([s.y for s in streams]),
        np.concatenate([s.p for s in streams]),
        np.concatenate([s.label for s in streams]),
    )


@dataclass(frozen=True)
class EventWindow:
    """Time-ordered stack of events processed as one denoising unit."""

    events: EventStream
    t_min: int
    t_max: int
    t_mu: float
    tail: bool = False

    def __len__(self) -> int:
        return len(self.events)


def _as_stream(events) -> EventStream:
    if isinstance(events, EventStream):
        return events
    return EventStream.from_events(events)


def validate_stream(events, geometry: SensorGeometry) -> EventStream:
    """Check bounds and polarity encoding, then stable-sort by timestamp.

    Raises OutOfBounds with the offending *input* index, or
    NegativePolarityEncoding for a polarity outside {-1, +1}. Event count and
    the relative order of equal timestamps are preserved.
    """
    stream = _as_stream(events)
    bad = np.flatnonzero(
        (stream.x < 0)
        | (stream.x >= geometry.width)
        | (stream.y < 0)
        | (stream.y >= geometry.height)
    )
    if bad.size:
        i = int(bad[0])
        raise OutOfBounds(
            i,
            f"coordinate ({int(stream.x[i])}, {int(stream.y[i])}) outside "
            f"{geometry.width}x{geometry.height}",
        )
    bad = np.flatnonzero(stream.t < 0)
    if bad.size:
        i = int(bad[0])
        raise OutOfBounds(i, f"negative timestamp {int(stream.t[i])}")
    bad = np.flatnonzero((stream.p != 1) & (stream.p != -1))
    if bad.size:
        i = int(bad[0])
        raise NegativePolarityEncoding(i, int(stream.p[i]))
    return stream.time_sorted()


def partition_windows(stream: EventStream, w: int) -> list[EventWindow]:
    """Split a time-sorted stream into consecutive windows of exactly ``w``.

    The final remainder (if any) is emitted as a shorter window with
    ``tail=True``; concatenating all windows in order reproduces the stream.
    """
    if w < 1:
        raise ConfigError(f"window size must be >= 1, got {w}")
    windows: list[EventWindow] = []
    for start in range(0, len(stream), w):
        chunk = stream[start : start + w]
        windows.append(
            EventWindow(
                events=chunk,
                t_min=int(chunk.t[0]),
                t_max=int(chunk.t[-1]),
                t_mu=float(np.mean(chunk.t, dtype=np.float64)),
                tail=len(chunk) < w,
            )
        )
    return windows


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _parse_header_line(line: str) -> tuple[int, int]:
    parts = line.strip().split()
    if len(parts) != 3 or parts[0] != "#":
        raise ParseError(f"expected '# width=<W> height=<H>', got {line.strip()!r}", line=1)
    values = {}
    for part in parts[1:]:
        key, _, raw = part.partition("=")
        if key not in ("width", "height") or not raw:
            raise ParseError(f"bad header field {part!r}", line=1)
        try:
            values[key] = int(raw)
        except ValueError:
            raise ParseError(f"bad header value {part!r}", line=1) from None
    if set(values) != {"width", "height"}:
        raise ParseError("header must define width and height", line=1)
    return values["width"], values["height"]


def _read_text(path: Path) -> tuple[EventStream, SensorGeometry]:
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline()
        if not header:
            raise ParseError("empty file, missing header", line=1)
        width, height = _parse_header_line(header)
        ts, xs, ys, ps, labels = [], [], [], [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) not in (4, 5):
                raise ParseError(f"expected 4 or 5 fields, got {len(fields)}", line=lineno)
            try:
                t, x, y, p = (int(f) for f in fields[:4])
            except ValueError:
                raise ParseError(f"non-integer field in {line!r}", line=lineno) from None
            if p not in (-1, 1):
                raise ParseError(f"polarity {p} not in {{-1, 1}}", line=lineno)
            if t < 0:
                raise ParseError(f"negative timestamp {t}", line=lineno)
            label = Label.UNKNOWN
            if len(fields) == 5:
                try:
                    label = _CHAR_TO_LABEL[fields[4]]
                except KeyError:
                    raise ParseError(f"unknown label {fields[4]!r}", line=lineno) from None
            ts.append(t)
            xs.append(x)
            ys.append(y)
            ps.append(p)
            labels.append(int(label))
    return EventStream(ts, xs, ys, ps, labels), SensorGeometry(width=width, height=height)


def _read_binary(path: Path) -> tuple[EventStream, SensorGeometry]:
    blob = path.read_bytes()
    if len(blob) < BINARY_HEADER.size:
        raise TruncatedFile(f"{path}: {len(blob)} bytes is shorter than the 20-byte header")
    magic, width, height, reserved, count = BINARY_HEADER.unpack_from(blob, 0)
    if magic != BINARY_MAGIC:
        raise MagicMismatch(f"{path}: magic {magic!r} != {BINARY_MAGIC!r}")
    if reserved != 0:
        raise ParseError(f"reserved field must be 0, got {reserved}", offset=8)
    expected = BINARY_HEADER.size + BINARY_RECORD_DTYPE.itemsize * count
    if len(blob) < expected:
        raise TruncatedFile(f"{path}: {len(blob)} bytes, header promises {expected}")
    if len(blob) > expected:
        raise ParseError(f"{len(blob) - expected} trailing bytes after payload", offset=expected)
    records = np.frombuffer(blob, dtype=BINARY_RECORD_DTYPE, count=count, offset=BINARY_HEADER.size)
    if np.any(records["t"] > np.uint64(np.iinfo(np.int64).max)):
        raise ParseError("timestamp exceeds the supported 63-bit range", offset=BINARY_HEADER.size)
    bad = np.flatnonzero((records["p"] != 1) & (records["p"] != -1))
    if bad.size:
        off = BINARY_HEADER.size + int(bad[0]) * BINARY_RECORD_DTYPE.itemsize
        raise ParseError(f"polarity {int(records['p'][bad[0]])} not in {{-1, 1}}", offset=off)
    bad = np.flatnonzero(records["label"] > 2)
    if bad.size:
        off = BINARY_HEADER.size + int(bad[0]) * BINARY_RECORD_DTYPE.itemsize
        raise ParseError(f"label byte {int(records['label'][bad[0]])} > 2", offset=off)
    stream = EventStream(
        records["t"].astype(np.int64),
        records["x"].astype(np.int64),
        records["y"].astype(np.int64),
        records["p"],
        records["label"],
    )
    return stream, SensorGeometry(width=width, height=height)


def read_events(path, format: str = "binary") -> tuple[EventStream, SensorGeometry]:
    """Read a stream and its sensor dimensions from ``path``.

    ``format`` is ``"text"`` or ``"binary"``; the returned geometry carries
    the file's dimensions and default sensor-model constants.
    """
    path = Path(path)
    if format == "text":
        return _read_text(path)
    if format == "binary":
        return _read_binary(path)
    raise ConfigError(f"unknown format {format!r}")


def write_events(path, events: EventStream, geometry: SensorGeometry, format: str = "binary") -> None:
    """Write a validated stream; identical input yields identical bytes."""
    path = Path(path)
    stream = _as_stream(events)
    if format == "text":
        lines = [f"# width={geometry.width} height={geometry.height}"]
        for i in range(len(stream)):
            line = f"{int(stream.t[i])},{int(stream.x[i])},{int(stream.y[i])},{int(stream.p[i])}"
            label = Label(int(stream.label[i]))
            if label != Label.UNKNOWN:
                line += f",{_LABEL_TO_CHAR[label]}"
            lines.append(line)
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
        return
    if format == "binary":
        header = BINARY_HEADER.pack(
            BINARY_MAGIC, geometry.width, geometry.height, 0, len(stream)
        )
        records = np.empty(len(stream), dtype=BINARY_RECORD_DTYPE)
        records["t"] = stream.t.astype(np.uint64)
        records["x"] = stream.x.astype(np.uint16)
        records["y"] = stream.y.astype(np.uint16)
        records["p"] = stream.p
        records["label"] = stream.label
        path.write_bytes(header + records.tobytes())
        return
    raise ConfigError(f"unknown format {format!r}")


def infer_format(path) -> str:
    """Guess the file format from the extension (text for .txt/.csv/.evt)."""
    return "text" if Path(path).suffix.lower() in (".txt", ".csv", ".evt") else "binary"
