"""Domain types: phone inventories, frame matrices, segment tiers, frame labels.

All types are immutable after construction and all operations are pure,
so everything here is safe to share across threads.

Interval convention: half-open [start, end); a boundary instant belongs to
the segment on its right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import (
    CollapseTargetMissing,
    DuplicateSymbol,
    InvalidInput,
    ParseError,
    UnmappedSymbol,
)

VALID_KINDS = ("features", "similarity", "attention", "log_posterior", "posterior")


@dataclass(frozen=True)
class PhoneInventory:
    """A closed, ordered set of phone symbols.

    ``collapse_map`` sends foreign symbols (e.g. TIMIT-61) onto members of
    ``symbols``; symbols listed in ``keep`` bypass the map and pass through
    verbatim (they must themselves be inventory members).
    """

    symbols: tuple[str, ...]
    collapse_map: dict[str, str] | None = None
    keep: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))
        object.__setattr__(self, "keep", frozenset(self.keep))
        if not self.symbols:
            raise InvalidInput("inventory needs at least one symbol")
        seen = set()
        for s in self.symbols:
            if not isinstance(s, str) or not s:
                raise InvalidInput(f"invalid phone symbol {s!r}")
            if s in seen:
                raise DuplicateSymbol(f"symbol {s!r} declared twice")
            seen.add(s)
        if self.collapse_map is not None:
            for src, dst in self.collapse_map.items():
                if dst not in seen:
                    raise CollapseTargetMissing(
                        f"collapse target {dst!r} (for source {src!r}) not in inventory"
                    )
        for s in self.keep:
            if s not in seen:
                raise CollapseTargetMissing(f"keep symbol {s!r} not in inventory")

    @cached_property
    def _index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.symbols)}

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise UnmappedSymbol(f"symbol {symbol!r} not in inventory") from None


def load_inventory(path) -> PhoneInventory:
    """Load an inventory JSON file.

    Schema: ``{"symbols": [...], "keep": [...], "collapse_map": {...}}``
    with ``keep`` and ``collapse_map`` optional; UTF-8.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(raw, dict) or "symbols" not in raw:
        raise ParseError(f"{path}: expected an object with a 'symbols' list")
    symbols = raw["symbols"]
    if not isinstance(symbols, list) or not all(isinstance(s, str) for s in symbols):
        raise ParseError(f"{path}: 'symbols' must be a list of strings")
    cmap = raw.get("collapse_map")
    if cmap is not None and not isinstance(cmap, dict):
        raise ParseError(f"{path}: 'collapse_map' must be an object")
    keep = raw.get("keep", [])
    if not isinstance(keep, list):
        raise ParseError(f"{path}: 'keep' must be a list")
    return PhoneInventory(tuple(symbols), collapse_map=cmap, keep=frozenset(keep))


@dataclass(frozen=True, eq=False)
class FrameMatrix:
    """A real matrix over analysis frames plus frame-shift metadata.

    Axis semantics by ``kind``:
      features, posterior, log_posterior: rows are frames, columns channels/phones
      similarity, attention: rows are phone positions, columns are frames

    ``labels`` optionally names the columns (phone symbols for posterior-like
    matrices).  The values array is made read-only.
    """

    values: np.ndarray
    frame_shift_ms: float
    kind: str
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise InvalidInput(f"need a 2-d matrix with both sides >= 1, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidInput("matrix contains non-finite values")
        if self.kind not in VALID_KINDS:
            raise InvalidInput(f"unknown matrix kind {self.kind!r}")
        if not self.frame_shift_ms > 0:
            raise InvalidInput("frame_shift_ms must be positive")
        if self.kind == "posterior":
            if np.any(v < 0) or np.any(v > 1):
                raise InvalidInput("posterior entries must lie in [0, 1]")
            err = np.max(np.abs(v.sum(axis=1) - 1.0))
            if err > 1e-5:
                raise InvalidInput(f"posterior rows must sum to 1 (off by {err:.2e})")
        elif self.kind == "attention":
            if np.any(v < 0):
                raise InvalidInput("attention entries must be non-negative")
            err = np.max(np.abs(v.sum(axis=0) - 1.0))
            if err > 1e-5:
                raise InvalidInput(f"attention columns must sum to 1 (off by {err:.2e})")
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != v.shape[1]:
                raise InvalidInput(f"{len(labels)} labels for {v.shape[1]} columns")
            object.__setattr__(self, "labels", labels)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frame_shift_ms", float(self.frame_shift_ms))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class PhoneSeq:
    """An ordered phone transcription as indices into an inventory."""

    phones: tuple[int, ...]
    inventory: PhoneInventory

    def __post_init__(self):
        object.__setattr__(self, "phones", tuple(int(p) for p in self.phones))
        if len(self.phones) == 0:
            raise InvalidInput("empty phone sequence")
        n = len(self.inventory)
        for p in self.phones:
            if not 0 <= p < n:
                raise InvalidInput(f"phone index {p} outside inventory of size {n}")

    def __len__(self) -> int:
        return len(self.phones)

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(self.inventory.symbols[p] for p in self.phones)

    @classmethod
    def from_symbols(cls, symbols, inventory: PhoneInventory) -> "PhoneSeq":
        return cls(tuple(inventory.index(s) for s in symbols), inventory)


class Segment(NamedTuple):
    phone: int
    start_ms: float
    end_ms: float


@dataclass(frozen=True)
class SegmentTier:
    """Contiguous, non-overlapping phone intervals covering [0, total_duration_ms)."""

    segments: tuple[Segment, ...]
    total_duration_ms: float
    inventory: PhoneInventory

    def __post_init__(self):
        segs = tuple(Segment(int(p), float(s), float(e)) for p, s, e in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "total_duration_ms", float(self.total_duration_ms))
        if not segs:
            raise InvalidInput("tier needs at least one segment")
        n = len(self.inventory)
        if segs[0].start_ms != 0.0:
            raise InvalidInput("first segment must start at 0")
        for i, seg in enumerate(segs):
            if not 0 <= seg.phone < n:
                raise InvalidInput(f"phone index {seg.phone} outside inventory of size {n}")
            if not seg.start_ms < seg.end_ms:
                raise InvalidInput(f"segment {i} has start >= end")
            if i and segs[i - 1].end_ms != seg.start_ms:
                raise InvalidInput(f"gap or overlap before segment {i}")
        if segs[-1].end_ms != self.total_duration_ms:
            raise InvalidInput("last segment must end at total_duration_ms")

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def onsets_ms(self) -> np.ndarray:
        return np.array([s.start_ms for s in self.segments])

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(self.inventory.symbols[s.phone] for s in self.segments)


@dataclass(frozen=True, eq=False)
class FrameLabels:
    """Per-frame phone indices at a fixed frame shift."""

    labels: np.ndarray
    frame_shift_ms: float
    inventory: PhoneInventory

    def __post_init__(self):
        arr = np.array(self.labels, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidInput("labels must be a non-empty 1-d sequence")
        if not self.frame_shift_ms > 0:
            raise InvalidInput("frame_shift_ms must be positive")
        n = len(self.inventory)
        if arr.min() < 0 or arr.max() >= n:
            raise InvalidInput("label index outside inventory")
        arr.setflags(write=False)
        object.__setattr__(self, "labels", arr)
        object.__setattr__(self, "frame_shift_ms", float(self.frame_shift_ms))

    def __len__(self) -> int:
        return int(self.labels.size)


def _collapse_symbol(sym: str, inv: PhoneInventory) -> str:
    if sym in inv.keep:
        return sym
    if inv.collapse_map and sym in inv.collapse_map:
        return inv.collapse_map[sym]
    if sym in inv:
        return sym
    raise UnmappedSymbol(f"no collapse mapping for symbol {sym!r}")


def collapse_seq(seq, inv: PhoneInventory):
    """Map a PhoneSeq or SegmentTier onto the target inventory ``inv``.

    Resolution order per source symbol: ``keep`` entries pass through
    verbatim, then ``collapse_map``, then symbols already in ``inv``.
    Sequence length and all boundary times are preserved; adjacent segments
    that collapse to the same phone are NOT merged.
    """
    if isinstance(seq, PhoneSeq):
        src = seq.inventory.symbols
        phones = tuple(inv.index(_collapse_symbol(src[p], inv)) for p in seq.phones)
        return PhoneSeq(phones, inv)
    if isinstance(seq, SegmentTier):
        src = seq.inventory.symbols
        segs = tuple(
            Segment(inv.index(_collapse_symbol(src[s.phone], inv)), s.start_ms, s.end_ms)
            for s in seq.segments
        )
        return SegmentTier(segs, seq.total_duration_ms, inv)
    raise InvalidInput(f"cannot collapse a {type(seq).__name__}")


def labels_to_segments(fl: FrameLabels) -> SegmentTier:
    """Run-length encode frame labels into a segment tier.

    Consecutive identical labels merge into one segment; segment times are
    frame counts times the frame shift.
    """
    labels = fl.labels
    shift = fl.frame_shift_ms
    change = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [labels.size]))
    segs = tuple(
        Segment(int(labels[a]), a * shift, b * shift) for a, b in zip(starts, ends)
    )
    return SegmentTier(segs, labels.size * shift, fl.inventory)


def segments_to_labels(tier: SegmentTier, frame_shift_ms: float) -> FrameLabels:
    """Discretize a tier: frame t takes the phone covering midpoint (t + 0.5) * shift.

    The frame count is round(total_duration / shift), at least 1; midpoints
    past the last boundary (possible when the shift does not divide the
    duration) take the final phone.
    """
    if not frame_shift_ms > 0:
        raise InvalidInput("frame_shift_ms must be positive")
    n_frames = max(round(tier.total_duration_ms / frame_shift_ms), 1)
    mids = (np.arange(n_frames) + 0.5) * frame_shift_ms
    starts = np.array([s.start_ms for s in tier.segments])
    idx = np.searchsorted(starts, mids, side="right") - 1
    idx = np.clip(idx, 0, len(tier.segments) - 1)
    phones = np.array([s.phone for s in tier.segments], dtype=np.int64)
    return FrameLabels(phones[idx], frame_shift_ms, tier.inventory)
