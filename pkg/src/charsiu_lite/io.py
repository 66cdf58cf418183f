"""File formats: Praat TextGrid (long text syntax) and the binary matrix container.

TextGrid files are written in the long ooTextFile syntax, UTF-8 with LF line
endings, times in seconds with 6 decimals.  The matrix container is a single
JSON header line followed by a row-major little-endian float32 payload.

Readers are reentrant; concurrent writes to one path are undefined.
"""

from __future__ import annotations

import json

import numpy as np

from .core import FrameMatrix, PhoneInventory, Segment, SegmentTier
from .errors import (
    CorruptFile,
    EmptyTiers,
    InvalidTier,
    ParseError,
    Unsupported,
)

# Empty interval marks have no symbol of their own; they become this label.
EMPTY_MARK = "sil"

# Boundary slack when stitching parsed intervals back together, in seconds.
_TIME_TOL_S = 1e-6


def _escape(text: str) -> str:
    return text.replace('"', '""')


def write_textgrid(tiers, path) -> None:
    """Write named tiers as a Praat long TextGrid.

    ``tiers`` is a sequence of (name, SegmentTier) pairs; each becomes one
    IntervalTier.  Raises EmptyTiers when the sequence is empty.
    """
    tiers = list(tiers)
    if not tiers:
        raise EmptyTiers("need at least one tier to write")
    xmax_s = max(t.total_duration_ms for _, t in tiers) / 1000.0
    out = []
    out.append('File type = "ooTextFile"')
    out.append('Object class = "TextGrid"')
    out.append("")
    out.append("xmin = 0.000000")
    out.append(f"xmax = {xmax_s:.6f}")
    out.append("tiers? <exists>")
    out.append(f"size = {len(tiers)}")
    out.append("item []:")
    for k, (name, tier) in enumerate(tiers, start=1):
        dur_s = tier.total_duration_ms / 1000.0
        out.append(f"    item [{k}]:")
        out.append('        class = "IntervalTier"')
        out.append(f'        name = "{_escape(name)}"')
        out.append("        xmin = 0.000000")
        out.append(f"        xmax = {dur_s:.6f}")
        out.append(f"        intervals: size = {len(tier)}")
        for i, seg in enumerate(tier.segments, start=1):
            label = tier.inventory.symbols[seg.phone]
            out.append(f"        intervals [{i}]:")
            out.append(f"            xmin = {seg.start_ms / 1000.0:.6f}")
            out.append(f"            xmax = {seg.end_ms / 1000.0:.6f}")
            out.append(f'            text = "{_escape(label)}"')
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


class _LineReader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next_content(self) -> tuple[str, int]:
        """Next non-blank line and its 1-based line number."""
        while self.pos < len(self.lines):
            line = self.lines[self.pos]
            self.pos += 1
            if line.strip():
                return line, self.pos
        raise ParseError("unexpected end of file", line=len(self.lines) or 1)


def _split_kv(line: str, lineno: int) -> tuple[str, str]:
    if "=" not in line:
        raise ParseError(f"expected 'key = value', got {line.strip()!r}", line=lineno)
    key, _, value = line.partition("=")
    return key.strip(), value.strip()


def _expect_kv(rd: _LineReader, key: str) -> tuple[str, int]:
    line, lineno = rd.next_content()
    k, v = _split_kv(line, lineno)
    if k != key:
        raise ParseError(f"expected {key!r}, got {k!r}", line=lineno)
    return v, lineno


def _expect_num(rd: _LineReader, key: str) -> float:
    v, lineno = _expect_kv(rd, key)
    try:
        return float(v)
    except ValueError:
        raise ParseError(f"{key} is not a number: {v!r}", line=lineno) from None


def _expect_str(rd: _LineReader, key: str) -> str:
    v, lineno = _expect_kv(rd, key)
    return _unquote(v, lineno)


def _unquote(raw: str, lineno: int) -> str:
    if len(raw) < 2 or not raw.startswith('"') or not raw.endswith('"'):
        raise ParseError(f"expected a quoted string, got {raw!r}", line=lineno)
    return raw[1:-1].replace('""', '"')


def _expect_header_line(rd: _LineReader, prefix: str) -> None:
    line, lineno = rd.next_content()
    if not line.strip().startswith(prefix):
        raise ParseError(f"expected {prefix!r}, got {line.strip()!r}", line=lineno)


def read_textgrid(path) -> list[tuple[str, SegmentTier]]:
    """Parse a Praat long TextGrid into named SegmentTiers.

    All returned tiers share one inventory built from the labels in order of
    first appearance; empty interval marks become the "sil" symbol.  Tiers
    must start at time 0 and be contiguous (slack 1e-6 s), otherwise
    InvalidTier is raised; syntax problems raise ParseError with the line
    number.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    rd = _LineReader(text)

    ftype = _expect_str(rd, "File type")
    if ftype != "ooTextFile":
        raise ParseError(f"not an ooTextFile: {ftype!r}", line=1)
    oclass = _expect_str(rd, "Object class")
    if oclass != "TextGrid":
        raise ParseError(f"not a TextGrid: {oclass!r}", line=2)
    _expect_num(rd, "xmin")
    _expect_num(rd, "xmax")
    line, lineno = rd.next_content()
    if not line.strip().startswith("tiers?"):
        raise ParseError(f"expected 'tiers? <exists>', got {line.strip()!r}", line=lineno)
    if "<exists>" not in line:
        raise EmptyTiers("TextGrid declares no tiers")
    n_tiers = int(_expect_num(rd, "size"))
    if n_tiers < 1:
        raise EmptyTiers("TextGrid declares zero tiers")

    # Optional container line "item []:".
    line, lineno = rd.next_content()
    if line.strip() != "item []:":
        rd.pos -= 1

    raw_tiers: list[tuple[str, list[tuple[float, float, str]]]] = []
    symbols_in_order: list[str] = []
    seen: set[str] = set()
    for _ in range(n_tiers):
        _expect_header_line(rd, "item [")
        tclass = _expect_str(rd, "class")
        if tclass != "IntervalTier":
            raise ParseError(f"unsupported tier class {tclass!r}", line=rd.pos)
        name = _expect_str(rd, "name")
        _expect_num(rd, "xmin")
        _expect_num(rd, "xmax")
        n_iv = int(_expect_num(rd, "intervals: size"))
        if n_iv < 1:
            raise InvalidTier(f"tier {name!r} has no intervals")
        intervals = []
        for _ in range(n_iv):
            _expect_header_line(rd, "intervals [")
            ivmin = _expect_num(rd, "xmin")
            ivmax = _expect_num(rd, "xmax")
            text_v = _expect_str(rd, "text").strip()
            label = text_v if text_v else EMPTY_MARK
            intervals.append((ivmin, ivmax, label))
            if label not in seen:
                seen.add(label)
                symbols_in_order.append(label)
        raw_tiers.append((name, intervals))

    inventory = PhoneInventory(tuple(symbols_in_order))
    result = []
    for name, intervals in raw_tiers:
        if abs(intervals[0][0]) > _TIME_TOL_S:
            raise InvalidTier(f"tier {name!r} starts at {intervals[0][0]} s, not 0")
        segs = []
        prev_end_ms = 0.0
        for ivmin, ivmax, label in intervals:
            if segs and abs(ivmin - prev_end_ms / 1000.0) > _TIME_TOL_S:
                raise InvalidTier(
                    f"tier {name!r}: interval at {ivmin} s overlaps or leaves a gap"
                )
            start_ms = prev_end_ms
            end_ms = ivmax * 1000.0
            if not end_ms > start_ms:
                raise InvalidTier(f"tier {name!r}: empty or reversed interval at {ivmin} s")
            segs.append(Segment(inventory.index(label), start_ms, end_ms))
            prev_end_ms = end_ms
        result.append((name, SegmentTier(tuple(segs), prev_end_ms, inventory)))
    return result


_MATRIX_KEYS = ("kind", "rows", "cols", "frame_shift_ms", "labels", "endianness", "dtype")


def write_matrix(m: FrameMatrix, path) -> None:
    """Write a FrameMatrix: one JSON header line, then float32 LE row-major payload."""
    rows, cols = m.shape
    header = {
        "kind": m.kind,
        "rows": rows,
        "cols": cols,
        "frame_shift_ms": m.frame_shift_ms,
        "labels": list(m.labels) if m.labels is not None else None,
        "endianness": "LE",
        "dtype": "f32",
    }
    payload = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def read_matrix(path) -> FrameMatrix:
    """Read a matrix file written by write_matrix; the inverse is bit-exact."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad matrix header: {exc}", line=1) from exc
    if not isinstance(header, dict) or any(k not in header for k in _MATRIX_KEYS):
        raise ParseError("matrix header is missing required keys", line=1)
    if header["dtype"] != "f32":
        raise Unsupported(f"dtype {header['dtype']!r} not supported")
    if header["endianness"] != "LE":
        raise Unsupported(f"endianness {header['endianness']!r} not supported")
    rows, cols = header["rows"], header["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows >= 1 and cols >= 1):
        raise ParseError("matrix header has invalid rows/cols", line=1)
    expected = rows * cols * 4
    if len(payload) != expected:
        raise CorruptFile(f"payload is {len(payload)} bytes, header declares {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    labels = header["labels"]
    return FrameMatrix(
        values=values,
        frame_shift_ms=header["frame_shift_ms"],
        kind=header["kind"],
        labels=tuple(labels) if labels is not None else None,
    )
