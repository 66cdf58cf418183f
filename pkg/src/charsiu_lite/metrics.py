"""Boundary and frame-level evaluation of alignment tiers.

Boundary scoring matches phone onsets: a hit pairs a reference onset with a
hypothesis onset whose time differs by at most the tolerance and whose phone
label is equal.  Matching is one-to-one.  Frame overlap discretizes both
tiers onto a common grid and counts agreeing frames.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import SegmentTier, segments_to_labels
from .errors import InventoryMismatch, InvalidInput


@dataclass(frozen=True)
class EvalReport:
    """Pooled boundary metrics, optionally with frame overlap."""

    precision: float
    recall: float
    f1: float
    r_value: float
    overlap_pct: float | None
    hits: int
    ref_count: int
    hyp_count: int
    tolerance_ms: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "precision": self.precision,
                "recall": self.recall,
                "f1": self.f1,
                "r_value": self.r_value,
                "overlap_pct": self.overlap_pct,
                "hits": self.hits,
                "ref_count": self.ref_count,
                "hyp_count": self.hyp_count,
                "tolerance_ms": self.tolerance_ms,
            }
        )


def _onsets(tier: SegmentTier, skip_initial: bool) -> list[tuple[float, str]]:
    syms = tier.inventory.symbols
    onsets = [(s.start_ms, syms[s.phone]) for s in tier.segments]
    if skip_initial:
        onsets = onsets[1:]
    return onsets


def _check_labels(ref: SegmentTier, hyp: SegmentTier) -> None:
    ref_set = set(ref.inventory.symbols)
    extra = [s for s in hyp.symbols if s not in ref_set]
    if extra:
        raise InventoryMismatch(
            f"hypothesis labels {sorted(set(extra))} are not in the reference inventory"
        )


def _match_greedy(ref_on, hyp_on, tol: float) -> int:
    used = [False] * len(hyp_on)
    hits = 0
    for rt, rl in ref_on:
        for j, (ht, hl) in enumerate(hyp_on):
            if used[j] or hl != rl or abs(ht - rt) > tol:
                continue
            used[j] = True
            hits += 1
            break
    return hits


def _match_optimal(ref_on, hyp_on, tol: float) -> int:
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_bipartite_matching

    rows, cols = [], []
    for i, (rt, rl) in enumerate(ref_on):
        for j, (ht, hl) in enumerate(hyp_on):
            if hl == rl and abs(ht - rt) <= tol:
                rows.append(i)
                cols.append(j)
    if not rows:
        return 0
    graph = csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(ref_on), len(hyp_on))
    )
    match = maximum_bipartite_matching(graph, perm_type="column")
    return int(np.sum(match >= 0))


def _scores(hits: int, ref_count: int, hyp_count: int) -> tuple[float, float, float, float]:
    if ref_count == 0 and hyp_count == 0:
        # Nothing to find and nothing proposed: vacuously perfect.
        return 1.0, 1.0, 1.0, 1.0
    precision = hits / hyp_count if hyp_count else 0.0
    recall = hits / ref_count if ref_count else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    if ref_count == 0:
        return precision, recall, f1, 0.0
    # Over-segmentation ratio; equals recall/precision - 1 whenever hits > 0.
    os_ratio = hyp_count / ref_count - 1.0
    r1 = math.sqrt((1.0 - recall) ** 2 + os_ratio**2)
    r2 = (-os_ratio + recall - 1.0) / math.sqrt(2.0)
    r_value = 1.0 - (abs(r1) + abs(r2)) / 2.0
    return precision, recall, f1, r_value


def boundary_eval(
    ref: SegmentTier,
    hyp: SegmentTier,
    tolerance_ms: float,
    skip_initial: bool = False,
    matching: str = "greedy",
) -> EvalReport:
    """Onset precision/recall/F1 and R-value at the given tolerance.

    Hits require both a time match (|delta| <= tolerance_ms) and an equal
    phone label; every hypothesis label must exist in the reference
    inventory.  ``matching`` is "greedy" (first compatible hypothesis onset
    in time order) or "optimal" (maximum bipartite matching, for sensitivity
    checks).  ``skip_initial`` drops the t=0 onset on both sides.
    """
    if tolerance_ms < 0:
        raise InvalidInput("tolerance_ms must be non-negative")
    if matching not in ("greedy", "optimal"):
        raise InvalidInput(f"unknown matching {matching!r}")
    _check_labels(ref, hyp)
    ref_on = _onsets(ref, skip_initial)
    hyp_on = _onsets(hyp, skip_initial)
    if matching == "greedy":
        hits = _match_greedy(ref_on, hyp_on, tolerance_ms)
    else:
        hits = _match_optimal(ref_on, hyp_on, tolerance_ms)
    precision, recall, f1, r_value = _scores(hits, len(ref_on), len(hyp_on))
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        r_value=r_value,
        overlap_pct=None,
        hits=hits,
        ref_count=len(ref_on),
        hyp_count=len(hyp_on),
        tolerance_ms=float(tolerance_ms),
    )


def _overlap_counts(ref: SegmentTier, hyp: SegmentTier, grid_ms: float) -> tuple[int, int]:
    ref_labels = segments_to_labels(ref, grid_ms)
    hyp_labels = segments_to_labels(hyp, grid_ms)
    n_ref, n_hyp = len(ref_labels), len(hyp_labels)
    n = min(n_ref, n_hyp)
    if n_ref != n_hyp:
        warnings.warn(
            f"durations differ ({n_ref} vs {n_hyp} frames at {grid_ms} ms); "
            f"comparing the overlapping {n} frames",
            stacklevel=3,
        )
    ref_syms = np.array(ref.inventory.symbols)[ref_labels.labels[:n]]
    hyp_syms = np.array(hyp.inventory.symbols)[hyp_labels.labels[:n]]
    return int(np.sum(ref_syms == hyp_syms)), n


def frame_overlap(ref: SegmentTier, hyp: SegmentTier, grid_ms: float = 10.0) -> float:
    """Percentage of grid frames whose labels agree after midpoint discretization.

    When total durations differ, the comparison covers the overlapping span
    and a truncation warning is emitted.
    """
    if not grid_ms > 0:
        raise InvalidInput("grid_ms must be positive")
    matches, n = _overlap_counts(ref, hyp, grid_ms)
    return 100.0 * matches / n


def batch_eval(
    pairs,
    tolerance_ms: float = 20.0,
    grid_ms: float = 10.0,
    skip_initial: bool = False,
    matching: str = "greedy",
    average: str = "micro",
    with_overlap: bool = True,
) -> EvalReport:
    """Corpus-level evaluation over (ref, hyp) tier pairs.

    Micro-averaging pools hits and counts over all pairs before computing
    the ratios; macro-averaging means the per-pair metrics instead (counts
    are still reported pooled).  Overlap pools matching frames over all
    compared frames.
    """
    pairs = list(pairs)
    if not pairs:
        raise InvalidInput("batch_eval needs at least one pair")
    if average not in ("micro", "macro"):
        raise InvalidInput(f"unknown average {average!r}")
    reports = [
        boundary_eval(r, h, tolerance_ms, skip_initial=skip_initial, matching=matching)
        for r, h in pairs
    ]
    hits = sum(r.hits for r in reports)
    ref_count = sum(r.ref_count for r in reports)
    hyp_count = sum(r.hyp_count for r in reports)
    overlap = None
    if with_overlap:
        match_total = 0
        frame_total = 0
        per_pair_overlap = []
        for r, h in pairs:
            m, n = _overlap_counts(r, h, grid_ms)
            match_total += m
            frame_total += n
            per_pair_overlap.append(100.0 * m / n)
        overlap = 100.0 * match_total / frame_total
    if average == "micro":
        precision, recall, f1, r_value = _scores(hits, ref_count, hyp_count)
    else:
        precision = float(np.mean([r.precision for r in reports]))
        recall = float(np.mean([r.recall for r in reports]))
        f1 = float(np.mean([r.f1 for r in reports]))
        r_value = float(np.mean([r.r_value for r in reports]))
        if with_overlap:
            overlap = float(np.mean(per_pair_overlap))
    return EvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        r_value=r_value,
        overlap_pct=overlap,
        hits=hits,
        ref_count=ref_count,
        hyp_count=hyp_count,
        tolerance_ms=float(tolerance_ms),
    )
