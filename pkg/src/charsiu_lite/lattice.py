"""Log-domain dynamic programming over phone-position lattices.

The lattice admits transitions {stay, advance by 1} only: every phone
position consumes at least one frame and none can be skipped.  This matches
the blank-suppressed CTC construction (with the blank forced to ~zero
probability, CTC paths cannot skip a label).  All recursions run in the log
domain with logaddexp; there is no probability-domain fallback.

Everything here is a pure function, safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import FrameLabels, FrameMatrix, PhoneSeq, Segment, SegmentTier
from .errors import EmptyDecode, Infeasible, InvalidInput

# Log-probability used to suppress the CTC blank: underflows any sum
# without producing NaN.
BLANK_LOGPROB = -1e4


@dataclass(frozen=True, eq=False)
class AlignmentPath:
    """A monotonic frame-to-phone-position assignment with its log score."""

    frame_to_phone: np.ndarray
    score: float

    def __post_init__(self):
        arr = np.array(self.frame_to_phone, dtype=np.int64)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidInput("path must be a non-empty 1-d sequence")
        steps = np.diff(arr)
        if arr[0] != 0 or np.any(steps < 0) or np.any(steps > 1):
            raise InvalidInput("path must start at 0 and move by steps of 0 or +1")
        arr.setflags(write=False)
        object.__setattr__(self, "frame_to_phone", arr)
        object.__setattr__(self, "score", float(self.score))


@dataclass(frozen=True, eq=False)
class FsGrad:
    """Gradient of the forward-sum loss w.r.t. the log alignment matrix.

    Every frame is visited exactly once by every path, so each row of
    ``d_logA`` sums to -1.
    """

    d_logA: np.ndarray

    def __post_init__(self):
        arr = np.array(self.d_logA, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("gradient contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "d_logA", arr)


def _as_array(m) -> np.ndarray:
    if isinstance(m, FrameMatrix):
        return np.asarray(m.values, dtype=np.float64)
    return np.asarray(m, dtype=np.float64)


def forward_sum_loss(logA, validate: bool = True, tol: float = 1e-5):
    """Negative log total probability of all monotonic paths through logA.

    ``logA`` is T x N: per-frame log-probabilities over phone positions
    (each row exponentiates and sums to 1 within ``tol``; checked when
    ``validate`` is set).  Returns (loss, FsGrad) where the gradient is the
    exact analytic one from the forward-backward recursion.
    """
    logA = _as_array(logA)
    if logA.ndim != 2:
        raise InvalidInput(f"logA must be 2-d, got shape {logA.shape}")
    if not np.all(np.isfinite(logA)):
        raise InvalidInput("logA contains non-finite values")
    T, N = logA.shape
    if N < 1:
        raise InvalidInput("need at least one phone position")
    if T < N:
        raise Infeasible(f"{T} frames cannot cover {N} phone positions")
    if validate:
        err = np.max(np.abs(logsumexp(logA, axis=1)))
        if err > tol:
            raise InvalidInput(f"rows must exponentiate-sum to 1 (off by {err:.2e} in log)")

    neg = -np.inf
    alpha = np.full((T, N), neg)
    alpha[0, 0] = logA[0, 0]
    for t in range(1, T):
        prev = alpha[t - 1]
        shifted = np.concatenate(([neg], prev[:-1]))
        alpha[t] = logA[t] + np.logaddexp(prev, shifted)

    log_z = alpha[T - 1, N - 1]
    loss = -log_z

    beta = np.full((T, N), neg)
    beta[T - 1, N - 1] = 0.0
    for t in range(T - 2, -1, -1):
        w = beta[t + 1] + logA[t + 1]
        shifted = np.concatenate((w[1:], [neg]))
        beta[t] = np.logaddexp(w, shifted)

    with np.errstate(invalid="ignore"):
        grad = -np.exp(alpha + beta - log_z)
    grad[~np.isfinite(grad)] = 0.0
    return float(loss), FsGrad(grad)


def forward_sum_via_blank_suppression(logA_with_blank, blank_floor: float = BLANK_LOGPROB) -> float:
    """Standard CTC loss with the blank symbol suppressed.

    ``logA_with_blank`` is T x (N+1); column 0 is the blank and must stay at
    or below ``blank_floor`` at every frame.  Because columns index phone
    positions (all distinct), the repeated-label special case of CTC never
    applies, and the result equals forward_sum_loss of the blank-stripped
    matrix within 1e-4.
    """
    logA = _as_array(logA_with_blank)
    if logA.ndim != 2 or logA.shape[1] < 2:
        raise InvalidInput(f"need a T x (N+1) matrix, got shape {logA.shape}")
    if not np.all(np.isfinite(logA)):
        raise InvalidInput("logA contains non-finite values")
    if np.any(logA[:, 0] > blank_floor):
        raise InvalidInput(f"blank column must stay at or below {blank_floor}")
    T = logA.shape[0]
    N = logA.shape[1] - 1
    if T < N:
        raise Infeasible(f"{T} frames cannot cover {N} phone positions")

    # Extended CTC state sequence: blank, pos 1, blank, pos 2, ..., pos N, blank.
    S = 2 * N + 1
    state_col = np.zeros(S, dtype=np.int64)
    state_col[1::2] = np.arange(1, N + 1)
    state_logp = logA[:, state_col]  # T x S

    neg = -np.inf
    a = np.full(S, neg)
    a[0] = state_logp[0, 0]
    a[1] = state_logp[0, 1]
    for t in range(1, T):
        stay = a
        from_prev = np.concatenate(([neg], a[:-1]))
        # Skip from s-2 is legal into any non-blank state: the extended
        # labels at s and s-2 are distinct phone positions.
        from_skip = np.concatenate(([neg, neg], a[:-2]))
        from_skip[0::2] = neg
        a = state_logp[t] + np.logaddexp(np.logaddexp(stay, from_prev), from_skip)

    total = np.logaddexp(a[S - 1], a[S - 2])
    return float(-total)


def dtw_forced_decode(logP, transcript: PhoneSeq) -> AlignmentPath:
    """Best monotonic alignment of a transcript to per-frame log-posteriors.

    ``logP`` is T x V over the inventory; the path maximizes the summed
    log-posterior of the transcript phone at each frame.  Ties are broken by
    staying on the current phone as long as possible (transitions happen as
    late as possible).
    """
    logP = _as_array(logP)
    if logP.ndim != 2:
        raise InvalidInput(f"logP must be 2-d, got shape {logP.shape}")
    T, V = logP.shape
    N = len(transcript)
    if T < N:
        raise Infeasible(f"{T} frames cannot cover {N} phones")
    if max(transcript.phones) >= V:
        raise InvalidInput("transcript index outside posterior columns")

    S = logP[:, list(transcript.phones)]  # T x N
    neg = -np.inf
    D = np.full((T, N), neg)
    D[0, 0] = S[0, 0]
    for t in range(1, T):
        prev = D[t - 1]
        shifted = np.concatenate(([neg], prev[:-1]))
        D[t] = S[t] + np.maximum(prev, shifted)

    path = np.empty(T, dtype=np.int64)
    n = N - 1
    for t in range(T - 1, 0, -1):
        path[t] = n
        # Preferring the advance predecessor on ties delays the transition,
        # keeping the path on each phone as long as possible.
        if n > 0 and D[t - 1, n - 1] >= D[t - 1, n]:
            n -= 1
    path[0] = n
    return AlignmentPath(path, float(D[T - 1, N - 1]))


def argmax_decode(A, transcript: PhoneSeq, frame_shift_ms: float | None = None) -> FrameLabels:
    """Label each frame with the transcript phone of its attention argmax.

    ``A`` is N x T column-stochastic attention; ties go to the lower phone
    position.  Monotonicity is not enforced; use diagonality_score to
    measure it.
    """
    if isinstance(A, FrameMatrix):
        if frame_shift_ms is None:
            frame_shift_ms = A.frame_shift_ms
        A = np.asarray(A.values)
    else:
        A = np.asarray(A, dtype=np.float64)
        if frame_shift_ms is None:
            raise InvalidInput("frame_shift_ms required when A is a bare array")
    if A.ndim != 2 or A.shape[0] != len(transcript):
        raise InvalidInput(
            f"attention is {A.shape}, transcript has {len(transcript)} phones"
        )
    positions = np.argmax(A, axis=0)
    phones = np.array(transcript.phones, dtype=np.int64)
    return FrameLabels(phones[positions], frame_shift_ms, transcript.inventory)


def ctc_greedy_decode(logP, inventory) -> PhoneSeq:
    """Greedy CTC decoding: per-frame argmax, collapse repeats, drop blanks.

    ``logP`` is T x (V+1) with the blank as the last column; V must match
    the inventory size.  An all-blank result raises EmptyDecode.
    """
    logP = _as_array(logP)
    if logP.ndim != 2 or logP.shape[1] != len(inventory) + 1:
        raise InvalidInput(
            f"logP is {logP.shape}, expected T x {len(inventory) + 1} (blank last)"
        )
    blank = len(inventory)
    best = np.argmax(logP, axis=1)
    phones = []
    prev = -1
    for b in best:
        if b != prev and b != blank:
            phones.append(int(b))
        prev = b
    if not phones:
        raise EmptyDecode("greedy decoding produced only blanks")
    return PhoneSeq(tuple(phones), inventory)


def diagonality_score(A) -> float:
    """How monotonic and sharp an attention matrix is, in [0, 1].

    The fraction of adjacent frame pairs whose argmax phone position does
    not decrease, times the mean per-column maximum probability.  Equals 1.0
    exactly when the attention is one-hot and monotonic.
    """
    A = _as_array(A)
    if A.ndim != 2:
        raise InvalidInput(f"attention must be 2-d, got shape {A.shape}")
    positions = np.argmax(A, axis=0)
    if positions.size > 1:
        monotone = float(np.mean(np.diff(positions) >= 0))
    else:
        monotone = 1.0
    sharpness = float(np.mean(np.max(A, axis=0)))
    return monotone * sharpness


def path_to_tier(path: AlignmentPath, transcript: PhoneSeq, frame_shift_ms: float) -> SegmentTier:
    """Convert an alignment path into a segment tier, one segment per phone.

    Segments follow transcript positions, so adjacent repeats in the
    transcript stay separate segments.
    """
    pos = path.frame_to_phone
    if pos[-1] != len(transcript) - 1:
        raise InvalidInput("path does not reach the final transcript position")
    change = np.flatnonzero(np.diff(pos)) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [pos.size]))
    segs = tuple(
        Segment(transcript.phones[pos[a]], a * frame_shift_ms, b * frame_shift_ms)
        for a, b in zip(starts, ends)
    )
    return SegmentTier(segs, pos.size * frame_shift_ms, transcript.inventory)
