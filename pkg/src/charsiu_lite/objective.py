"""The training objective: attention fusion, masked contrastive loss,
forward-sum coupling, and the masking sampler.

Gradients are computed analytically (no autodiff) and are verified against
central finite differences in the test suite.  All functions are pure given
explicit seeds; there is no hidden RNG state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import FrameMatrix
from .errors import InvalidInput, InvalidNegatives
from .lattice import forward_sum_loss

# Time-mask span length in frames (spectral-augmentation convention).
MASK_SPAN = 10


def _check_matrix(name: str, a: np.ndarray, ndim: int) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    if a.ndim != ndim:
        raise InvalidInput(f"{name} must be {ndim}-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} contains non-finite values")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EncodedPhones:
    """Phone embeddings, one K-vector per transcript position (K x N)."""

    Y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Y", _check_matrix("Y", self.Y, 2))
        if self.Y.shape[1] < 1:
            raise InvalidInput("need at least one phone")


@dataclass(frozen=True, eq=False)
class EncodedFrames:
    """Masked frame representations (K x T) plus the time mask that made them."""

    Xhat: np.ndarray
    mask: np.ndarray | None = None
    frame_shift_ms: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "Xhat", _check_matrix("Xhat", self.Xhat, 2))
        T = self.Xhat.shape[1]
        mask = self.mask
        if mask is None:
            mask = np.zeros(T, dtype=bool)
        else:
            mask = np.array(mask, dtype=bool)
            if mask.shape != (T,):
                raise InvalidInput(f"mask length {mask.shape} does not match T={T}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        if not self.frame_shift_ms > 0:
            raise InvalidInput("frame_shift_ms must be positive")


@dataclass(frozen=True, eq=False)
class ProjectionHeads:
    """The two dense maps f_y and f_x applied before the similarity product."""

    Wy: np.ndarray
    by: np.ndarray
    Wx: np.ndarray
    bx: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Wy", _check_matrix("Wy", self.Wy, 2))
        object.__setattr__(self, "by", _check_matrix("by", self.by, 1))
        object.__setattr__(self, "Wx", _check_matrix("Wx", self.Wx, 2))
        object.__setattr__(self, "bx", _check_matrix("bx", self.bx, 1))
        if self.Wy.shape[0] != self.by.shape[0] or self.Wx.shape[0] != self.bx.shape[0]:
            raise InvalidInput("bias length must match the projection output dim")


@dataclass(frozen=True, eq=False)
class DenseProjection:
    """Trainable linear map from fused states (2K) down to codeword space (K)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", _check_matrix("W", self.W, 2))
        object.__setattr__(self, "b", _check_matrix("b", self.b, 1))
        if self.W.shape[0] != self.b.shape[0]:
            raise InvalidInput("bias length must match the projection output dim")


@dataclass(frozen=True, eq=False)
class Codebook:
    """Frozen quantized embeddings, one unit-norm row per codeword (M x K)."""

    Q: np.ndarray
    frozen: bool = True

    def __post_init__(self):
        object.__setattr__(self, "Q", _check_matrix("Q", self.Q, 2))
        if not self.frozen:
            raise InvalidInput("the codebook is always frozen")
        norms = np.linalg.norm(self.Q, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise InvalidInput("codebook rows must have unit norm")

    def __len__(self) -> int:
        return self.Q.shape[0]


@dataclass(frozen=True)
class LossConfig:
    """Objective hyperparameters.

    ``lambda_`` is the forward-sum weight (serialized under the JSON key
    "lambda"); masking percentages are fractions in [0, 1].
    """

    kappa: float = 0.1
    lambda_: float = 1.0
    negatives: int = 50
    p_low: float = 0.05
    p_high: float = 0.2
    feature_mask_frac: float = 0.1

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidInput("kappa must be positive")
        if self.lambda_ < 0:
            raise InvalidInput("lambda must be non-negative")
        if not (isinstance(self.negatives, int) and self.negatives >= 1):
            raise InvalidInput("negatives must be a positive integer")
        if not 0 <= self.p_low <= self.p_high <= 1:
            raise InvalidInput("need 0 <= p_low <= p_high <= 1")
        if not 0 <= self.feature_mask_frac <= 1:
            raise InvalidInput("feature_mask_frac must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "kappa": self.kappa,
                "lambda": self.lambda_,
                "negatives": self.negatives,
                "p_low": self.p_low,
                "p_high": self.p_high,
                "feature_mask_frac": self.feature_mask_frac,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LossConfig":
        d = json.loads(text)
        return cls(
            kappa=d["kappa"],
            lambda_=d["lambda"],
            negatives=d["negatives"],
            p_low=d["p_low"],
            p_high=d["p_high"],
            feature_mask_frac=d["feature_mask_frac"],
        )


@dataclass(frozen=True, eq=False)
class ContrastiveGrad:
    """Gradients of the contrastive loss: w.r.t. H, and the projection if used."""

    dH: np.ndarray
    dW: np.ndarray | None = None
    db: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class CombinedGrads:
    dY: np.ndarray
    dXhat: np.ndarray
    dWy: np.ndarray
    dby: np.ndarray
    dWx: np.ndarray
    dbx: np.ndarray
    dW_proj: np.ndarray
    db_proj: np.ndarray


@dataclass(frozen=True, eq=False)
class LossReport:
    """Scalar losses plus all parameter gradients from one combined pass."""

    loss: float
    loss_m: float
    loss_fs: float
    grads: CombinedGrads


def similarity_matrix(Y: EncodedPhones, Xhat: EncodedFrames, heads: ProjectionHeads) -> FrameMatrix:
    """D[i, j] = f_y(y_i) . f_x(x_j), an N x T similarity matrix."""
    K = Y.Y.shape[0]
    if Xhat.Xhat.shape[0] != K:
        raise InvalidInput("phone and frame embeddings must share dimension K")
    if heads.Wy.shape[1] != K or heads.Wx.shape[1] != K:
        raise InvalidInput("projection heads must accept dimension K")
    Fy = heads.Wy @ Y.Y + heads.by[:, None]
    Fx = heads.Wx @ Xhat.Xhat + heads.bx[:, None]
    return FrameMatrix(Fy.T @ Fx, Xhat.frame_shift_ms, "similarity")


def attention_from_similarity(D: FrameMatrix) -> FrameMatrix:
    """Column-wise softmax over the phone axis."""
    v = np.asarray(D.values if isinstance(D, FrameMatrix) else D, dtype=np.float64)
    shift = D.frame_shift_ms if isinstance(D, FrameMatrix) else 20.0
    e = np.exp(v - v.max(axis=0, keepdims=True))
    A = e / e.sum(axis=0, keepdims=True)
    return FrameMatrix(A, shift, "attention")


def fuse_states(Xhat: EncodedFrames, Y: EncodedPhones, A) -> np.ndarray:
    """H = [Xhat stacked on Y @ A], a 2K x T matrix."""
    Av = np.asarray(A.values if isinstance(A, FrameMatrix) else A, dtype=np.float64)
    if Y.Y.shape[0] != Xhat.Xhat.shape[0]:
        raise InvalidInput("phone and frame embeddings must share dimension K")
    if Av.shape != (Y.Y.shape[1], Xhat.Xhat.shape[1]):
        raise InvalidInput(
            f"attention is {Av.shape}, expected {(Y.Y.shape[1], Xhat.Xhat.shape[1])}"
        )
    return np.vstack([Xhat.Xhat, Y.Y @ Av])


def _candidate_indices(targets, negatives, T: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    targets = np.asarray(targets, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64)
    if targets.shape != (T,):
        raise InvalidInput(f"targets shape {targets.shape}, expected ({T},)")
    if negatives.ndim != 2 or negatives.shape[0] != T:
        raise InvalidInput(f"negatives shape {negatives.shape}, expected ({T}, n)")
    if targets.min() < 0 or targets.max() >= M:
        raise InvalidInput("target index outside the codebook")
    if negatives.min() < 0 or negatives.max() >= M:
        raise InvalidInput("negative index outside the codebook")
    if np.any(negatives == targets[:, None]):
        raise InvalidNegatives("a negative set contains its positive index")
    return targets, negatives


def _contrastive_core(Z, codebook, targets, negatives, cfg, mask, similarity):
    """Loss over masked frames and its gradient w.r.t. Z (K x T)."""
    if similarity not in ("cosine", "dot"):
        raise InvalidInput(f"unknown similarity {similarity!r}")
    K, T = Z.shape
    Q = codebook.Q
    if Q.shape[1] != K:
        raise InvalidInput("codeword dimension does not match the compared states")
    targets, negatives = _candidate_indices(targets, negatives, T, len(codebook))
    if negatives.shape[1] != cfg.negatives:
        raise InvalidInput(
            f"{negatives.shape[1]} negatives per frame, config says {cfg.negatives}"
        )
    if mask is None:
        mask = np.ones(T, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (T,):
            raise InvalidInput("mask length must match T")

    dZ = np.zeros_like(Z)
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return 0.0, dZ
    # Candidate rows per masked frame: positive first, then the negatives.
    cand = np.concatenate([targets[idx, None], negatives[idx]], axis=1)  # m x (n+1)
    Qc = Q[cand]  # m x (n+1) x K
    Zm = Z[:, idx].T  # m x K
    if similarity == "cosine":
        nz = np.maximum(np.linalg.norm(Zm, axis=1, keepdims=True), 1e-12)  # m x 1
        Zh = Zm / nz
        sims = np.einsum("mk,mck->mc", Zh, Qc)
    else:
        sims = np.einsum("mk,mck->mc", Zm, Qc)
    logits = sims / cfg.kappa
    lmax = logits.max(axis=1, keepdims=True)
    lse = lmax[:, 0] + np.log(np.exp(logits - lmax).sum(axis=1))
    losses = lse - logits[:, 0]
    m = idx.size
    loss = float(losses.sum() / m)

    p = np.exp(logits - lse[:, None])  # softmax over candidates
    w = p.copy()
    w[:, 0] -= 1.0
    w /= cfg.kappa * m  # m x (n+1)
    if similarity == "cosine":
        # d sim_c / d z = (q_c - sim_c * zh) / ||z||
        dZh = np.einsum("mc,mck->mk", w, Qc)
        proj = (w * sims).sum(axis=1, keepdims=True)  # m x 1
        dz = (dZh - proj * Zh) / nz
    else:
        dz = np.einsum("mc,mck->mk", w, Qc)
    dZ[:, idx] = dz.T
    return loss, dZ


def contrastive_loss(
    H,
    codebook: Codebook,
    targets,
    negatives,
    cfg: LossConfig,
    proj: DenseProjection | None = None,
    mask=None,
    similarity: str = "cosine",
) -> tuple[float, ContrastiveGrad]:
    """Masked contrastive loss over codebook candidates.

    Each masked frame's state is compared (cosine by default, "dot"
    optionally) against its positive codeword and ``cfg.negatives``
    negatives; the temperature-scaled softmax cross-entropy is averaged over
    masked frames only.  ``mask=None`` scores every frame.  When ``proj`` is
    given, H (2K x T) is first mapped down to codeword space and the
    returned gradients include dW/db for the projection.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2:
        raise InvalidInput(f"H must be 2-d, got shape {H.shape}")
    if proj is not None:
        if proj.W.shape[1] != H.shape[0]:
            raise InvalidInput("projection input dim does not match H")
        Z = proj.W @ H + proj.b[:, None]
    else:
        Z = H
    loss, dZ = _contrastive_core(Z, codebook, targets, negatives, cfg, mask, similarity)
    if proj is not None:
        return loss, ContrastiveGrad(
            dH=proj.W.T @ dZ, dW=dZ @ H.T, db=dZ.sum(axis=1)
        )
    return loss, ContrastiveGrad(dH=dZ)


def combined_loss(
    Y: EncodedPhones,
    Xhat: EncodedFrames,
    heads: ProjectionHeads,
    targets,
    negatives,
    cfg: LossConfig,
    codebook: Codebook,
    proj: DenseProjection,
    similarity: str = "cosine",
    contrastive_weight: float = 1.0,
) -> LossReport:
    """Full objective: masked contrastive term plus lambda times forward-sum.

    Runs similarity, column softmax, fusion, projection, the contrastive
    term over masked frames, and the forward-sum term over the attention
    columns; returns both scalar losses and analytic gradients for every
    trainable array.  ``contrastive_weight`` scales the contrastive term
    (used by ablations; the forward-sum weight is ``cfg.lambda_``).
    """
    K, N = Y.Y.shape
    T = Xhat.Xhat.shape[1]
    Yv, Xv = Y.Y, Xhat.Xhat
    if Xv.shape[0] != K:
        raise InvalidInput("phone and frame embeddings must share dimension K")
    if heads.Wy.shape[1] != K or heads.Wx.shape[1] != K:
        raise InvalidInput("projection heads must accept dimension K")
    if proj.W.shape[1] != 2 * K:
        raise InvalidInput("fused-state projection must accept dimension 2K")
    Fy = heads.Wy @ Yv + heads.by[:, None]
    Fx = heads.Wx @ Xv + heads.bx[:, None]
    D = Fy.T @ Fx  # N x T
    logA = D - _logsumexp_cols(D)
    A = np.exp(logA)
    H = np.vstack([Xv, Yv @ A])
    Z = proj.W @ H + proj.b[:, None]

    loss_m, dZ = _contrastive_core(
        Z, codebook, targets, negatives, cfg, Xhat.mask, similarity
    )
    lam = cfg.lambda_
    cw = contrastive_weight
    if lam > 0:
        loss_fs, fs_grad = forward_sum_loss(logA.T, validate=False)
        dLogA = fs_grad.d_logA.T  # N x T
    else:
        loss_fs = 0.0
        dLogA = np.zeros_like(A)

    # Contrastive path back through projection and fusion.
    dW_proj = dZ @ H.T
    db_proj = dZ.sum(axis=1)
    dH = proj.W.T @ dZ
    dXh_m = dH[:K]
    dC = dH[K:]  # gradient w.r.t. Y @ A
    dY_m = dC @ A.T
    dA_m = Yv.T @ dC

    # Both loss terms meet at the similarity matrix: the forward-sum term
    # contributes through log-softmax, the contrastive term through softmax.
    t_fs = dLogA - A * dLogA.sum(axis=0, keepdims=True)
    t_m = A * (dA_m - (A * dA_m).sum(axis=0, keepdims=True))
    dD = lam * t_fs + cw * t_m

    dFy = Fx @ dD.T
    dFx = Fy @ dD
    grads = CombinedGrads(
        dY=cw * dY_m + heads.Wy.T @ dFy,
        dXhat=cw * dXh_m + heads.Wx.T @ dFx,
        dWy=dFy @ Yv.T,
        dby=dFy.sum(axis=1),
        dWx=dFx @ Xv.T,
        dbx=dFx.sum(axis=1),
        dW_proj=cw * dW_proj,
        db_proj=cw * db_proj,
    )
    total = cw * loss_m + lam * loss_fs
    return LossReport(loss=float(total), loss_m=float(loss_m), loss_fs=float(loss_fs), grads=grads)


def _logsumexp_cols(D: np.ndarray) -> np.ndarray:
    m = D.max(axis=0, keepdims=True)
    return m + np.log(np.exp(D - m).sum(axis=0, keepdims=True))


def sample_masking(T: int, K: int, cfg: LossConfig, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw the time and feature masks for one batch.

    The time-mask probability p is drawn uniformly from the integer percent
    grid [round(100 p_low), round(100 p_high)]; each frame starts a masked
    span of MASK_SPAN frames with probability p/100.  Feature masking
    blanks one contiguous block of ceil(feature_mask_frac * K) channels.
    Deterministic given the seed.
    """
    if T < 1 or K < 1:
        raise InvalidInput("T and K must be at least 1")
    rng = np.random.default_rng(seed)
    lo = round(100 * cfg.p_low)
    hi = round(100 * cfg.p_high)
    p = int(rng.integers(lo, hi + 1))
    starts = rng.random(T) < (p / 100.0)
    time_mask = np.zeros(T, dtype=bool)
    for i in np.flatnonzero(starts):
        time_mask[i : i + MASK_SPAN] = True
    feature_mask = np.zeros(K, dtype=bool)
    n_ch = math.ceil(cfg.feature_mask_frac * K)
    if n_ch > 0:
        f_start = int(rng.integers(0, K - n_ch + 1))
        feature_mask[f_start : f_start + n_ch] = True
    return time_mask, feature_mask


def sample_negatives(targets, codebook_size: int, n: int, seed) -> np.ndarray:
    """Uniform negatives without replacement, excluding each frame's positive.

    Needs codebook_size >= n + 1.  Returns a T x n index matrix,
    deterministic given the seed.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if codebook_size < n + 1:
        raise InvalidInput(f"codebook of {codebook_size} cannot supply {n} negatives")
    rng = np.random.default_rng(seed)
    out = np.empty((targets.size, n), dtype=np.int64)
    for t, pos in enumerate(targets):
        draw = rng.choice(codebook_size - 1, size=n, replace=False)
        draw[draw >= pos] += 1  # skip over the positive index
        out[t] = draw
    return out
