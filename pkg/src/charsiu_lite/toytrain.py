"""Desk-scale training: synthetic corpora, toy encoders, curriculum, and the
frame-classification bootstrap.

The corpus places each utterance's frames near unit-norm phone prototypes,
so alignment structure is learnable by a small model.  Training is plain SGD
with a fixed learning rate, single-threaded, and bit-reproducible given
(seed, config).  The encoder is a 2-layer affine+tanh map; the point under
test is the loss geometry, not encoder capacity.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from scipy.special import logsumexp

from .core import (
    FrameLabels,
    FrameMatrix,
    PhoneInventory,
    PhoneSeq,
    labels_to_segments,
)
from .errors import InvalidInput, TrainingDiverged
from .lattice import argmax_decode, diagonality_score, dtw_forced_decode
from .metrics import EvalReport, batch_eval
from .objective import (
    Codebook,
    CombinedGrads,
    DenseProjection,
    EncodedFrames,
    EncodedPhones,
    LossConfig,
    ProjectionHeads,
    attention_from_similarity,
    combined_loss,
    sample_masking,
    sample_negatives,
    similarity_matrix,
)

# Duration bookkeeping for the curriculum: durations are frame counts
# divided by this frames-per-second constant.
FPS = 100


@dataclass(frozen=True, eq=False)
class Utterance:
    """Clean features (T x K), the phone sequence, and its true frame labels."""

    features: np.ndarray
    phones: PhoneSeq
    labels: FrameLabels

    def __post_init__(self):
        feats = np.array(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != len(self.labels):
            raise InvalidInput("features must be T x K with T matching the labels")
        runs_at = np.concatenate(([0], np.flatnonzero(np.diff(self.labels.labels)) + 1))
        if not np.array_equal(self.labels.labels[runs_at], np.array(self.phones.phones)):
            raise InvalidInput("frame labels do not realize the phone sequence in order")
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class SyntheticCorpus:
    utterances: tuple[Utterance, ...]
    inventory: PhoneInventory
    frame_shift_ms: float
    noise_sigma: float
    prototypes: np.ndarray  # V x K, unit rows

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise InvalidInput("corpus needs at least one utterance")
        protos = np.array(self.prototypes, dtype=np.float64)
        if protos.ndim != 2 or protos.shape[0] != len(self.inventory):
            raise InvalidInput("need one prototype row per inventory symbol")
        for u in self.utterances:
            if u.labels.frame_shift_ms != self.frame_shift_ms:
                raise InvalidInput("utterance frame shift differs from the corpus")
            if u.features.shape[1] != protos.shape[1]:
                raise InvalidInput("utterance feature dim differs from the prototypes")
        protos.setflags(write=False)
        object.__setattr__(self, "prototypes", protos)

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def durations_s(self) -> tuple[float, ...]:
        return tuple(len(u) / FPS for u in self.utterances)


@dataclass(frozen=True)
class CurriculumPlan:
    """Ascending duration cutoffs and the utterance ids assigned to each chunk."""

    thresholds_s: tuple[float, ...]
    chunks: tuple[tuple[int, ...], ...]
    dropped: tuple[int, ...] = ()


@dataclass(eq=False)
class ToyModel:
    """Trainable state: embeddings, encoder, heads, projection, frozen codebook."""

    embed: np.ndarray  # V x K phone embedding table
    enc_W1: np.ndarray
    enc_b1: np.ndarray
    enc_W2: np.ndarray
    enc_b2: np.ndarray
    heads: ProjectionHeads
    proj: DenseProjection
    codebook: Codebook
    cfg: LossConfig


@dataclass(eq=False)
class FCModel:
    """Frame classifier: the same encoder shape plus a linear layer over phones."""

    enc_W1: np.ndarray
    enc_b1: np.ndarray
    enc_W2: np.ndarray
    enc_b2: np.ndarray
    out_W: np.ndarray  # V x K
    out_b: np.ndarray
    inventory: PhoneInventory
    frame_shift_ms: float


def make_inventory(V: int) -> PhoneInventory:
    """A synthetic inventory of V symbols P00, P01, ..."""
    if V < 1:
        raise InvalidInput("V must be at least 1")
    return PhoneInventory(tuple(f"P{i:02d}" for i in range(V)))


def phone_prototypes(V: int, K: int, seed) -> np.ndarray:
    """V unit-norm K-vectors in confusable pairs, deterministic per seed.

    Consecutive prototypes (0,1), (2,3), ... share a base direction and
    differ by a small orthogonal offset, so telling pair members apart takes
    a sharper frame representation than telling arbitrary phones apart.
    With an odd V the last prototype is unpaired.
    """
    rng = np.random.default_rng([seed, 101])
    bases = rng.standard_normal(((V + 1) // 2, K))
    bases /= np.linalg.norm(bases, axis=1, keepdims=True)
    offsets = rng.standard_normal(((V + 1) // 2, K))
    offsets -= (offsets * bases).sum(axis=1, keepdims=True) * bases
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    protos = np.empty((V, K))
    protos[0::2] = bases[: (V + 1) // 2] + 0.15 * offsets[: (V + 1) // 2]
    protos[1::2] = bases[: V // 2] - 0.15 * offsets[: V // 2]
    return protos / np.linalg.norm(protos, axis=1, keepdims=True)


def generate_corpus(
    inventory: PhoneInventory,
    count: int,
    seed,
    noise_sigma: float = 0.05,
    dur_range: tuple[int, int] = (2, 6),
    len_range: tuple[int, int] = (3, 10),
    frame_shift_ms: float = 20.0,
    feature_dim: int = 16,
    prototype_seed=None,
) -> SyntheticCorpus:
    """Sample a synthetic corpus around unit-norm phone prototypes.

    Each utterance draws N distinct phones (distinct because the toy phone
    encoder is a plain embedding table, so repeated phones would be
    indistinguishable to the attention), per-phone durations in dur_range
    frames, and frame features prototype + Gaussian noise.  Per-utterance
    seeds derive from (seed, utterance id), so generation is reproducible
    and parallelizable.  ``prototype_seed`` (default: ``seed``) keeps the
    prototype set fixed across corpora, e.g. for a held-out split drawn
    from the same phones.
    """
    V = len(inventory)
    if count < 1:
        raise InvalidInput("count must be at least 1")
    if not (1 <= dur_range[0] <= dur_range[1]):
        raise InvalidInput("invalid dur_range")
    if not (1 <= len_range[0] <= len_range[1] <= V):
        raise InvalidInput("len_range must fit within the inventory (distinct phones)")
    protos = phone_prototypes(V, feature_dim, seed if prototype_seed is None else prototype_seed)
    utts = []
    for i in range(count):
        rng = np.random.default_rng([seed, 202, i])
        n = int(rng.integers(len_range[0], len_range[1] + 1))
        phones = rng.choice(V, size=n, replace=False)
        durs = rng.integers(dur_range[0], dur_range[1] + 1, size=n)
        labels = np.repeat(phones, durs)
        feats = protos[labels] + noise_sigma * rng.standard_normal((labels.size, feature_dim))
        utts.append(
            Utterance(
                features=feats,
                phones=PhoneSeq(tuple(int(p) for p in phones), inventory),
                labels=FrameLabels(labels, frame_shift_ms, inventory),
            )
        )
    return SyntheticCorpus(tuple(utts), inventory, frame_shift_ms, noise_sigma, protos)


def upsample_corpus(corpus: SyntheticCorpus) -> SyntheticCorpus:
    """Double the frame rate by repeating every frame twice (halved shift)."""
    shift = corpus.frame_shift_ms / 2.0
    utts = []
    for u in corpus.utterances:
        utts.append(
            Utterance(
                features=np.repeat(u.features, 2, axis=0),
                phones=u.phones,
                labels=FrameLabels(np.repeat(u.labels.labels, 2), shift, corpus.inventory),
            )
        )
    return SyntheticCorpus(
        tuple(utts), corpus.inventory, shift, corpus.noise_sigma, corpus.prototypes
    )


def make_codebook(prototypes: np.ndarray, extra: int, seed) -> Codebook:
    """Frozen codebook: the unit prototypes plus ``extra`` random unit rows."""
    if extra < 0:
        raise InvalidInput("extra must be non-negative")
    rows = [np.asarray(prototypes, dtype=np.float64)]
    if extra:
        rng = np.random.default_rng([seed, 303])
        r = rng.standard_normal((extra, prototypes.shape[1]))
        rows.append(r / np.linalg.norm(r, axis=1, keepdims=True))
    Q = np.vstack(rows)
    Q = Q / np.linalg.norm(Q, axis=1, keepdims=True)
    return Codebook(Q)


def quantize_targets(features: np.ndarray, codebook: Codebook) -> np.ndarray:
    """Index of the codeword nearest each clean frame feature.

    Codewords have unit norm, so the nearest-by-Euclidean codeword is the
    one with the largest dot product.
    """
    return np.argmax(np.asarray(features) @ codebook.Q.T, axis=1).astype(np.int64)


def init_toy_model(V: int, K: int, cfg: LossConfig, codebook: Codebook, seed) -> ToyModel:
    """Near-identity encoder and heads, small random phone embeddings."""
    rng = np.random.default_rng([seed, 11])
    eye = np.eye(K)

    def jitter(shape):
        return 0.05 * rng.standard_normal(shape)

    return ToyModel(
        embed=rng.standard_normal((V, K)) / math.sqrt(K),
        enc_W1=eye + jitter((K, K)),
        enc_b1=np.zeros(K),
        enc_W2=eye + jitter((K, K)),
        enc_b2=np.zeros(K),
        heads=ProjectionHeads(
            Wy=eye + jitter((K, K)),
            by=np.zeros(K),
            Wx=eye + jitter((K, K)),
            bx=np.zeros(K),
        ),
        proj=DenseProjection(
            W=0.5 * np.hstack([eye, eye]) + jitter((K, 2 * K)),
            b=np.zeros(K),
        ),
        codebook=codebook,
        cfg=cfg,
    )


def plan_curriculum(durations_s, thresholds_s) -> CurriculumPlan:
    """Assign each utterance to the first chunk whose threshold covers it.

    Utterances longer than the last threshold are dropped; a warning reports
    how many.
    """
    thresholds = tuple(float(t) for t in thresholds_s)
    if not thresholds:
        raise InvalidInput("need at least one duration threshold")
    if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidInput("thresholds must be strictly ascending")
    chunks: list[list[int]] = [[] for _ in thresholds]
    dropped: list[int] = []
    for i, dur in enumerate(durations_s):
        for k, th in enumerate(thresholds):
            if dur <= th:
                chunks[k].append(i)
                break
        else:
            dropped.append(i)
    if dropped:
        warnings.warn(
            f"{len(dropped)} utterances exceed the last threshold and were dropped",
            stacklevel=2,
        )
    return CurriculumPlan(
        thresholds_s=thresholds,
        chunks=tuple(tuple(c) for c in chunks),
        dropped=tuple(dropped),
    )


def _encode(W1, b1, W2, b2, X):
    """Two affine layers with a tanh between; returns (output, hidden)."""
    H1 = np.tanh(W1 @ X + b1[:, None])
    return W2 @ H1 + b2[:, None], H1


def _encoder_backprop(W2, H1, X, d_out):
    dW2 = d_out @ H1.T
    db2 = d_out.sum(axis=1)
    dpre = (W2.T @ d_out) * (1.0 - H1**2)
    dW1 = dpre @ X.T
    db1 = dpre.sum(axis=1)
    return dW1, db1, dW2, db2


_CLIP_NORM = 5.0


def _fs_step(model, utt, targets, lr, mask_seed, neg_seed, contrastive_weight):
    X = utt.features.T  # K x T
    K, T = X.shape
    time_mask, feat_mask = sample_masking(T, K, model.cfg, mask_seed)
    Xm = X.copy()
    Xm[:, time_mask] = 0.0
    Xm[feat_mask, :] = 0.0
    Xhat, H1 = _encode(model.enc_W1, model.enc_b1, model.enc_W2, model.enc_b2, Xm)
    phone_idx = np.array(utt.phones.phones, dtype=np.int64)
    Yv = model.embed[phone_idx].T  # K x N

    negatives = sample_negatives(targets, len(model.codebook), model.cfg.negatives, neg_seed)
    # The alignment loss sums over frames, so its gradient scales with T;
    # weight it per frame to keep one learning rate across utterance lengths.
    cfg = replace(model.cfg, lambda_=model.cfg.lambda_ / T)
    # The encoder is pointwise, so a fully hidden frame is unpredictable from
    # its own (zeroed) column; the learnable prediction task here is on the
    # visible frames, whose features are still noisy and channel-masked.
    report = combined_loss(
        EncodedPhones(Yv),
        EncodedFrames(Xhat, ~time_mask, utt.labels.frame_shift_ms),
        model.heads,
        targets,
        negatives,
        cfg,
        model.codebook,
        model.proj,
        contrastive_weight=contrastive_weight,
    )
    g = report.grads
    dW1, db1, dW2, db2 = _encoder_backprop(model.enc_W2, H1, Xm, g.dXhat)
    dembed = np.zeros_like(model.embed)
    np.add.at(dembed, phone_idx, g.dY.T)

    grads = [dembed, dW1, db1, dW2, db2, g.dWy, g.dby, g.dWx, g.dbx, g.dW_proj, g.db_proj]
    total = math.sqrt(sum(float(np.sum(gr * gr)) for gr in grads))
    if total > _CLIP_NORM:
        scale = _CLIP_NORM / total
        grads = [gr * scale for gr in grads]
    (dembed, dW1, db1, dW2, db2, dWy, dby, dWx, dbx, dW_proj, db_proj) = grads
    g = CombinedGrads(
        dY=g.dY, dXhat=g.dXhat, dWy=dWy, dby=dby, dWx=dWx, dbx=dbx,
        dW_proj=dW_proj, db_proj=db_proj,
    )

    model.embed -= lr * dembed
    model.enc_W1 -= lr * dW1
    model.enc_b1 -= lr * db1
    model.enc_W2 -= lr * dW2
    model.enc_b2 -= lr * db2
    model.heads = ProjectionHeads(
        Wy=model.heads.Wy - lr * g.dWy,
        by=model.heads.by - lr * g.dby,
        Wx=model.heads.Wx - lr * g.dWx,
        bx=model.heads.bx - lr * g.dbx,
    )
    model.proj = DenseProjection(
        W=model.proj.W - lr * g.dW_proj,
        b=model.proj.b - lr * g.db_proj,
    )
    return report


def attention_for(model: ToyModel, utt: Utterance) -> FrameMatrix:
    """Inference-time attention (no masking) for one utterance."""
    Xhat, _ = _encode(
        model.enc_W1, model.enc_b1, model.enc_W2, model.enc_b2, utt.features.T
    )
    Yv = model.embed[np.array(utt.phones.phones)].T
    D = similarity_matrix(
        EncodedPhones(Yv),
        EncodedFrames(Xhat, None, utt.labels.frame_shift_ms),
        model.heads,
    )
    return attention_from_similarity(D)


def corpus_diagonality(model: ToyModel, corpus: SyntheticCorpus) -> float:
    return float(
        np.mean([diagonality_score(attention_for(model, u)) for u in corpus.utterances])
    )


def decode_utterance(model: ToyModel, utt: Utterance) -> FrameLabels:
    return argmax_decode(attention_for(model, utt), utt.phones)


def forced_decode_utterance(model: ToyModel, utt: Utterance) -> FrameLabels:
    """Best monotone path through the attention, as frame labels.

    Scatters the log-attention rows onto their phone columns (transcript
    phones are distinct here) so the shared forced decoder can run on it.
    """
    Xhat, _ = _encode(
        model.enc_W1, model.enc_b1, model.enc_W2, model.enc_b2, utt.features.T
    )
    ids = np.array(utt.phones.phones, dtype=np.int64)
    Yv = model.embed[ids].T
    shift = utt.labels.frame_shift_ms
    D = similarity_matrix(
        EncodedPhones(Yv), EncodedFrames(Xhat, None, shift), model.heads
    ).values
    logA = D - logsumexp(D, axis=0, keepdims=True)  # N x T
    T = logA.shape[1]
    logP = np.full((T, len(model.embed)), -1e9)
    logP[:, ids] = logA.T
    path = dtw_forced_decode(logP, utt.phones)
    return FrameLabels(ids[path.frame_to_phone], shift, utt.phones.inventory)


def corpus_boundary_report(model: ToyModel, corpus: SyntheticCorpus, tol_frames: int = 2) -> EvalReport:
    """Boundary scores of the forced decode against ground truth."""
    shift = corpus.frame_shift_ms
    pairs = [
        (labels_to_segments(u.labels), labels_to_segments(forced_decode_utterance(model, u)))
        for u in corpus.utterances
    ]
    return batch_eval(pairs, tolerance_ms=tol_frames * shift, grid_ms=shift)


def train_fs(
    model: ToyModel,
    corpus: SyntheticCorpus,
    plan: CurriculumPlan,
    steps_per_chunk: int,
    lr: float,
    seed,
    eval_every: int = 100,
    contrastive_weight: float = 1.0,
):
    """Two-phase curriculum training through the combined objective.

    Phase 1 walks the chunks in ascending order on the base corpus; phase 2
    doubles the frame rate (the upsampling analogue) and walks them again.
    Returns (model, history); history holds one record per evaluation
    interval with keys step, loss_m, loss_fs, diagonality.  Non-finite loss
    raises TrainingDiverged with the step index.
    """
    history: list[dict] = []
    if steps_per_chunk <= 0:
        return model, history
    rng = np.random.default_rng([seed, 23])
    step = 0
    acc_m: list[float] = []
    acc_fs: list[float] = []
    for phase_corpus in (corpus, upsample_corpus(corpus)):
        targets = [quantize_targets(u.features, model.codebook) for u in phase_corpus.utterances]
        for chunk in plan.chunks:
            if not chunk:
                continue
            for _ in range(steps_per_chunk):
                step += 1
                utt_id = chunk[int(rng.integers(len(chunk)))]
                mask_seed = int(rng.integers(2**31))
                neg_seed = int(rng.integers(2**31))
                try:
                    report = _fs_step(
                        model,
                        phase_corpus.utterances[utt_id],
                        targets[utt_id],
                        lr,
                        mask_seed,
                        neg_seed,
                        contrastive_weight,
                    )
                except InvalidInput as exc:
                    # Mid-training validation failures mean the parameters
                    # blew up (inputs were valid at step 0).
                    raise TrainingDiverged(step, str(exc)) from exc
                if not math.isfinite(report.loss):
                    raise TrainingDiverged(step)
                acc_m.append(report.loss_m)
                acc_fs.append(report.loss_fs)
                if step % eval_every == 0:
                    history.append(
                        {
                            "step": step,
                            "loss_m": float(np.mean(acc_m)),
                            "loss_fs": float(np.mean(acc_fs)),
                            "diagonality": corpus_diagonality(model, phase_corpus),
                        }
                    )
                    acc_m, acc_fs = [], []
    if acc_m:
        history.append(
            {
                "step": step,
                "loss_m": float(np.mean(acc_m)),
                "loss_fs": float(np.mean(acc_fs)),
                "diagonality": corpus_diagonality(model, upsample_corpus(corpus)),
            }
        )
    return model, history


def bootstrap_fc(fs_model: ToyModel, corpus: SyntheticCorpus) -> list[FrameLabels]:
    """Pseudo-labels for frame classification: argmax decoding per utterance."""
    return [decode_utterance(fs_model, u) for u in corpus.utterances]


def init_fc_model(inventory: PhoneInventory, K: int, frame_shift_ms: float, seed) -> FCModel:
    rng = np.random.default_rng([seed, 31])
    V = len(inventory)
    eye = np.eye(K)
    return FCModel(
        enc_W1=eye + 0.05 * rng.standard_normal((K, K)),
        enc_b1=np.zeros(K),
        enc_W2=eye + 0.05 * rng.standard_normal((K, K)),
        enc_b2=np.zeros(K),
        out_W=rng.standard_normal((V, K)) / math.sqrt(K),
        out_b=np.zeros(V),
        inventory=inventory,
        frame_shift_ms=frame_shift_ms,
    )


def train_fc(
    labels_per_utt,
    corpus: SyntheticCorpus,
    lr: float,
    steps: int,
    seed,
    model: FCModel | None = None,
):
    """Cross-entropy frame classification on the given labels.

    ``labels_per_utt`` holds one FrameLabels per corpus utterance (ground
    truth or pseudo-labels).  Returns (FCModel, history of step/loss
    records); deterministic per seed.
    """
    labels_per_utt = list(labels_per_utt)
    if len(labels_per_utt) != len(corpus):
        raise InvalidInput("need exactly one label sequence per utterance")
    for u, fl in zip(corpus.utterances, labels_per_utt):
        if len(fl) != len(u):
            raise InvalidInput("label length differs from utterance length")
    K = corpus.prototypes.shape[1]
    if model is None:
        model = init_fc_model(corpus.inventory, K, corpus.frame_shift_ms, seed)
    history: list[dict] = []
    if steps <= 0:
        return model, history
    rng = np.random.default_rng([seed, 37])
    acc: list[float] = []
    for step in range(1, steps + 1):
        i = int(rng.integers(len(corpus)))
        X = corpus.utterances[i].features.T
        y = labels_per_utt[i].labels
        T = y.size
        F, H1 = _encode(model.enc_W1, model.enc_b1, model.enc_W2, model.enc_b2, X)
        logits = model.out_W @ F + model.out_b[:, None]  # V x T
        m = logits.max(axis=0, keepdims=True)
        logp = logits - m - np.log(np.exp(logits - m).sum(axis=0, keepdims=True))
        loss = float(-np.mean(logp[y, np.arange(T)]))
        if not math.isfinite(loss):
            raise TrainingDiverged(step)
        dlogits = np.exp(logp)
        dlogits[y, np.arange(T)] -= 1.0
        dlogits /= T
        dout_W = dlogits @ F.T
        dout_b = dlogits.sum(axis=1)
        dF = model.out_W.T @ dlogits
        dW1, db1, dW2, db2 = _encoder_backprop(model.enc_W2, H1, X, dF)
        model.out_W -= lr * dout_W
        model.out_b -= lr * dout_b
        model.enc_W1 -= lr * dW1
        model.enc_b1 -= lr * db1
        model.enc_W2 -= lr * dW2
        model.enc_b2 -= lr * db2
        acc.append(loss)
        if step % 100 == 0:
            history.append({"step": step, "loss": float(np.mean(acc))})
            acc = []
    if acc:
        history.append({"step": steps, "loss": float(np.mean(acc))})
    return model, history


def fc_log_posteriors(model: FCModel, features: np.ndarray) -> FrameMatrix:
    """Per-frame log-posteriors over the inventory (T x V)."""
    F, _ = _encode(model.enc_W1, model.enc_b1, model.enc_W2, model.enc_b2, np.asarray(features).T)
    logits = model.out_W @ F + model.out_b[:, None]
    m = logits.max(axis=0, keepdims=True)
    logp = logits - m - np.log(np.exp(logits - m).sum(axis=0, keepdims=True))
    return FrameMatrix(
        logp.T, model.frame_shift_ms, "log_posterior", labels=model.inventory.symbols
    )


def fc_decode_labels(model: FCModel, utt: Utterance) -> FrameLabels:
    logp = fc_log_posteriors(model, utt.features)
    return FrameLabels(
        np.argmax(logp.values, axis=1), model.frame_shift_ms, model.inventory
    )


def fc_frame_accuracy(model: FCModel, corpus: SyntheticCorpus) -> float:
    total = 0
    correct = 0
    for u in corpus.utterances:
        pred = fc_decode_labels(model, u).labels
        correct += int(np.sum(pred == u.labels.labels))
        total += len(u)
    return correct / total


def fc_boundary_report(model: FCModel, corpus: SyntheticCorpus, tol_frames: int = 2) -> EvalReport:
    shift = corpus.frame_shift_ms
    pairs = [
        (labels_to_segments(u.labels), labels_to_segments(fc_decode_labels(model, u)))
        for u in corpus.utterances
    ]
    return batch_eval(pairs, tolerance_ms=tol_frames * shift, grid_ms=shift)


def load_fixture() -> dict:
    """The committed toy-training configuration."""
    path = resources.files("charsiu_lite").joinpath("data/toy_fixture.json")
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


@dataclass(eq=False)
class FixtureRun:
    """One toy-training run plus its final evaluation."""

    name: str
    seed: int
    model: ToyModel
    corpus: SyntheticCorpus
    plan: CurriculumPlan
    history: list
    diagonality: float
    boundary: EvalReport


def fixture_corpus(fx: dict, heldout: bool = False) -> SyntheticCorpus:
    seed = fx["corpus_seed"] + (1000 if heldout else 0)
    count = fx["heldout_count"] if heldout else fx["count"]
    inv = make_inventory(fx["V"])
    return generate_corpus(
        inv,
        count=count,
        seed=seed,
        noise_sigma=fx["sigma"],
        dur_range=tuple(fx["dur_range"]),
        len_range=tuple(fx["len_range"]),
        frame_shift_ms=fx["frame_shift_ms"],
        feature_dim=fx["K"],
        # The held-out split shares the training prototypes; only the
        # utterance draws differ.
        prototype_seed=fx["corpus_seed"],
    )


def run_fixture_training(
    seed: int,
    steps_per_chunk: int | None = None,
    count: int | None = None,
    no_fs: bool = False,
    no_contrastive: bool = False,
    no_curriculum: bool = False,
    eval_every: int | None = None,
    fixture: dict | None = None,
) -> FixtureRun:
    """Train the committed fixture (optionally ablated) and evaluate it.

    The final model runs at the upsampled frame rate, so evaluation uses the
    upsampled corpus; boundary F1 is scored at a +-2-frame tolerance.
    """
    fx = dict(load_fixture() if fixture is None else fixture)
    if steps_per_chunk is not None:
        fx["steps_per_chunk"] = steps_per_chunk
    if count is not None:
        fx["count"] = count
    if eval_every is not None:
        fx["eval_every"] = eval_every
    corpus = fixture_corpus(fx)
    cfg = LossConfig(
        kappa=fx["kappa"],
        lambda_=0.0 if no_fs else fx["lambda"],
        negatives=fx["negatives"],
        p_low=fx["p_low"],
        p_high=fx["p_high"],
        feature_mask_frac=fx["feature_mask_frac"],
    )
    codebook = make_codebook(corpus.prototypes, fx["extra_codewords"], fx["corpus_seed"])
    model = init_toy_model(fx["V"], fx["K"], cfg, codebook, seed)
    if no_curriculum:
        # Single chunk over everything, with the step budget scaled to keep
        # the total number of updates equal to the curriculum schedule.
        n_chunks = len(fx["thresholds_s"])
        plan = CurriculumPlan(
            thresholds_s=(float("inf"),),
            chunks=(tuple(range(len(corpus))),),
        )
        steps = fx["steps_per_chunk"] * n_chunks
    else:
        plan = plan_curriculum(corpus.durations_s, fx["thresholds_s"])
        steps = fx["steps_per_chunk"]
    name = "full"
    if no_fs:
        name = "no_fs"
    elif no_contrastive:
        name = "no_contrastive"
    elif no_curriculum:
        name = "no_curriculum"
    model, history = train_fs(
        model,
        corpus,
        plan,
        steps_per_chunk=steps,
        lr=fx["lr"],
        seed=seed,
        eval_every=fx["eval_every"],
        contrastive_weight=0.0 if no_contrastive else fx.get("contrastive_weight", 1.0),
    )
    final_corpus = upsample_corpus(corpus)
    return FixtureRun(
        name=name,
        seed=seed,
        model=model,
        corpus=corpus,
        plan=plan,
        history=history,
        diagonality=corpus_diagonality(model, final_corpus),
        boundary=corpus_boundary_report(model, final_corpus, tol_frames=2),
    )


def run_fc_pair(fs_run: FixtureRun, fixture: dict | None = None) -> dict:
    """Close the bootstrap loop: frame classifiers on pseudo vs true labels.

    Both classifiers share the config and seed; only the label source
    differs.  Held-out boundary F1 and frame accuracy are reported for each.
    """
    fx = dict(load_fixture() if fixture is None else fixture)
    corpus_up = upsample_corpus(fs_run.corpus)
    heldout = upsample_corpus(fixture_corpus(fx, heldout=True))
    pseudo = bootstrap_fc(fs_run.model, corpus_up)
    truth = [u.labels for u in corpus_up.utterances]
    fc_pseudo, _ = train_fc(pseudo, corpus_up, fx["fc_lr"], fx["fc_steps"], fs_run.seed)
    fc_truth, _ = train_fc(truth, corpus_up, fx["fc_lr"], fx["fc_steps"], fs_run.seed)
    return {
        "f1_pseudo": fc_boundary_report(fc_pseudo, heldout).f1,
        "f1_truth": fc_boundary_report(fc_truth, heldout).f1,
        "accuracy_pseudo": fc_frame_accuracy(fc_pseudo, heldout),
        "accuracy_truth": fc_frame_accuracy(fc_truth, heldout),
    }
