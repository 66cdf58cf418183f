"""Phone-to-audio alignment engine.

A contrastive masked-prediction objective coupled with a forward-sum
alignment loss over an attention matrix, plus DTW/argmax decoding, boundary
metrics, Praat TextGrid I/O, and a desk-scale training demonstration.
"""

from .core import (
    FrameLabels,
    FrameMatrix,
    PhoneInventory,
    PhoneSeq,
    Segment,
    SegmentTier,
    collapse_seq,
    labels_to_segments,
    load_inventory,
    segments_to_labels,
)
from .errors import CharsiuLiteError
from .io import read_matrix, read_textgrid, write_matrix, write_textgrid
from .lattice import (
    AlignmentPath,
    FsGrad,
    argmax_decode,
    ctc_greedy_decode,
    diagonality_score,
    dtw_forced_decode,
    forward_sum_loss,
    forward_sum_via_blank_suppression,
    path_to_tier,
)
from .metrics import EvalReport, batch_eval, boundary_eval, frame_overlap
from .objective import (
    Codebook,
    DenseProjection,
    EncodedFrames,
    EncodedPhones,
    LossConfig,
    LossReport,
    ProjectionHeads,
    attention_from_similarity,
    combined_loss,
    contrastive_loss,
    fuse_states,
    sample_masking,
    sample_negatives,
    similarity_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentPath",
    "CharsiuLiteError",
    "Codebook",
    "DenseProjection",
    "EncodedFrames",
    "EncodedPhones",
    "EvalReport",
    "FrameLabels",
    "FrameMatrix",
    "FsGrad",
    "LossConfig",
    "LossReport",
    "PhoneInventory",
    "PhoneSeq",
    "ProjectionHeads",
    "Segment",
    "SegmentTier",
    "argmax_decode",
    "attention_from_similarity",
    "batch_eval",
    "boundary_eval",
    "collapse_seq",
    "combined_loss",
    "contrastive_loss",
    "ctc_greedy_decode",
    "diagonality_score",
    "dtw_forced_decode",
    "forward_sum_loss",
    "forward_sum_via_blank_suppression",
    "frame_overlap",
    "fuse_states",
    "labels_to_segments",
    "load_inventory",
    "path_to_tier",
    "read_matrix",
    "read_textgrid",
    "sample_masking",
    "sample_negatives",
    "segments_to_labels",
    "similarity_matrix",
    "write_matrix",
    "write_textgrid",
]
