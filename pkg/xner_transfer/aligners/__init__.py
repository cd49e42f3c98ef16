"""
Entity aligners for xner-transfer.
"""

from .base import (
    AlignedSpan,
    Aligner,
    AlignerConfig,
    AlignmentQuery,
    AlignmentResult,
    mask_to_spans,
    spans_to_mask,
)
from .lexical import LexicalAligner, align_lexical, edit_distance, similarity
from .remote import RemoteAligner, align_remote, parse_response
from .training_data import (
    AlignerScore,
    AlignmentExample,
    gen_alignment_training_data,
    read_alignment_jsonl,
    score_aligner,
    write_alignment_jsonl,
)

__all__ = [
    "AlignedSpan",
    "Aligner",
    "AlignerConfig",
    "AlignerScore",
    "AlignmentExample",
    "AlignmentQuery",
    "AlignmentResult",
    "LexicalAligner",
    "RemoteAligner",
    "align_lexical",
    "align_remote",
    "edit_distance",
    "gen_alignment_training_data",
    "mask_to_spans",
    "parse_response",
    "read_alignment_jsonl",
    "score_aligner",
    "similarity",
    "spans_to_mask",
    "write_alignment_jsonl",
]
