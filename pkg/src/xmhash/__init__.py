"""Cross-modal binary hashing: batch-wise discrete code learning plus
Hamming-space retrieval and its evaluation harness."""

from .codes import CodeMatrix, build_similarity, pack_bits, sign_matrix, unpack_bits
from .data import DatasetBundle, SynthConfig, synth_generate
from .encoder import EncoderModel, adam_step, backward, forward
from .metrics import average_precision, evaluate_retrieval, mean_average_precision
from .objective import (
    penalized_objective,
    trace_objective,
    update_image_codes,
    update_text_codes,
)
from .retrieval import RetrievalIndex, encode_features, hamming_distance, rank_gallery
from .trainer import TrainConfig, TrainState, train

__version__ = "0.1.0"

__all__ = [
    "CodeMatrix",
    "DatasetBundle",
    "EncoderModel",
    "RetrievalIndex",
    "SynthConfig",
    "TrainConfig",
    "TrainState",
    "adam_step",
    "average_precision",
    "backward",
    "build_similarity",
    "encode_features",
    "evaluate_retrieval",
    "forward",
    "hamming_distance",
    "mean_average_precision",
    "pack_bits",
    "penalized_objective",
    "rank_gallery",
    "sign_matrix",
    "synth_generate",
    "trace_objective",
    "train",
    "unpack_bits",
    "update_image_codes",
    "update_text_codes",
]
