"""docalign: hierarchical attention document encoders with cross-document
attention, for joint document-to-document and sentence-to-document
alignment."""

from .align import (AlignmentResult, MetricReport, att_score, classification_metrics,
                    cos_score, joint_eval, rank_sentences, ranking_metrics)
from .cda import CdaConfig, deep_cda, shallow_cda
from .config import ModelConfig, TrainConfig
from .data import (PairExample, SyntheticSpec, gen_synthetic, make_negatives,
                   parse_pairs, strip_citation_span)
from .encoder import (Document, EmbeddingTable, EncodedDocument, attention_pool,
                      encode_document, load_precomputed_sentence_vectors)
from .siamese import PairModel, PairScore, bce_loss, score_pair
from .tensor import Adam, GradientTape, Tensor, precision, softmax
from .train import TrainResult, count_parameters, pad_batch, train_model

__all__ = [
    "AlignmentResult", "MetricReport", "att_score", "classification_metrics",
    "cos_score", "joint_eval", "rank_sentences", "ranking_metrics",
    "CdaConfig", "deep_cda", "shallow_cda",
    "ModelConfig", "TrainConfig",
    "PairExample", "SyntheticSpec", "gen_synthetic", "make_negatives",
    "parse_pairs", "strip_citation_span",
    "Document", "EmbeddingTable", "EncodedDocument", "attention_pool",
    "encode_document", "load_precomputed_sentence_vectors",
    "PairModel", "PairScore", "bce_loss", "score_pair",
    "Adam", "GradientTape", "Tensor", "precision", "softmax",
    "TrainResult", "count_parameters", "pad_batch", "train_model",
]

__version__ = "0.1.0"
