"""Cross-document attention (CDA).

One document's representations are updated by attending over the other
document's parts. Attention scores are unscaled dot products; the
attended vector is either concatenated with the query and projected back
to the encoder width (``concat``) or added to it (``add``, parameter
free). Keys and values are always the other document's pre-CDA vectors,
so the two directions can be computed from one snapshot with shared
parameters.

Shallow updates only the document vectors; Deep first updates every
sentence vector (attending over the other document's token and sentence
vectors, with its own parameter set), re-runs the sentence-level
contextualization and pooling, and then applies the document-level
update on top.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import tensor as T
from .config import CdaConfig, ModelConfig  # re-exported: CdaConfig lives with ModelConfig
from .encoder import BatchEncoding, EncodedDocument, sentence_stage
from .errors import DocalignError, ShapeError
from .tensor import Tensor

__all__ = ["CdaConfig", "cda_attend", "apply_cda_batch", "shallow_cda", "deep_cda",
           "candidate_sentence_vectors"]


def cda_attend(queries: Tensor, cands: Tensor, cand_mask: np.ndarray | None,
               params: dict[str, Tensor], prefix: str,
               integration: str) -> tuple[Tensor, Tensor]:
    """Update [B, Q, w] queries by attention over [B, K, w] candidates.

    Returns (updated [B, Q, w], attention weights [B, Q, K])."""
    if queries.shape[-1] != cands.shape[-1]:
        raise ShapeError(
            f"CDA width mismatch: queries {tuple(queries.shape)} vs candidates {tuple(cands.shape)}")
    scores = T.matmul(queries, T.transpose_last2(cands))
    mask = None if cand_mask is None else cand_mask[:, None, :]
    alpha = T.softmax(scores, mask)
    attended = T.matmul(alpha, cands)
    if integration == "add":
        return T.add(queries, attended), alpha
    joint = T.concat([queries, attended], axis=-1)
    return T.affine(joint, params[f"{prefix}.W"], params[f"{prefix}.b"]), alpha


def init_cda_params(params: dict[str, Tensor], rng: np.random.Generator,
                    cfg: ModelConfig) -> None:
    if cfg.cda.variant == "none" or cfg.cda.integration == "add":
        return
    w = cfg.width
    if cfg.cda.variant == "deep":
        params["cda_sent.W"] = T.uniform_init(rng, (2 * w, w), 2 * w)
        params["cda_sent.b"] = T.zeros_init((w,))
    params["cda_doc.W"] = T.uniform_init(rng, (2 * w, w), 2 * w)
    params["cda_doc.b"] = T.zeros_init((w,))


def candidate_sentence_vectors(enc: BatchEncoding | EncodedDocument,
                               cfg: ModelConfig) -> Tensor:
    """The sentence vectors of a document that CDA attends over."""
    source = cfg.resolved_candidate_source
    if source == "pre_context":
        return enc.sent_pre
    if not enc.sent_layers:
        raise DocalignError("post_context candidates need a sentence-level GRU layer")
    return enc.sent_layers[0]


def _doc_candidates(enc: BatchEncoding, doc: Tensor, cfg: ModelConfig
                    ) -> tuple[Tensor, np.ndarray]:
    """Document-level candidate set: the other document's sentence vectors
    (per candidate_source) plus its pre-CDA document vector."""
    b, s, w = enc.sent_pre.shape
    sents = candidate_sentence_vectors(enc, cfg)
    cands = T.concat([sents, T.reshape(doc, (b, 1, w))], axis=1)
    mask = np.concatenate([enc.sent_mask, np.ones((b, 1), dtype=bool)], axis=1)
    return cands, mask


def _sent_candidates(enc: BatchEncoding, cfg: ModelConfig) -> tuple[Tensor, np.ndarray]:
    """Sentence-level candidate set: all contextualized token vectors plus
    the sentence vectors (per candidate_source)."""
    if enc.token_vecs is None:
        raise DocalignError(
            "deep CDA needs word-level token vectors; run the gru encoder mode")
    b, s, w = enc.sent_pre.shape
    t = enc.token_vecs.shape[1]
    tokens = T.reshape(enc.token_vecs, (b, s * t, w))
    token_mask = enc.token_mask.reshape(b, s * t)
    sents = candidate_sentence_vectors(enc, cfg)
    cands = T.concat([tokens, sents], axis=1)
    mask = np.concatenate([token_mask, enc.sent_mask], axis=1)
    return cands, mask


def apply_cda_batch(enc_a: BatchEncoding, enc_b: BatchEncoding,
                    params: dict[str, Tensor], cfg: ModelConfig
                    ) -> tuple[BatchEncoding, BatchEncoding]:
    """Apply the configured CDA variant to both encodings (returns new ones)."""
    if cfg.cda.variant == "none":
        return enc_a, enc_b
    if enc_a.width != enc_b.width:
        raise ShapeError(f"encoding widths differ: {enc_a.width} vs {enc_b.width}")
    integration = cfg.cda.integration

    if cfg.cda.variant == "deep":
        cands_a, mask_a = _sent_candidates(enc_a, cfg)
        cands_b, mask_b = _sent_candidates(enc_b, cfg)
        tilde_a, _ = cda_attend(enc_a.sent_pre, cands_b, mask_b, params, "cda_sent", integration)
        tilde_b, _ = cda_attend(enc_b.sent_pre, cands_a, mask_a, params, "cda_sent", integration)
        layers_a, doc_a, alpha_a = sentence_stage(tilde_a, enc_a.sent_mask, params,
                                                  cfg.n_sent_gru_layers)
        layers_b, doc_b, alpha_b = sentence_stage(tilde_b, enc_b.sent_mask, params,
                                                  cfg.n_sent_gru_layers)
        enc_a = dataclasses.replace(enc_a, sent_tilde=tilde_a, sent_layers=layers_a,
                                    sent_ctx=layers_a[-1], doc=doc_a,
                                    sent_alpha=alpha_a.data)
        enc_b = dataclasses.replace(enc_b, sent_tilde=tilde_b, sent_layers=layers_b,
                                    sent_ctx=layers_b[-1], doc=doc_b,
                                    sent_alpha=alpha_b.data)

    b = enc_a.doc.shape[0]
    w = enc_a.width
    doc_cands_a, dmask_a = _doc_candidates(enc_a, enc_a.doc, cfg)
    doc_cands_b, dmask_b = _doc_candidates(enc_b, enc_b.doc, cfg)
    q_a = T.reshape(enc_a.doc, (b, 1, w))
    q_b = T.reshape(enc_b.doc, (b, 1, w))
    tilde_a, _ = cda_attend(q_a, doc_cands_b, dmask_b, params, "cda_doc", integration)
    tilde_b, _ = cda_attend(q_b, doc_cands_a, dmask_a, params, "cda_doc", integration)
    enc_a = dataclasses.replace(enc_a, doc_tilde=T.reshape(tilde_a, (b, w)))
    enc_b = dataclasses.replace(enc_b, doc_tilde=T.reshape(tilde_b, (b, w)))
    return enc_a, enc_b


# ---------------------------------------------------------------------------
# per-pair surface over EncodedDocument
# ---------------------------------------------------------------------------

def _as_batch(enc: EncodedDocument) -> BatchEncoding:
    s, w = enc.sent_pre.shape
    return BatchEncoding(
        sent_pre=T.reshape(enc.sent_pre, (1, s, w)),
        sent_layers=[T.reshape(x, (1, s, w)) for x in enc.sent_layers],
        sent_ctx=T.reshape(enc.sent_ctx, (1, s, w)),
        doc=T.reshape(enc.doc, (1, w)),
        sent_mask=np.ones((1, s), dtype=bool),
        token_vecs=enc.token_vectors,
        token_mask=enc.token_mask.reshape(1, s, -1) if enc.token_mask is not None else None,
    )


def _from_batch(enc: EncodedDocument, b: BatchEncoding) -> EncodedDocument:
    s, w = enc.sent_pre.shape
    return dataclasses.replace(
        enc,
        sent_layers=[T.reshape(x, (s, w)) for x in b.sent_layers],
        sent_ctx=T.reshape(b.sent_ctx, (s, w)),
        doc=T.reshape(b.doc, (w,)),
        sent_tilde=T.reshape(b.sent_tilde, (s, w)) if b.sent_tilde is not None else None,
        doc_tilde=T.reshape(b.doc_tilde, (w,)) if b.doc_tilde is not None else None,
    )


def shallow_cda(enc_a: EncodedDocument, enc_b: EncodedDocument,
                params: dict[str, Tensor], cfg: ModelConfig
                ) -> tuple[Tensor, Tensor]:
    """Document-level CDA for one pair; returns (doc_tilde_a, doc_tilde_b)
    and fills the encodings in place."""
    shallow_cfg = dataclasses.replace(cfg, cda=dataclasses.replace(cfg.cda, variant="shallow"))
    ba, bb = apply_cda_batch(_as_batch(enc_a), _as_batch(enc_b), params, shallow_cfg)
    w = enc_a.width
    enc_a.doc_tilde = T.reshape(ba.doc_tilde, (w,))
    enc_b.doc_tilde = T.reshape(bb.doc_tilde, (w,))
    return enc_a.doc_tilde, enc_b.doc_tilde


def deep_cda(enc_a: EncodedDocument, enc_b: EncodedDocument,
             params: dict[str, Tensor], cfg: ModelConfig
             ) -> tuple[EncodedDocument, EncodedDocument]:
    """Sentence- and document-level CDA for one pair; returns updated
    encodings with sent_tilde and doc_tilde filled."""
    deep_cfg = dataclasses.replace(cfg, cda=dataclasses.replace(cfg.cda, variant="deep"))
    ba, bb = apply_cda_batch(_as_batch(enc_a), _as_batch(enc_b), params, deep_cfg)
    return _from_batch(enc_a, ba), _from_batch(enc_b, bb)
