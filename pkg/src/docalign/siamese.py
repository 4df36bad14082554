"""Siamese pair scorer.

Both documents are encoded by one shared encoder (plus CDA when
configured); the two document vectors are concatenated and passed
through a fully-connected relu layer and a sigmoid to yield the pair
probability. Training minimizes binary cross-entropy.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .cda import apply_cda_batch, init_cda_params
from .config import ModelConfig
from .encoder import (BatchEncoding, DocBatch, Document, EmbeddingTable,
                      PrecomputedVectors, init_embedding_table, init_encoder_params,
                      pad_docs, pad_precomputed)
from .errors import ConfigError, DataError
from .tensor import Tensor

BCE_EPS = 1e-7


@dataclass
class PairScore:
    probability: float
    predicted_label: int
    doc_tilde_a: np.ndarray
    doc_tilde_b: np.ndarray


def init_classifier_params(params: dict[str, Tensor], rng: np.random.Generator,
                           width: int) -> None:
    params["clf.W1"] = T.uniform_init(rng, (2 * width, width), 2 * width)
    params["clf.b1"] = T.zeros_init((width,))
    params["clf.W2"] = T.uniform_init(rng, (width, 1), width)
    params["clf.b2"] = T.zeros_init((1,))


class PairModel:
    """Shared encoder + CDA + classifier head with one flat parameter dict."""

    def __init__(self, cfg: ModelConfig, vocab: dict[str, int] | None = None,
                 seed: int = 0, vectors: PrecomputedVectors | None = None):
        self.seed = seed
        self.vectors = vectors
        rng = np.random.default_rng(seed)
        params: dict[str, Tensor] = {}
        self.table: EmbeddingTable | None = None
        if cfg.encoder == "gru":
            if vocab is None:
                vocab = {f"w{i}": i for i in range(cfg.vocab_size)}
            cfg = dataclasses.replace(cfg, vocab_size=len(vocab))
            self.table = init_embedding_table(vocab, cfg.embed_dim, rng)
            params["embedding.vectors"] = self.table.vectors
        self.cfg = cfg
        params.update(init_encoder_params(cfg, rng))
        init_cda_params(params, rng, cfg)
        init_classifier_params(params, rng, cfg.width)
        self.params = params

    @property
    def vocab(self) -> dict[str, int] | None:
        return self.table.vocab if self.table is not None else None

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- batching ------------------------------------------------------------

    def doc_batch(self, docs: list[Document]) -> DocBatch:
        if self.cfg.encoder == "gru":
            return pad_docs(docs)
        if self.vectors is None:
            raise DataError("precomputed encoder mode needs a sentence-vector store")
        vecs = [self.vectors.get(d.id, d.n_sentences) for d in docs]
        for v in vecs:
            if v.shape[1] != self.cfg.sent_vec_width:
                raise DataError(
                    f"sentence vector width {v.shape[1]} does not match configured "
                    f"width {self.cfg.sent_vec_width}")
        return pad_precomputed(vecs, [d.id for d in docs])

    def encode_batch(self, batch: DocBatch) -> BatchEncoding:
        from .encoder import encode_batch
        return encode_batch(batch, self.table, self.params, self.cfg)

    def forward_batch(self, batch_a: DocBatch, batch_b: DocBatch
                      ) -> tuple[Tensor, BatchEncoding, BatchEncoding]:
        """Probability [B, 1] for a padded batch of pairs, plus both
        (CDA-updated) encodings."""
        enc_a = self.encode_batch(batch_a)
        enc_b = self.encode_batch(batch_b)
        enc_a, enc_b = apply_cda_batch(enc_a, enc_b, self.params, self.cfg)
        rep = T.concat([enc_a.final_doc(), enc_b.final_doc()], axis=-1)
        hidden = T.relu(T.affine(rep, self.params["clf.W1"], self.params["clf.b1"]))
        logit = T.affine(hidden, self.params["clf.W2"], self.params["clf.b2"])
        prob = T.sigmoid(logit)
        return prob, enc_a, enc_b

    def forward_pairs(self, pairs) -> tuple[Tensor, BatchEncoding, BatchEncoding]:
        docs_a = [p.doc_a for p in pairs]
        docs_b = [p.doc_b for p in pairs]
        return self.forward_batch(self.doc_batch(docs_a), self.doc_batch(docs_b))

    # -- per-pair surface ------------------------------------------------------

    def score_pair_full(self, a: Document, b: Document
                        ) -> tuple[PairScore, BatchEncoding, BatchEncoding]:
        prob, enc_a, enc_b = self.forward_batch(self.doc_batch([a]), self.doc_batch([b]))
        p = float(prob.data.reshape(-1)[0])
        score = PairScore(
            probability=p,
            predicted_label=int(p >= self.cfg.threshold),
            doc_tilde_a=enc_a.final_doc().data[0].copy(),
            doc_tilde_b=enc_b.final_doc().data[0].copy(),
        )
        return score, enc_a, enc_b

    def score_pair(self, a: Document, b: Document) -> PairScore:
        return self.score_pair_full(a, b)[0]

    # -- persistence -----------------------------------------------------------

    def state_header(self) -> dict:
        header = {"model_config": self.cfg.to_dict(), "seed": self.seed}
        if self.vocab is not None:
            ordered = sorted(self.vocab.items(), key=lambda kv: kv[1])
            header["vocab"] = [tok for tok, _ in ordered]
        return header

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint
        save_checkpoint(path, self.params, self.state_header())

    @staticmethod
    def load(path, vectors: PrecomputedVectors | None = None) -> "PairModel":
        from .checkpoint import load_checkpoint
        header, arrays = load_checkpoint(path)
        cfg = ModelConfig.from_dict(header["model_config"])
        vocab = None
        if "vocab" in header:
            vocab = {tok: i for i, tok in enumerate(header["vocab"])}
        model = PairModel(cfg, vocab=vocab, seed=header.get("seed", 0), vectors=vectors)
        for name, arr in arrays.items():
            if name not in model.params:
                raise ConfigError(f"checkpoint parameter {name!r} not in model")
            if tuple(model.params[name].shape) != tuple(arr.shape):
                raise ConfigError(
                    f"checkpoint parameter {name!r} shape {arr.shape} vs model "
                    f"{tuple(model.params[name].shape)}")
            model.params[name].data = arr.astype(model.params[name].data.dtype)
        return model


def score_pair(a: Document, b: Document, model: PairModel) -> PairScore:
    return model.score_pair(a, b)


def bce_loss(probability: Tensor, label) -> Tensor:
    """Mean binary cross-entropy; probabilities epsilon-clamped at 1e-7."""
    y = label.data if isinstance(label, Tensor) else np.asarray(label)
    y = Tensor(np.broadcast_to(y, probability.shape).astype(probability.data.dtype))
    one = Tensor(np.ones((), dtype=probability.data.dtype))
    p = T.clip(probability, BCE_EPS, 1.0 - BCE_EPS)
    pos = T.mul(y, T.log(p))
    neg = T.mul(T.sub(one, y), T.log(T.sub(one, p)))
    return T.neg(T.reduce_mean(T.add(pos, neg)))
