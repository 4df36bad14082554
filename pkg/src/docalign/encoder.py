"""Hierarchical attention document encoder.

Pipeline: token embeddings -> bi-GRU contextualized token vectors ->
attention-pooled sentence vectors -> bi-GRU contextualized sentence
vectors -> attention-pooled document vector. A separate parameter set is
used at each level. A precomputed mode starts the pipeline from sentence
vectors loaded from disk instead of the word stage.

All stage functions operate on a leading batch axis; per-document
encoding is the batch-of-one case. Padded positions are excluded from
every attention softmax and hold the GRU state, so padding never changes
an example's outputs.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import DataError, DocalignError, ShapeError
from .tensor import Tensor

UNK_ID = 0
PAD_ID = 1
RESERVED_TOKENS = ("<unk>", "<pad>")

_SENT_SPLIT = re.compile(r"(?<=[.!?])\s+")


def filter_chars(text: str) -> str:
    """Keep only digits, letters, punctuation, and whitespace."""
    return "".join(
        c for c in text
        if c.isalnum() or c.isspace() or unicodedata.category(c).startswith("P")
    )


def tokenize(sentence: str) -> list[str]:
    return filter_chars(sentence).lower().split()


def split_sentences(text: str) -> list[str]:
    """Split raw text on sentence-final punctuation."""
    parts = [p.strip() for p in _SENT_SPLIT.split(text)]
    return [p for p in parts if p]


@dataclass
class Document:
    """Ordered sentences of token ids plus the retained raw strings."""

    id: str
    sentences: list[list[int]]
    raw_sentences: list[str]

    def __post_init__(self):
        if not self.sentences:
            raise DataError(f"document {self.id!r} has no sentences")
        if any(len(s) == 0 for s in self.sentences):
            raise DataError(f"document {self.id!r} has an empty sentence")
        if len(self.raw_sentences) != len(self.sentences):
            raise DataError(f"document {self.id!r}: raw/tokenized sentence counts differ")

    @property
    def n_sentences(self) -> int:
        return len(self.sentences)


def build_vocab(token_lists, max_size: int | None = None) -> dict[str, int]:
    """Frequency-ranked token -> id map with reserved unk/pad rows."""
    counts: dict[str, int] = {}
    for toks in token_lists:
        for t in toks:
            counts[t] = counts.get(t, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_size is not None:
        ranked = ranked[: max(0, max_size - len(RESERVED_TOKENS))]
    vocab = {tok: i for i, tok in enumerate(RESERVED_TOKENS)}
    for tok, _ in ranked:
        vocab[tok] = len(vocab)
    return vocab


def document_from_sentences(doc_id: str, sentences: list[str], vocab: dict[str, int],
                            cfg: ModelConfig) -> Document:
    """Tokenize pre-split sentences and map tokens to ids (unknown -> UNK)."""
    sentences = sentences[: cfg.max_doc_sentences]
    ids, raw = [], []
    for s in sentences:
        toks = tokenize(s)[: cfg.max_sentence_tokens]
        if not toks:
            continue
        ids.append([vocab.get(t, UNK_ID) for t in toks])
        raw.append(s)
    if not ids:
        raise DataError(f"document {doc_id!r} has no non-empty sentences after tokenization")
    return Document(id=doc_id, sentences=ids, raw_sentences=raw)


@dataclass
class EmbeddingTable:
    vocab: dict[str, int]
    vectors: Tensor  # [V, embed_dim]
    trainable: bool = True

    def __post_init__(self):
        if self.vectors.shape[0] != len(self.vocab):
            raise ShapeError(
                f"embedding rows {self.vectors.shape[0]} vs vocab size {len(self.vocab)}")

    @property
    def size(self) -> int:
        return len(self.vocab)


def init_embedding_table(vocab: dict[str, int], embed_dim: int,
                         rng: np.random.Generator,
                         pretrained_path: str | None = None) -> EmbeddingTable:
    """Seeded random init; rows found in an optional pretrained text file
    (token followed by `embed_dim` floats per line) override the random ones.
    The pad row is zero."""
    mat = rng.uniform(-1.0 / np.sqrt(embed_dim), 1.0 / np.sqrt(embed_dim),
                      size=(len(vocab), embed_dim))
    mat[PAD_ID] = 0.0
    if pretrained_path is not None:
        with open(pretrained_path, encoding="utf-8") as f:
            for line in f:
                parts = line.rstrip("\n").split()
                if not parts:
                    continue
                tok, vals = parts[0], parts[1:]
                if len(vals) != embed_dim:
                    raise DataError(
                        f"pretrained embedding for {tok!r} has {len(vals)} dims, expected {embed_dim}")
                if tok in vocab:
                    mat[vocab[tok]] = [float(v) for v in vals]
    vec = Tensor(mat, requires_grad=True, name="embedding.vectors")
    return EmbeddingTable(vocab=vocab, vectors=vec)


def embed_tokens(doc: Document, table: EmbeddingTable) -> list[Tensor]:
    """Per-sentence matrices of type-embedding rows (tied to the table)."""
    return [T.embedding_lookup(table.vectors, np.asarray(s, dtype=np.int64))
            for s in doc.sentences]


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

GRU_GATES = ("z", "r", "h")


def init_gru_params(params: dict[str, Tensor], rng: np.random.Generator,
                    prefix: str, din: int, hidden: int) -> None:
    for d in ("f", "b"):
        for g in GRU_GATES:
            params[f"{prefix}.{d}.W{g}"] = T.uniform_init(rng, (din, hidden), din)
            params[f"{prefix}.{d}.U{g}"] = T.uniform_init(rng, (hidden, hidden), hidden)
            params[f"{prefix}.{d}.b{g}"] = T.zeros_init((hidden,))


def init_attention_params(params: dict[str, Tensor], rng: np.random.Generator,
                          prefix: str, width: int) -> None:
    params[f"{prefix}.W"] = T.uniform_init(rng, (width, width), width)
    params[f"{prefix}.b"] = T.zeros_init((width,))
    params[f"{prefix}.u"] = T.uniform_init(rng, (width, 1), width)


def init_encoder_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """All encoder-side parameters, keyed by component-dot-name."""
    params: dict[str, Tensor] = {}
    h = cfg.hidden_size
    if cfg.encoder == "gru":
        init_gru_params(params, rng, "word_gru", cfg.embed_dim, h)
        init_attention_params(params, rng, "word_attn", 2 * h)
        sent_in = 2 * h
    elif cfg.encoder == "precomputed":
        sent_in = cfg.sent_vec_width
    else:  # precomputed_avg: no contextualization stage
        return params
    for layer in range(cfg.n_sent_gru_layers):
        init_gru_params(params, rng, f"sent_gru{layer}", sent_in, h)
        sent_in = 2 * h
    init_attention_params(params, rng, "sent_attn", 2 * h)
    return params


# ---------------------------------------------------------------------------
# GRU and attention pooling
# ---------------------------------------------------------------------------

def _gru_direction(xs: list[Tensor], mask: np.ndarray | None,
                   params: dict[str, Tensor], prefix: str,
                   reverse: bool) -> list[Tensor]:
    """One GRU direction over a step list of [N, din] tensors.

    Gate equations follow the standard update/reset/candidate formulation:
    h_t = z_t * h_{t-1} + (1 - z_t) * c_t. Masked steps hold the state.
    """
    Wz, Uz, bz = params[f"{prefix}.Wz"], params[f"{prefix}.Uz"], params[f"{prefix}.bz"]
    Wr, Ur, br = params[f"{prefix}.Wr"], params[f"{prefix}.Ur"], params[f"{prefix}.br"]
    Wh, Uh, bh = params[f"{prefix}.Wh"], params[f"{prefix}.Uh"], params[f"{prefix}.bh"]
    n = xs[0].shape[0]
    hidden = Wz.shape[1]
    h = Tensor(np.zeros((n, hidden)))
    steps = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    out: list[Tensor | None] = [None] * len(xs)
    one = Tensor(np.ones((1, 1)))
    for t in steps:
        x = xs[t]
        z = T.sigmoid(T.add(T.affine(x, Wz, bz), T.matmul(h, Uz)))
        r = T.sigmoid(T.add(T.affine(x, Wr, br), T.matmul(h, Ur)))
        c = T.tanh(T.add(T.affine(x, Wh, bh), T.matmul(T.mul(r, h), Uh)))
        h_new = T.add(T.mul(z, h), T.mul(T.sub(one, z), c))
        if mask is not None:
            m = Tensor(mask[:, t:t + 1].astype(h.data.dtype))
            h = T.add(h, T.mul(m, T.sub(h_new, h)))
        else:
            h = h_new
        out[t] = h
    return out  # type: ignore[return-value]


def bigru_contextualize(xs: list[Tensor], mask: np.ndarray | None,
                        params: dict[str, Tensor], prefix: str) -> Tensor:
    """Bidirectional GRU over a step list; returns [N, steps, 2h] with each
    position carrying [h_fwd ; h_bwd]."""
    if not xs:
        raise ShapeError("bigru_contextualize: empty sequence")
    fwd = _gru_direction(xs, mask, params, f"{prefix}.f", reverse=False)
    bwd = _gru_direction(xs, mask, params, f"{prefix}.b", reverse=True)
    return T.concat([T.stack(fwd, axis=1), T.stack(bwd, axis=1)], axis=-1)


def _attention_pool_batch(values: Tensor, mask: np.ndarray | None,
                          params: dict[str, Tensor], prefix: str) -> tuple[Tensor, Tensor]:
    """Attention pooling over axis 1 of [N, S, d]: weights are a softmax of
    u^T tanh(affine(row)); output is the weighted sum of the rows."""
    n, s, d = values.shape
    keys = T.tanh(T.affine(values, params[f"{prefix}.W"], params[f"{prefix}.b"]))
    scores = T.reshape(T.matmul(T.reshape(keys, (n * s, d)), params[f"{prefix}.u"]), (n, s))
    alpha = T.softmax(scores, mask)
    pooled = T.reshape(T.matmul(T.reshape(alpha, (n, 1, s)), values), (n, d))
    return pooled, alpha


def attention_pool(rows: Tensor, params: dict[str, Tensor],
                   prefix: str = "attn") -> tuple[Tensor, Tensor]:
    """Pool [n, d] rows into one [d] vector; also returns the weights."""
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise ShapeError(f"attention_pool needs a non-empty [n, d] matrix, got {tuple(rows.shape)}")
    n, d = rows.shape
    pooled, alpha = _attention_pool_batch(T.reshape(rows, (1, n, d)), None, params, prefix)
    return T.reshape(pooled, (d,)), T.reshape(alpha, (n,))


# ---------------------------------------------------------------------------
# batched document encoding
# ---------------------------------------------------------------------------

@dataclass
class DocBatch:
    """Padded token ids and masks for a batch of documents (gru mode), or
    padded precomputed sentence vectors (precomputed modes)."""

    ids: np.ndarray | None          # [B, S, T] int
    token_mask: np.ndarray | None   # [B, S, T] bool, strict (fake rows all False)
    sent_mask: np.ndarray           # [B, S] bool
    sent_vecs: np.ndarray | None = None  # [B, S, D] float, precomputed modes
    doc_ids: list[str] = field(default_factory=list)

    @property
    def n_docs(self) -> int:
        return self.sent_mask.shape[0]

    @property
    def max_sentences(self) -> int:
        return self.sent_mask.shape[1]

    def pool_token_mask(self) -> np.ndarray:
        """Token mask with position 0 enabled for fully-padded sentences so
        their pooling softmax stays well-defined (their output is masked at
        the sentence level anyway)."""
        m = self.token_mask.copy()
        fake = ~self.sent_mask
        m[fake, 0] = True
        return m


def pad_docs(docs: list[Document]) -> DocBatch:
    if not docs:
        raise DataError("pad_docs: empty batch")
    b = len(docs)
    s_max = max(d.n_sentences for d in docs)
    t_max = max(len(s) for d in docs for s in d.sentences)
    ids = np.full((b, s_max, t_max), PAD_ID, dtype=np.int64)
    token_mask = np.zeros((b, s_max, t_max), dtype=bool)
    sent_mask = np.zeros((b, s_max), dtype=bool)
    for i, d in enumerate(docs):
        sent_mask[i, : d.n_sentences] = True
        for j, sent in enumerate(d.sentences):
            ids[i, j, : len(sent)] = sent
            token_mask[i, j, : len(sent)] = True
    return DocBatch(ids=ids, token_mask=token_mask, sent_mask=sent_mask,
                    doc_ids=[d.id for d in docs])


def pad_precomputed(vec_lists: list[np.ndarray], doc_ids: list[str]) -> DocBatch:
    b = len(vec_lists)
    s_max = max(v.shape[0] for v in vec_lists)
    d = vec_lists[0].shape[1]
    vecs = np.zeros((b, s_max, d), dtype=T.default_dtype())
    sent_mask = np.zeros((b, s_max), dtype=bool)
    for i, v in enumerate(vec_lists):
        vecs[i, : v.shape[0]] = v
        sent_mask[i, : v.shape[0]] = True
    return DocBatch(ids=None, token_mask=None, sent_mask=sent_mask,
                    sent_vecs=vecs, doc_ids=list(doc_ids))


@dataclass
class BatchEncoding:
    """All intermediate representations of a document batch."""

    sent_pre: Tensor                 # [B, S, w] before sentence contextualization
    sent_layers: list[Tensor]        # outputs after each sentence GRU layer
    sent_ctx: Tensor                 # [B, S, w] after sentence contextualization
    doc: Tensor                      # [B, w]
    sent_mask: np.ndarray            # [B, S]
    token_vecs: Tensor | None = None  # [B*S, T, 2h] contextualized token vectors
    token_mask: np.ndarray | None = None  # [B, S, T] strict
    word_alpha: np.ndarray | None = None  # [B*S, T]
    sent_alpha: np.ndarray | None = None  # [B, S]
    sent_tilde: Tensor | None = None  # [B, S, w] CDA-updated sentence vectors
    doc_tilde: Tensor | None = None   # [B, w] CDA-updated document vector

    @property
    def width(self) -> int:
        return self.doc.shape[-1]

    def final_doc(self) -> Tensor:
        return self.doc_tilde if self.doc_tilde is not None else self.doc


def word_stage(batch: DocBatch, table: EmbeddingTable,
               params: dict[str, Tensor]) -> tuple[Tensor, Tensor, Tensor]:
    """Word level: embeddings -> bi-GRU -> per-sentence attention pooling.

    Returns (token_vecs [B*S, T, 2h], sent_pre [B, S, 2h], word_alpha)."""
    b, s, t = batch.ids.shape
    flat_ids = batch.ids.reshape(b * s, t)
    flat_mask = batch.token_mask.reshape(b * s, t)
    flat_pool_mask = batch.pool_token_mask().reshape(b * s, t)
    xs = [T.embedding_lookup(table.vectors, flat_ids[:, step]) for step in range(t)]
    token_vecs = bigru_contextualize(xs, flat_mask, params, "word_gru")
    pooled, alpha = _attention_pool_batch(token_vecs, flat_pool_mask, params, "word_attn")
    width = token_vecs.shape[-1]
    sent_pre = T.reshape(pooled, (b, s, width))
    return token_vecs, sent_pre, alpha


def sentence_stage(sent_in: Tensor, sent_mask: np.ndarray,
                   params: dict[str, Tensor], n_layers: int) -> tuple[list[Tensor], Tensor, Tensor]:
    """Sentence level: bi-GRU layer(s) over sentence vectors, then
    attention pooling into the document vector.

    Returns (per-layer outputs, doc [B, w], sent_alpha)."""
    b, s, _ = sent_in.shape
    layers: list[Tensor] = []
    cur = sent_in
    for layer in range(n_layers):
        xs = [T.slice_index(cur, step, axis=1) for step in range(s)]
        cur = bigru_contextualize(xs, sent_mask, params, f"sent_gru{layer}")
        layers.append(cur)
    doc, alpha = _attention_pool_batch(cur, sent_mask, params, "sent_attn")
    return layers, doc, alpha


def masked_mean_pool(sent_pre: Tensor, sent_mask: np.ndarray) -> Tensor:
    """Document vector as the mean of (real) sentence vectors."""
    b, s, d = sent_pre.shape
    weights = sent_mask.astype(sent_pre.data.dtype)
    weights = weights / weights.sum(axis=1, keepdims=True)
    return T.reshape(T.matmul(Tensor(weights.reshape(b, 1, s)), sent_pre), (b, d))


def encode_batch(batch: DocBatch, table: EmbeddingTable | None,
                 params: dict[str, Tensor], cfg: ModelConfig) -> BatchEncoding:
    """Run the full (CDA-free) encoder over a padded batch."""
    if cfg.encoder == "gru":
        token_vecs, sent_pre, word_alpha = word_stage(batch, table, params)
        layers, doc, sent_alpha = sentence_stage(sent_pre, batch.sent_mask, params,
                                                 cfg.n_sent_gru_layers)
        return BatchEncoding(sent_pre=sent_pre, sent_layers=layers, sent_ctx=layers[-1],
                             doc=doc, sent_mask=batch.sent_mask, token_vecs=token_vecs,
                             token_mask=batch.token_mask, word_alpha=word_alpha.data,
                             sent_alpha=sent_alpha.data)
    sent_pre = Tensor(batch.sent_vecs)
    if cfg.encoder == "precomputed_avg":
        doc = masked_mean_pool(sent_pre, batch.sent_mask)
        return BatchEncoding(sent_pre=sent_pre, sent_layers=[], sent_ctx=sent_pre,
                             doc=doc, sent_mask=batch.sent_mask)
    layers, doc, sent_alpha = sentence_stage(sent_pre, batch.sent_mask, params,
                                             cfg.n_sent_gru_layers)
    return BatchEncoding(sent_pre=sent_pre, sent_layers=layers, sent_ctx=layers[-1],
                         doc=doc, sent_mask=batch.sent_mask, sent_alpha=sent_alpha.data)


# ---------------------------------------------------------------------------
# per-document surface
# ---------------------------------------------------------------------------

@dataclass
class EncodedDocument:
    """All intermediate vectors of one document.

    token_vectors is [S, T, 2h] with its strict token mask; sentence and
    document vectors are squeezed to [S, w] and [w].
    """

    doc_id: str
    sent_pre: Tensor                  # [S, w]
    sent_ctx: Tensor                  # [S, w]
    doc: Tensor                       # [w]
    sent_layers: list[Tensor]         # [S, w] per sentence-GRU layer
    token_vectors: Tensor | None = None  # [S, T, 2h]
    token_mask: np.ndarray | None = None  # [S, T]
    sent_lengths: list[int] | None = None
    sent_tilde: Tensor | None = None  # [S, w]
    doc_tilde: Tensor | None = None   # [w]
    word_alpha: np.ndarray | None = None
    sent_alpha: np.ndarray | None = None

    @property
    def n_sentences(self) -> int:
        return self.sent_pre.shape[0]

    @property
    def width(self) -> int:
        return self.doc.shape[-1]

    def final_doc(self) -> Tensor:
        return self.doc_tilde if self.doc_tilde is not None else self.doc


def _squeeze_encoding(enc: BatchEncoding, doc_id: str,
                      sent_lengths: list[int] | None) -> EncodedDocument:
    s = enc.sent_mask.shape[1]
    w = enc.width
    return EncodedDocument(
        doc_id=doc_id,
        sent_pre=T.reshape(enc.sent_pre, (s, w)),
        sent_ctx=T.reshape(enc.sent_ctx, (s, w)),
        doc=T.reshape(enc.doc, (w,)),
        sent_layers=[T.reshape(layer, (s, w)) for layer in enc.sent_layers],
        token_vectors=enc.token_vecs,
        token_mask=enc.token_mask.reshape(s, -1) if enc.token_mask is not None else None,
        sent_lengths=sent_lengths,
        word_alpha=enc.word_alpha,
        sent_alpha=enc.sent_alpha.reshape(-1) if enc.sent_alpha is not None else None,
    )


def encode_document(doc: Document, table: EmbeddingTable,
                    params: dict[str, Tensor], cfg: ModelConfig) -> EncodedDocument:
    """Encode one document through the full pipeline (no CDA)."""
    batch = pad_docs([doc])
    enc = encode_batch(batch, table, params, cfg)
    return _squeeze_encoding(enc, doc.id, [len(s) for s in doc.sentences])


def encode_from_sent_pre(doc_id: str, vectors: np.ndarray,
                         params: dict[str, Tensor], cfg: ModelConfig) -> EncodedDocument:
    """Run the sentence-level stages from externally provided sentence
    vectors, exactly as encode_document would from that point."""
    if vectors.ndim != 2:
        raise DataError(f"sentence vectors for {doc_id!r} must be 2-D")
    if vectors.shape[1] != cfg.sent_vec_width:
        raise ShapeError(
            f"sentence vector width {vectors.shape[1]} does not match configured width "
            f"{cfg.sent_vec_width}")
    batch = pad_precomputed([np.asarray(vectors)], [doc_id])
    enc = encode_batch(batch, None, params, cfg)
    return _squeeze_encoding(enc, doc_id, None)


class PrecomputedVectors:
    """Sentence-vector store: JSON-lines of {doc_id, vectors}."""

    def __init__(self, records: dict[str, np.ndarray]):
        self.records = records

    @staticmethod
    def load(path) -> "PrecomputedVectors":
        records: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    doc_id = rec["doc_id"]
                    vecs = np.asarray(rec["vectors"], dtype=np.float64)
                except (json.JSONDecodeError, KeyError, ValueError) as e:
                    raise DataError(f"{path}:{lineno}: bad sentence-vector record: {e}") from e
                records[doc_id] = vecs
        return PrecomputedVectors(records)

    def get(self, doc_id: str, expected_sentences: int | None = None) -> np.ndarray:
        if doc_id not in self.records:
            raise DataError(f"no precomputed vectors for document {doc_id!r}")
        vecs = self.records[doc_id]
        if expected_sentences is not None and vecs.shape[0] != expected_sentences:
            raise DataError(
                f"document {doc_id!r}: {vecs.shape[0]} sentence vectors for "
                f"{expected_sentences} sentences")
        return vecs

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for doc_id, vecs in self.records.items():
                f.write(json.dumps({"doc_id": doc_id, "vectors": vecs.tolist()}) + "\n")


def load_precomputed_sentence_vectors(path, doc_id: str, params: dict[str, Tensor],
                                      cfg: ModelConfig,
                                      expected_sentences: int | None = None) -> EncodedDocument:
    """Load a document's precomputed sentence vectors and continue the
    pipeline from sent_pre (token stage skipped)."""
    store = PrecomputedVectors.load(path)
    vecs = store.get(doc_id, expected_sentences)
    return encode_from_sent_pre(doc_id, vecs, params, cfg)
