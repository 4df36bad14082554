"""Pair datasets: JSON-lines schema, ingestion, pair-construction
transforms, and a synthetic topical benchmark generator.

Pair file format (one JSON object per line):

    {"id": str, "label": 0|1,
     "doc_a": [sentence, ...], "doc_b": [sentence, ...],
     "gold_side": "a"|"b",        # optional, positives only
     "gold_sentences": [int, ...]} # optional, positives only

The generator writes train/dev/test pair files plus a sidecar metadata
JSON recording the full generation spec and seed.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .encoder import Document, document_from_sentences, filter_chars, tokenize
from .errors import DataError


@dataclass
class PairExample:
    """Two documents, a binary label, and optional gold localization."""

    id: str
    doc_a: Document
    doc_b: Document
    label: int
    gold_side: str | None = None       # "a" | "b"
    gold_sentences: list[int] | None = None  # sorted indices into gold_side's sentences

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"pair {self.id!r}: label must be 0 or 1")
        has_gold = self.gold_side is not None or self.gold_sentences is not None
        if has_gold and self.label != 1:
            raise DataError(f"pair {self.id!r}: gold localization on a negative pair")
        if self.gold_side is not None and self.gold_side not in ("a", "b"):
            raise DataError(f"pair {self.id!r}: gold_side must be 'a' or 'b'")
        if self.gold_sentences is not None:
            if self.gold_side is None:
                raise DataError(f"pair {self.id!r}: gold_sentences without gold_side")
            n = self.gold_doc().n_sentences
            if any(i < 0 or i >= n for i in self.gold_sentences):
                raise DataError(f"pair {self.id!r}: gold sentence index out of range")
            self.gold_sentences = sorted(self.gold_sentences)

    def gold_doc(self) -> Document:
        return self.doc_a if self.gold_side == "a" else self.doc_b

    def target_doc(self) -> Document:
        """The non-localization side, whose document vector sentences are
        scored against."""
        return self.doc_b if self.gold_side == "a" else self.doc_a


def _raw_record(ex: PairExample) -> dict:
    rec = {"id": ex.id, "label": ex.label,
           "doc_a": list(ex.doc_a.raw_sentences), "doc_b": list(ex.doc_b.raw_sentences)}
    if ex.gold_side is not None:
        rec["gold_side"] = ex.gold_side
    if ex.gold_sentences is not None:
        rec["gold_sentences"] = list(ex.gold_sentences)
    return rec


def emit_pairs(examples: list[PairExample], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(_raw_record(ex)) + "\n")


def iter_pair_records(path):
    """Yield (lineno, record) for a pair file, validating JSON per line."""
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed JSON: {e}") from e
            yield lineno, rec


_REQUIRED_KEYS = ("id", "label", "doc_a", "doc_b")


def parse_pairs(path, vocab: dict[str, int], cfg: ModelConfig | None = None) -> list[PairExample]:
    """Parse and validate a pair file; character filtering and tokenization
    are applied to every sentence. Errors carry the offending line number."""
    cfg = cfg or ModelConfig()
    out: list[PairExample] = []
    for lineno, rec in iter_pair_records(path):
        for k in _REQUIRED_KEYS:
            if k not in rec:
                raise DataError(f"{path}:{lineno}: missing key {k!r}")
        try:
            doc_a = document_from_sentences(f"{rec['id']}:a", rec["doc_a"], vocab, cfg)
            doc_b = document_from_sentences(f"{rec['id']}:b", rec["doc_b"], vocab, cfg)
            ex = PairExample(id=rec["id"], doc_a=doc_a, doc_b=doc_b,
                             label=rec["label"], gold_side=rec.get("gold_side"),
                             gold_sentences=rec.get("gold_sentences"))
        except DataError as e:
            raise DataError(f"{path}:{lineno}: {e}") from e
        out.append(ex)
    return out


def vocab_tokens_from_file(path):
    """Token lists from every sentence of a pair file (for vocab building)."""
    for _, rec in iter_pair_records(path):
        for side in ("doc_a", "doc_b"):
            for sent in rec.get(side, []):
                yield tokenize(sent)


# ---------------------------------------------------------------------------
# pair-construction transforms
# ---------------------------------------------------------------------------

def make_negatives(positives: list[PairExample], pool: list[Document],
                   seed: int = 0) -> list[PairExample]:
    """For each positive (A, B+), draw B- uniformly from the pool excluding
    B+ and A. No lexical-overlap filtering is applied."""
    if len(pool) <= 1:
        raise DataError("negative sampling needs a pool of more than one document")
    rng = np.random.default_rng(seed)
    out = []
    for pos in positives:
        eligible = [d for d in pool if d.id not in (pos.doc_a.id, pos.doc_b.id)]
        if not eligible:
            raise DataError(f"pair {pos.id!r}: no eligible negative in the pool")
        neg_doc = eligible[int(rng.integers(len(eligible)))]
        out.append(PairExample(id=f"{pos.id}-neg", doc_a=pos.doc_a, doc_b=neg_doc, label=0))
    return out


class EmptyAfterStrip(DataError):
    """Stripping the span emptied the sentence; the caller must discard the pair."""


_WS = re.compile(r"\s+")


def strip_citation_span(sentence: str, span: tuple[int, int]) -> tuple[str, bool]:
    """Excise a character range (e.g. a citation marker) from a sentence,
    normalize whitespace, and flag the sentence as gold."""
    start, end = span
    if not (0 <= start <= end <= len(sentence)):
        raise DataError(f"span {span} out of bounds for sentence of length {len(sentence)}")
    stripped = _WS.sub(" ", sentence[:start] + sentence[end:]).strip()
    if not stripped:
        raise EmptyAfterStrip("sentence empty after removing span")
    return stripped, True


# ---------------------------------------------------------------------------
# synthetic benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale topical pair benchmark.

    Topics are Zipfian token distributions over disjoint-leaning
    vocabulary blocks. A positive pair is two same-topic documents where
    one sentence of doc_a is a near-copy of a random doc_b sentence
    (token dropout `plant_dropout`), recorded as gold. A negative pair
    crosses topics with no plant.
    """

    vocab_size: int = 2000
    n_topics: int = 8
    sentences_per_doc: tuple[int, int] = (5, 10)
    tokens_per_sentence: tuple[int, int] = (5, 12)
    plant_dropout: float = 0.1
    n_pairs: int = 6250
    seed: int = 0
    zipf_exponent: float = 1.1

    def __post_init__(self):
        if min(self.vocab_size, self.n_topics, self.n_pairs) < 1:
            raise DataError("vocab_size, n_topics, n_pairs must be positive")
        if not (0.0 <= self.plant_dropout < 1.0):
            raise DataError("plant_dropout must be in [0, 1)")
        for lo, hi in (self.sentences_per_doc, self.tokens_per_sentence):
            if lo < 1 or hi < lo:
                raise DataError("length ranges must be positive and ordered")


def _topic_cdfs(spec: SyntheticSpec, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per topic: (token ordering, sampling cdf). Rank probabilities are
    Zipfian; each topic's own vocabulary block occupies the head ranks."""
    v = spec.vocab_size
    ranks = np.arange(1, v + 1, dtype=np.float64)
    probs = ranks ** (-spec.zipf_exponent)
    probs /= probs.sum()
    cdf = np.cumsum(probs)
    block = v // spec.n_topics
    out = []
    for t in range(spec.n_topics):
        own = np.arange(t * block, (t + 1) * block if t < spec.n_topics - 1 else v)
        rest = np.setdiff1d(np.arange(v), own)
        ordering = np.concatenate([rng.permutation(own), rng.permutation(rest)])
        out.append((ordering, cdf))
    return out


def _sample_sentence(topic, rng: np.random.Generator, n_tokens: int) -> list[str]:
    ordering, cdf = topic
    ranks = np.searchsorted(cdf, rng.random(n_tokens))
    return [f"w{ordering[r]}" for r in ranks]


def _sample_doc(topic, rng: np.random.Generator, spec: SyntheticSpec) -> list[list[str]]:
    lo_s, hi_s = spec.sentences_per_doc
    lo_t, hi_t = spec.tokens_per_sentence
    n_sents = int(rng.integers(lo_s, hi_s + 1))
    return [_sample_sentence(topic, rng, int(rng.integers(lo_t, hi_t + 1)))
            for _ in range(n_sents)]


def _token_overlap(sentence: list[str], other_doc_tokens: set[str]) -> float:
    toks = set(sentence)
    return len(toks & other_doc_tokens) / len(toks)


def _make_positive(topics, rng, spec: SyntheticSpec, pair_idx: int) -> dict:
    """Same-topic pair with one near-copied sentence planted into doc_a."""
    for _ in range(50):
        t = int(rng.integers(spec.n_topics))
        doc_a = _sample_doc(topics[t], rng, spec)
        doc_b = _sample_doc(topics[t], rng, spec)
        src = doc_b[int(rng.integers(len(doc_b)))]
        keep = rng.random(len(src)) >= spec.plant_dropout
        if not keep.any():
            keep[int(rng.integers(len(src)))] = True
        planted = [tok for tok, k in zip(src, keep) if k]
        gold = int(rng.integers(len(doc_a)))
        doc_a[gold] = planted
        b_tokens = {tok for s in doc_b for tok in s}
        overlaps = [_token_overlap(s, b_tokens) for s in doc_a]
        if overlaps[gold] > float(np.mean(overlaps)):
            return {"id": f"pos-{pair_idx:05d}", "label": 1,
                    "doc_a": [" ".join(s) for s in doc_a],
                    "doc_b": [" ".join(s) for s in doc_b],
                    "gold_side": "a", "gold_sentences": [gold]}
    raise DataError("could not construct a positive pair satisfying the overlap invariant")


def _make_negative(topics, rng, spec: SyntheticSpec, pair_idx: int) -> dict:
    t1 = int(rng.integers(spec.n_topics))
    t2 = int(rng.integers(spec.n_topics - 1))
    if t2 >= t1:
        t2 += 1
    doc_a = _sample_doc(topics[t1], rng, spec)
    doc_b = _sample_doc(topics[t2], rng, spec)
    return {"id": f"neg-{pair_idx:05d}", "label": 0,
            "doc_a": [" ".join(s) for s in doc_a],
            "doc_b": [" ".join(s) for s in doc_b]}


def generate_records(spec: SyntheticSpec) -> list[dict]:
    """All pair records, positives and negatives interleaved for balanced
    splits."""
    rng = np.random.default_rng(spec.seed)
    topics = _topic_cdfs(spec, rng)
    n_pos = (spec.n_pairs + 1) // 2
    n_neg = spec.n_pairs - n_pos
    records = []
    for i in range(n_pos):
        records.append(_make_positive(topics, rng, spec, i))
        if i < n_neg:
            records.append(_make_negative(topics, rng, spec, i))
    return records


def split_records(records: list[dict]) -> dict[str, list[dict]]:
    n = len(records)
    n_train = int(n * 0.8)
    n_dev = int(n * 0.1)
    return {"train": records[:n_train],
            "dev": records[n_train:n_train + n_dev],
            "test": records[n_train + n_dev:]}


def gen_synthetic(spec: SyntheticSpec, out_dir) -> dict[str, Path]:
    """Write train/dev/test pair files plus a metadata sidecar; returns the
    paths keyed by split name (and "meta")."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = generate_records(spec)
    splits = split_records(records)
    paths: dict[str, Path] = {}
    for name, recs in splits.items():
        p = out_dir / f"{name}.jsonl"
        with open(p, "w", encoding="utf-8") as f:
            for rec in recs:
                f.write(json.dumps(rec) + "\n")
        paths[name] = p
    meta = {"spec": asdict(spec), "counts": {k: len(v) for k, v in splits.items()}}
    meta_path = out_dir / "meta.json"
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2)
    paths["meta"] = meta_path
    return paths
