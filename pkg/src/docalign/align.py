"""Sentence-to-document (S2D) alignment scoring and the joint evaluation
protocol.

A pair's localization side is its gold side: that document's sentence
vectors are ranked against the other document's final vector, either by
a softmax of dot products over the candidate set (attention alignment),
by cosine similarity (cosine alignment), or by a seeded uniform random
baseline. Unless oracle mode is on, a pair whose document-level (D2D)
prediction is wrong contributes zero to the S2D metrics.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cda import candidate_sentence_vectors
from .data import PairExample
from .errors import DataError, DocalignError
from .siamese import PairModel

SCORERS = ("attention", "cosine", "random")
PAT_DEFAULT = (1, 5, 10)


@dataclass
class AlignmentResult:
    pair_id: str
    sentence_scores: list[float]
    ranking: list[int]           # sentence indices by descending score
    gold: list[int]
    d2d_correct: bool
    probability: float | None = None

    def to_json_dict(self) -> dict:
        return {"pair_id": self.pair_id, "sentence_scores": self.sentence_scores,
                "ranking": self.ranking, "gold": self.gold,
                "d2d_correct": self.d2d_correct, "probability": self.probability}


@dataclass
class MetricReport:
    accuracy: float | None = None
    f1: float | None = None
    mrr: float | None = None
    p_at: dict[int, float] | None = None
    n_pairs: int | None = None
    notes: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        d = {}
        if self.accuracy is not None:
            d["accuracy"] = self.accuracy
        if self.f1 is not None:
            d["f1"] = self.f1
        if self.mrr is not None:
            d["mrr"] = self.mrr
        if self.p_at is not None:
            d["p_at"] = {str(k): v for k, v in sorted(self.p_at.items())}
        if self.n_pairs is not None:
            d["n_pairs"] = self.n_pairs
        if self.notes:
            d["notes"] = self.notes
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def format_table(self) -> str:
        """Aligned plain-text table; accuracy/F1/P@N as percentages, MRR raw."""
        rows = []
        if self.accuracy is not None:
            rows.append(("Accuracy", f"{100 * self.accuracy:.2f}"))
        if self.f1 is not None:
            rows.append(("F1", f"{100 * self.f1:.2f}"))
        if self.mrr is not None:
            rows.append(("MRR", f"{self.mrr:.4f}"))
        if self.p_at is not None:
            for n in sorted(self.p_at):
                rows.append((f"P@{n}", f"{100 * self.p_at[n]:.2f}"))
        if self.n_pairs is not None:
            rows.append(("Pairs", str(self.n_pairs)))
        width = max((len(k) for k, _ in rows), default=0)
        lines = [f"{k:<{width}}  {v}" for k, v in rows]
        lines += [f"# {n}" for n in self.notes]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# scoring functions
# ---------------------------------------------------------------------------

def att_scores(candidates: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Softmax of unscaled dot products of each candidate with the target."""
    dots = candidates @ target
    if np.isnan(dots).any():
        raise DocalignError("attention scoring received NaN vectors")
    e = np.exp(dots - dots.max())
    return e / e.sum()


def att_score(v: np.ndarray, d: np.ndarray, candidates) -> float:
    """Attention-alignment score of a sentence vector among candidates."""
    cands = np.asarray(candidates, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    idx = None
    for i in range(cands.shape[0]):
        if np.array_equal(cands[i], v):
            idx = i
            break
    if idx is None:
        raise DataError("att_score: v is not one of the candidates")
    return float(att_scores(cands, np.asarray(d, dtype=np.float64))[idx])


def cos_score(v: np.ndarray, d: np.ndarray) -> float:
    """Cosine similarity; defined as 0 when either vector is zero."""
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    nv, nd = np.linalg.norm(v), np.linalg.norm(d)
    if nv == 0.0 or nd == 0.0:
        return 0.0
    return float(v @ d / (nv * nd))


def _stable_seed(seed: int, pair_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{pair_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def localization_vectors(model: PairModel, pair: PairExample
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool, float]:
    """Run the pair through the model and pull out what S2D scoring needs:
    (loc-side sentence vectors, loc-side pre-CDA doc vector, target final
    doc vector, d2d_correct, probability).

    CDA models expose the same sentence vectors CDA attends over; the
    baseline uses the contextualized sentence vectors.
    """
    score, enc_a, enc_b = model.score_pair_full(pair.doc_a, pair.doc_b)
    enc_loc = enc_a if pair.gold_side == "a" else enc_b
    enc_tgt = enc_b if pair.gold_side == "a" else enc_a
    cfg = model.cfg
    if cfg.cda.variant != "none":
        sents = candidate_sentence_vectors(enc_loc, cfg)
    elif cfg.encoder == "precomputed_avg":
        sents = enc_loc.sent_pre
    else:
        sents = enc_loc.sent_ctx
    n = pair.gold_doc().n_sentences
    sent_vecs = sents.data[0, :n].astype(np.float64)
    loc_doc = enc_loc.doc.data[0].astype(np.float64)
    target = enc_tgt.final_doc().data[0].astype(np.float64)
    d2d_correct = score.predicted_label == pair.label
    return sent_vecs, loc_doc, target, d2d_correct, score.probability


def rank_sentences(pair: PairExample, model: PairModel | None,
                   scorer: str = "attention", seed: int = 0) -> AlignmentResult:
    """Score and rank the localization-side sentences of one pair.

    The random scorer draws i.i.d. uniform [0,1] scores from a generator
    seeded by (seed, pair id); it works without a model, in which case the
    D2D prediction is recorded as incorrect (use oracle metrics).
    """
    if scorer not in SCORERS:
        raise DataError(f"scorer must be one of {SCORERS}, got {scorer!r}")
    if pair.gold_side is None:
        raise DataError(f"pair {pair.id!r} has no localization side")
    n = pair.gold_doc().n_sentences
    if scorer == "random":
        rng = np.random.default_rng(_stable_seed(seed, pair.id))
        scores = rng.uniform(0.0, 1.0, size=n)
        d2d_correct, prob = False, None
        if model is not None:
            s = model.score_pair(pair.doc_a, pair.doc_b)
            d2d_correct, prob = s.predicted_label == pair.label, s.probability
    else:
        if model is None:
            raise DataError(f"the {scorer!r} scorer needs a model")
        sent_vecs, loc_doc, target, d2d_correct, prob = localization_vectors(model, pair)
        if scorer == "attention":
            cands = np.concatenate([sent_vecs, loc_doc[None, :]], axis=0)
            scores = att_scores(cands, target)[:n]
        else:
            scores = np.array([cos_score(v, target) for v in sent_vecs])
    ranking = sorted(range(n), key=lambda i: (-scores[i], i))
    return AlignmentResult(pair_id=pair.id, sentence_scores=[float(s) for s in scores],
                           ranking=ranking, gold=list(pair.gold_sentences or []),
                           d2d_correct=bool(d2d_correct), probability=prob)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

PAT_NOTE = "P@N = |gold in top N| / min(N, |gold|); --pat-norm n divides by N instead"


def ranking_metrics(results: list[AlignmentResult], oracle: bool,
                    p_at: tuple[int, ...] = PAT_DEFAULT,
                    pat_norm: str = "min") -> MetricReport:
    """MRR and P@N over positive pairs. MRR uses the rank of the first gold
    sentence. Unless oracle, a pair with a wrong D2D prediction contributes
    zero (the gating rule)."""
    if not results:
        raise DataError("ranking_metrics: no results")
    if pat_norm not in ("min", "n"):
        raise DataError(f"pat_norm must be 'min' or 'n', got {pat_norm!r}")
    rr_sum = 0.0
    pat_sums = {n: 0.0 for n in p_at}
    for res in results:
        if not res.gold:
            raise DataError(f"pair {res.pair_id!r} has no gold sentences")
        if not oracle and not res.d2d_correct:
            continue
        gold = set(res.gold)
        first = next(i for i, s in enumerate(res.ranking) if s in gold)
        rr_sum += 1.0 / (first + 1)
        for n in p_at:
            hits = len(gold & set(res.ranking[:n]))
            denom = min(n, len(gold)) if pat_norm == "min" else n
            pat_sums[n] += hits / denom
    count = len(results)
    return MetricReport(mrr=rr_sum / count,
                        p_at={n: s / count for n, s in pat_sums.items()},
                        n_pairs=count,
                        notes=[PAT_NOTE] + (["oracle D2D"] if oracle else []))


def classification_metrics(predictions, labels) -> MetricReport:
    """Accuracy and F1 of the positive class; 0/0 ratios are defined as 0."""
    predictions = list(predictions)
    labels = list(labels)
    if len(predictions) != len(labels):
        raise DataError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not predictions:
        raise DataError("classification_metrics: empty input")
    if any(y not in (0, 1) for y in labels) or any(p not in (0, 1) for p in predictions):
        raise DataError("labels and predictions must be binary")
    tp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 1)
    fp = sum(1 for p, y in zip(predictions, labels) if p == 1 and y == 0)
    fn = sum(1 for p, y in zip(predictions, labels) if p == 0 and y == 1)
    correct = sum(1 for p, y in zip(predictions, labels) if p == y)
    accuracy = correct / len(labels)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricReport(accuracy=accuracy, f1=f1, n_pairs=len(labels))


def joint_eval(pairs: list[PairExample], model: PairModel, scorer: str = "attention",
               oracle: bool = False, seed: int = 0, threads: int | None = None,
               pat_norm: str = "min") -> tuple[MetricReport, list[AlignmentResult]]:
    """Joint D2D + S2D evaluation: classification metrics over all pairs and
    ranking metrics over the positive pairs (gated unless oracle)."""
    if not pairs:
        raise DataError("joint_eval: no pairs")

    def one(pair: PairExample):
        if pair.label == 1 and pair.gold_sentences:
            result = rank_sentences(pair, model, scorer=scorer, seed=seed)
            pred = pair.label if result.d2d_correct else 1 - pair.label
            return pred, result
        return model.score_pair(pair.doc_a, pair.doc_b).predicted_label, None

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, pairs))
    else:
        outcomes = [one(p) for p in pairs]

    preds = [pred for pred, _ in outcomes]
    results = [res for _, res in outcomes if res is not None]
    report = classification_metrics(preds, [p.label for p in pairs])
    if results:
        s2d = ranking_metrics(results, oracle=oracle, pat_norm=pat_norm)
        report.mrr = s2d.mrr
        report.p_at = s2d.p_at
        report.notes = [f"scorer={scorer}"] + s2d.notes
    return report, results
