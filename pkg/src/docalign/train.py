"""Mini-batch training with padding/masking, early stopping on validation
loss, checkpointing, and parameter accounting.

The training log is one dict per epoch: {epoch, train_loss, dev_loss,
dev_acc, seconds_train, seconds_infer}.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import CdaConfig, ModelConfig, TrainConfig
from .data import PairExample, parse_pairs, vocab_tokens_from_file
from .encoder import DocBatch, PrecomputedVectors, build_vocab
from .errors import DataError, NumericalError
from .siamese import PairModel, bce_loss
from .tensor import Adam, GradientTape, Tensor, clip_global_norm


def pad_batch(pairs: list[PairExample], model: PairModel
              ) -> tuple[DocBatch, DocBatch, np.ndarray]:
    """Pad a batch of pairs to its maxima; boolean masks mark real positions
    so every attention softmax gives padding zero weight."""
    if not pairs:
        raise DataError("pad_batch: empty batch")
    batch_a = model.doc_batch([p.doc_a for p in pairs])
    batch_b = model.doc_batch([p.doc_b for p in pairs])
    labels = np.array([[p.label] for p in pairs], dtype=np.float64)
    return batch_a, batch_b, labels


def _mean_probs(model: PairModel, pairs: list[PairExample], batch_size: int
                ) -> np.ndarray:
    probs = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start:start + batch_size]
        batch_a, batch_b, _ = pad_batch(chunk, model)
        p, _, _ = model.forward_batch(batch_a, batch_b)
        probs.append(p.data.reshape(-1))
    return np.concatenate(probs)


def evaluate_loss(model: PairModel, pairs: list[PairExample], batch_size: int
                  ) -> tuple[float, float]:
    """(mean BCE loss, accuracy) without recording gradients."""
    probs = _mean_probs(model, pairs, batch_size).astype(np.float64)
    labels = np.array([p.label for p in pairs], dtype=np.float64)
    clamped = np.clip(probs, 1e-7, 1 - 1e-7)
    loss = float(-(labels * np.log(clamped) + (1 - labels) * np.log(1 - clamped)).mean())
    preds = (probs >= model.cfg.threshold).astype(int)
    acc = float((preds == labels.astype(int)).mean())
    return loss, acc


@dataclass
class TrainResult:
    model: PairModel
    log: list[dict]
    best_epoch: int
    best_dev_loss: float
    checkpoint_path: Path | None = None
    log_path: Path | None = None


def _load_pairs(source, vocab, cfg: ModelConfig) -> list[PairExample]:
    if isinstance(source, (str, Path)):
        return parse_pairs(source, vocab, cfg)
    return list(source)


def train_model(train, dev, model_cfg: ModelConfig, train_cfg: TrainConfig,
                out_dir=None, vectors: PrecomputedVectors | None = None,
                vocab: dict[str, int] | None = None, quiet: bool = True) -> TrainResult:
    """Train on a pair file (or pair list), early-stopping on dev loss.

    The best-dev parameters are restored into the returned model. When
    out_dir is given, writes checkpoint.json and train_log.jsonl there.
    """
    if vocab is None:
        if not isinstance(train, (str, Path)):
            raise DataError("train_model needs a vocab when given in-memory pairs")
        vocab = build_vocab(vocab_tokens_from_file(train))
    train_pairs = _load_pairs(train, vocab, model_cfg)
    dev_pairs = _load_pairs(dev, vocab, model_cfg)
    if not train_pairs or not dev_pairs:
        raise DataError("empty training or dev set")

    model = PairModel(model_cfg, vocab=vocab, seed=train_cfg.seed, vectors=vectors)
    optimizer = Adam(model.params, learning_rate=train_cfg.learning_rate)
    rng = np.random.default_rng(train_cfg.seed)

    log: list[dict] = []
    best_dev = float("inf")
    best_epoch = -1
    best_params: dict[str, np.ndarray] | None = None
    since_improvement = 0

    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_pairs))
        epoch_loss, seen = 0.0, 0
        for start in range(0, len(order), train_cfg.batch_size):
            idx = order[start:start + train_cfg.batch_size]
            chunk = [train_pairs[i] for i in idx]
            batch_a, batch_b, labels = pad_batch(chunk, model)
            with GradientTape() as tape:
                probs, _, _ = model.forward_batch(batch_a, batch_b)
                loss = bce_loss(probs, labels)
                if not np.isfinite(loss.data):
                    raise NumericalError(
                        f"non-finite loss in epoch {epoch}, batch {start // train_cfg.batch_size} "
                        f"(pair ids {[p.id for p in chunk[:5]]}...)")
                optimizer.zero_grads()
                tape.backward(loss)
            clip_global_norm(model.params, train_cfg.clip_norm)
            optimizer.step()
            epoch_loss += float(loss.data) * len(chunk)
            seen += len(chunk)
        seconds_train = time.perf_counter() - t0

        t1 = time.perf_counter()
        dev_loss, dev_acc = evaluate_loss(model, dev_pairs, train_cfg.batch_size)
        seconds_infer = time.perf_counter() - t1

        entry = {"epoch": epoch, "train_loss": epoch_loss / seen, "dev_loss": dev_loss,
                 "dev_acc": dev_acc, "seconds_train": round(seconds_train, 3),
                 "seconds_infer": round(seconds_infer, 3)}
        log.append(entry)
        if not quiet:
            print(json.dumps(entry))

        if dev_loss < best_dev:
            best_dev = dev_loss
            best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in model.params.items()}
            since_improvement = 0
        else:
            since_improvement += 1
            if since_improvement >= train_cfg.patience:
                break

    if best_params is not None:
        for k, p in model.params.items():
            p.data = best_params[k]

    result = TrainResult(model=model, log=log, best_epoch=best_epoch, best_dev_loss=best_dev)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.checkpoint_path = out_dir / "checkpoint.json"
        model.save(result.checkpoint_path)
        result.log_path = out_dir / "train_log.jsonl"
        with open(result.log_path, "w", encoding="utf-8") as f:
            for entry in log:
                f.write(json.dumps(entry) + "\n")
    return result


# ---------------------------------------------------------------------------
# parameter accounting
# ---------------------------------------------------------------------------

@dataclass
class ParameterCount:
    components: dict[str, int]
    total: int
    cda_delta: int

    def format_table(self) -> str:
        width = max(len(k) for k in list(self.components) + ["cda delta", "total"])
        lines = [f"{name:<{width}}  {count:>10,}" for name, count in self.components.items()]
        lines.append(f"{'total':<{width}}  {self.total:>10,}")
        lines.append(f"{'cda delta':<{width}}  {self.cda_delta:>10,}")
        return "\n".join(lines)


def count_parameters(model_cfg: ModelConfig) -> ParameterCount:
    """Exact per-component parameter counts; the CDA delta is reported
    against the same config with CDA disabled."""
    model = PairModel(model_cfg)
    components: dict[str, int] = {}
    for name, p in model.params.items():
        comp = name.split(".", 1)[0]
        components[comp] = components.get(comp, 0) + p.size
    total = sum(components.values())
    baseline_cfg = dataclasses.replace(
        model_cfg, cda=dataclasses.replace(model_cfg.cda, variant="none"))
    baseline = PairModel(baseline_cfg).parameter_count()
    return ParameterCount(components=components, total=total, cda_delta=total - baseline)


def time_inference(model: PairModel, pairs: list[PairExample], repeats: int = 1) -> float:
    """Mean per-pair inference wall time in seconds."""
    t0 = time.perf_counter()
    for _ in range(repeats):
        for p in pairs:
            model.score_pair(p.doc_a, p.doc_b)
    return (time.perf_counter() - t0) / (repeats * len(pairs))
