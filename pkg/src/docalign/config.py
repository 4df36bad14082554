"""Model, CDA, and training configuration dataclasses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .errors import ConfigError

CDA_VARIANTS = ("none", "shallow", "deep")
INTEGRATIONS = ("concat", "add")
CANDIDATE_SOURCES = ("auto", "pre_context", "post_context")
ENCODERS = ("gru", "precomputed", "precomputed_avg")


@dataclass(frozen=True)
class CdaConfig:
    """Cross-document attention switches.

    variant: none (baseline), shallow (document level only), deep (sentence
    and document levels). integration: concat (affine projection back to the
    encoder width, adds parameters) or add (parameter-free). candidate_source
    picks which sentence vectors of the other document serve as attention
    candidates; "auto" resolves to pre_context for the GRU encoder and
    post_context (after the first sentence-level GRU layer) for precomputed
    sentence vectors.
    """

    variant: str = "none"
    integration: str = "concat"
    candidate_source: str = "auto"

    def __post_init__(self):
        if self.variant not in CDA_VARIANTS:
            raise ConfigError(f"cda.variant must be one of {CDA_VARIANTS}, got {self.variant!r}")
        if self.integration not in INTEGRATIONS:
            raise ConfigError(f"cda.integration must be one of {INTEGRATIONS}, got {self.integration!r}")
        if self.candidate_source not in CANDIDATE_SOURCES:
            raise ConfigError(
                f"cda.candidate_source must be one of {CANDIDATE_SOURCES}, got {self.candidate_source!r}")


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and variant switches for the pair model.

    hidden_size is the GRU hidden size h; bi-GRU outputs and hence sentence
    and document vectors have width 2h. All attention affines operate at
    that width.
    """

    hidden_size: int = 50
    embed_dim: int = 50
    vocab_size: int = 2000
    encoder: str = "gru"
    cda: CdaConfig = field(default_factory=CdaConfig)
    sent_vec_width: int = 100      # width of precomputed sentence vectors
    sent_gru_layers: int | None = None  # default: 1 for gru, 2 for precomputed
    max_sentence_tokens: int = 64
    max_doc_sentences: int = 64
    threshold: float = 0.5

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ConfigError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.cda.variant == "deep" and self.encoder != "gru":
            raise ConfigError(
                "deep CDA needs word-level token vectors; use the gru encoder mode")
        if self.encoder == "precomputed_avg" and self.cda.variant != "none":
            raise ConfigError("the averaging encoder has no attention stage for CDA")
        if self.hidden_size < 1 or self.embed_dim < 1:
            raise ConfigError("hidden_size and embed_dim must be positive")

    @property
    def width(self) -> int:
        """Width of sentence/document vectors."""
        if self.encoder == "precomputed_avg":
            return self.sent_vec_width
        return 2 * self.hidden_size

    @property
    def n_sent_gru_layers(self) -> int:
        if self.sent_gru_layers is not None:
            return self.sent_gru_layers
        return 2 if self.encoder == "precomputed" else 1

    @property
    def resolved_candidate_source(self) -> str:
        if self.cda.candidate_source != "auto":
            return self.cda.candidate_source
        return "post_context" if self.encoder == "precomputed" else "pre_context"

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        d = dict(d)
        cda = d.pop("cda", {})
        return ModelConfig(cda=CdaConfig(**cda), **d)


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch training knobs.

    Early stopping: training halts when the dev loss has not strictly
    improved for `patience` consecutive epochs; the best-dev parameters are
    retained.
    """

    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 5
    learning_rate: float = 1e-5
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
