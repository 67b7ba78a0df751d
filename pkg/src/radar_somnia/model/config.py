from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from ..overrides import apply_overrides


class _Config:
    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def to_dict(self):
        return asdict(self)

    def with_overrides(self, overrides):
        """Return a copy with ``{key: value}`` applied; unknown keys raise KeyError."""
        return apply_overrides(self, overrides)


@dataclass(frozen=True)
class ModelConfig(_Config):
    input_dim: int = 42
    hidden_dim: int = 64
    num_bilstm_layers: int = 2
    freq_bins_kept: int = 8
    head_hidden_dim: int = 64
    num_classes: int = 4
    dropout_rate: float = 0.3
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for k in ("input_dim", "hidden_dim", "num_bilstm_layers", "freq_bins_kept",
                  "head_hidden_dim"):
            if getattr(self, k) < 1:
                raise ValueError(f"{k} must be >= 1")
        if self.num_classes not in (2, 4):
            raise ValueError("num_classes must be 2 or 4")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class TrainConfig(_Config):
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 15
    chunk_length: int = 120
    class_weights: tuple | None = None
    gradient_clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    patience: int | None = None
    monitor_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.chunk_length < 8:
            raise ValueError("chunk_length must be >= 8")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.class_weights is not None and any(w <= 0 for w in self.class_weights):
            raise ValueError("class weights must be positive")
        if not 0.0 <= self.monitor_fraction <= 1.0:
            raise ValueError("monitor_fraction must lie in [0, 1]")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")
