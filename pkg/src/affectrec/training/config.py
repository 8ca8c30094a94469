"""Hyperparameters and training reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..engine.tensor import ContractError

PAPER_LR = 4e-5
DESK_LR_SCALE = 10.0


@dataclass(frozen=True)
class HyperParams:
    learning_rate: float = PAPER_LR
    batch_size: int = 2
    sequence_length: int = 150
    max_epochs: int = 300
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    augment: bool = True
    seed: int = 0
    # extensions beyond the published setup
    min_delta: float = 0.0
    max_steps: int | None = None
    window_stride: int | None = None
    resample_stride: int | None = None
    oversample_multiplier: float | None = None
    freeze: tuple[str, ...] = ()
    eval_batch: int = 8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError("batch_size must be >= 1")
        if self.patience >= self.max_epochs:
            raise ContractError("patience must be smaller than max_epochs")
        object.__setattr__(self, "freeze", tuple(self.freeze))

    @classmethod
    def paper(cls, **overrides) -> HyperParams:
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> HyperParams:
        base = dict(learning_rate=PAPER_LR * DESK_LR_SCALE, sequence_length=16)
        return cls(**{**base, **overrides})

    def replace(self, **changes) -> HyperParams:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> HyperParams:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown hyperparameters: {sorted(unknown)}")
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    steps: int


@dataclass
class TrainReport:
    """Per-epoch history and model-selection outcome of one training run.

    ``wall_time`` is excluded from equality so reports of identical runs
    compare equal.
    """

    phase: str
    metric_name: str
    init: str
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_metric: float = float("-inf")
    stop_reason: str = ""
    total_steps: int = 0
    notes: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    @property
    def epochs_run(self) -> int:
        return len(self.history)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        if not include_timing:
            d.pop("wall_time")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainReport:
        d = dict(d)
        d["history"] = [EpochRecord(**h) for h in d.get("history", [])]
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def text(self) -> str:
        lines = [f"{'epoch':>5}  {'train_loss':>12}  {self.metric_name:>12}"]
        for h in self.history:
            mark = " *" if h.epoch == self.best_epoch else ""
            lines.append(f"{h.epoch:>5}  {h.train_loss:>12.6f}  {h.val_metric:>12.6f}{mark}")
        lines.append(f"best epoch {self.best_epoch} ({self.metric_name}={self.best_metric:.6f}); stop: {self.stop_reason}")
        return "\n".join(lines)
