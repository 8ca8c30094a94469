"""Architecture configuration and presets."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

from ..engine.tensor import ContractError


@dataclass(frozen=True)
class ResNetConfig:
    stem_channels: int = 64
    stem_kernel: int = 7
    stem_stride: int = 2
    stem_padding: int = 3
    pool_window: int = 3
    pool_stride: int = 2
    block_replications: tuple[int, ...] = (3, 4, 6, 3)
    block_widths: tuple[tuple[int, int, int], ...] = (
        (64, 64, 256),
        (128, 128, 512),
        (256, 256, 1024),
        (512, 512, 2048),
    )
    stage_strides: tuple[int, ...] = (1, 2, 2, 2)
    input_size: tuple[int, int] = (150, 150)
    in_channels: int = 3
    use_batch_norm: bool = True

    def __post_init__(self):
        object.__setattr__(self, "block_replications", tuple(int(r) for r in self.block_replications))
        object.__setattr__(self, "block_widths", tuple(tuple(int(w) for w in t) for t in self.block_widths))
        object.__setattr__(self, "stage_strides", tuple(int(s) for s in self.stage_strides))
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        if len(self.block_replications) != 4 or len(self.block_widths) != 4 or len(self.stage_strides) != 4:
            raise ContractError("a residual extractor has exactly 4 bottleneck stages")
        for w1, w2, w3 in self.block_widths:
            if w1 != w2 or w3 != 4 * w1:
                raise ContractError(f"bottleneck widths must be (w, w, 4w), got {(w1, w2, w3)}")
        if any(r < 1 for r in self.block_replications):
            raise ContractError("every stage needs at least one block")

    @property
    def feature_dim(self) -> int:
        return self.block_widths[-1][2]

    @classmethod
    def paper(cls) -> ResNetConfig:
        return cls()

    @classmethod
    def desk(cls) -> ResNetConfig:
        return cls(
            stem_channels=8,
            stem_kernel=3,
            stem_stride=1,
            stem_padding=1,
            block_replications=(1, 1, 1, 1),
            block_widths=((4, 4, 16), (8, 8, 32), (8, 8, 32), (16, 16, 64)),
            input_size=(32, 32),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> ResNetConfig:
        return cls(**d)


@dataclass(frozen=True)
class LstmConfig:
    input_dim: int = 2048
    hidden: int = 128
    layers: int = 2

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1 or self.input_dim < 1:
            raise ContractError("LSTM needs at least one layer and positive sizes")

    @classmethod
    def paper(cls) -> LstmConfig:
        return cls(input_dim=2048, hidden=128)

    @classmethod
    def desk(cls) -> LstmConfig:
        return cls(input_dim=64, hidden=32)

    def to_dict(self) -> dict:
        return asdict(self)


class HeadKind(str, enum.Enum):
    CATEGORICAL = "categorical"
    DIMENSIONAL = "dimensional"

    @property
    def width(self) -> int:
        return 8 if self is HeadKind.CATEGORICAL else 2


@dataclass(frozen=True)
class InitStrategy:
    """How a model's parameters are initialised.

    ``random_xavier`` draws fresh weights. ``external_checkpoint`` loads only
    the feature extractor from a foreign checkpoint (the stand-in for generic
    image-pretrained weights). ``pretrained_categorical`` loads the extractor
    and the LSTM from a checkpoint produced by categorical pretraining.
    """

    kind: str = "random_xavier"
    path: str | None = None
    load_lstm: bool = field(default=None)  # type: ignore[assignment]

    KINDS = ("random_xavier", "external_checkpoint", "pretrained_categorical")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ContractError(f"unknown init strategy {self.kind!r}")
        if self.kind != "random_xavier" and not self.path:
            raise ContractError(f"{self.kind} needs a checkpoint path")
        if self.load_lstm is None:
            object.__setattr__(self, "load_lstm", self.kind == "pretrained_categorical")

    @classmethod
    def parse(cls, spec: str) -> InitStrategy:
        """Parse ``random``, ``imagenet:<path>``/``external:<path>`` or ``pretrained:<path>``."""
        if spec in ("random", "random_xavier", "xavier"):
            return cls()
        prefix, _, path = spec.partition(":")
        if prefix in ("imagenet", "external"):
            return cls("external_checkpoint", path)
        if prefix == "pretrained":
            return cls("pretrained_categorical", path)
        raise ContractError(f"cannot parse init strategy {spec!r}")

    @property
    def label(self) -> str:
        if self.kind == "random_xavier":
            return "random"
        prefix = "imagenet" if self.kind == "external_checkpoint" else "pretrained"
        return f"{prefix}:{self.path}"
