"""Adam with bias correction and a fixed learning rate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..engine.tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter {name!r}")


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray | None],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Update ``params`` in place from ``grads``; parameters without a gradient are skipped.

    Every gradient is checked before anything is modified, so an abort leaves
    parameters and moments untouched.
    """
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            raise NonFiniteGradientError(name)
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype, copy=False)
    return state


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState()

    def step(self) -> None:
        trainable = {n: t for n, t in self.params.items() if t.requires_grad}
        adam_step(
            {n: t.data for n, t in trainable.items()},
            {n: t.grad for n, t in trainable.items()},
            self.state,
            self.lr,
            self.betas[0],
            self.betas[1],
            self.eps,
        )

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None
