"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import ops
from .tensor import ContractError, Tensor, no_grad


def projected(fn: Callable[..., Tensor], seed: int = 0) -> Callable[..., Tensor]:
    """Wrap a tensor-valued ``fn`` into a scalar by a fixed random projection.

    The projection weights are drawn once on the first call so that every
    finite-difference evaluation sees the same scalar function.
    """
    cache: dict[str, Tensor] = {}

    def scalar_fn(*inputs: Tensor) -> Tensor:
        out = fn(*inputs)
        if out.ndim == 0:
            return out
        if "w" not in cache:
            rng = np.random.default_rng(seed)
            cache["w"] = Tensor(rng.standard_normal(out.shape), dtype=out.dtype)
        return ops.sum(ops.mul(out, cache["w"]))

    return scalar_fn


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_elements: int | None = None,
    rng: np.random.Generator | None = None,
    refine_above: float | None = None,
    refinements: int = 2,
) -> float:
    """Max relative error between analytic and numeric gradients.

    ``fn`` maps the inputs to a scalar tensor. Only inputs with
    ``requires_grad`` are probed. The error per element is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``. With
    ``max_elements`` set, that many randomly chosen elements per input are
    probed instead of all of them.

    An element whose error exceeds ``refine_above`` is probed again with
    steps ``h/10``, ``h/100``, ... (``refinements`` times) and keeps the
    smallest error. A ReLU or max-pool switch point lying within ``h`` of the
    sample produces an error that vanishes as the step shrinks, whereas a
    wrong derivative does not depend on the step.
    """
    for t in inputs:
        if t.requires_grad and t.dtype != np.float64:
            raise ContractError("grad_check needs float64 inputs")
    rng = rng or np.random.default_rng(0)
    for t in inputs:
        t.zero_grad()
    loss = fn(*inputs)
    if loss.size != 1:
        raise ContractError("grad_check: fn must return a scalar")
    loss.backward()

    worst = 0.0
    for t in inputs:
        if not t.requires_grad:
            continue
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        for i in idx:
            a = analytic.reshape(-1)[i]
            err = _element_error(fn, inputs, flat, i, a, h)
            step = h
            for _ in range(refinements if refine_above is not None else 0):
                if err <= refine_above:
                    break
                step /= 10
                err = min(err, _element_error(fn, inputs, flat, i, a, step))
            worst = max(worst, err)
    return worst


def _element_error(fn, inputs, flat: np.ndarray, i: int, analytic: float, h: float) -> float:
    orig = flat[i]
    with no_grad():
        flat[i] = orig + h
        up = fn(*inputs).item()
        flat[i] = orig - h
        down = fn(*inputs).item()
    flat[i] = orig
    numeric = (up - down) / (2 * h)
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))
