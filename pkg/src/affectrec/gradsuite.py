"""Finite-difference gradient checks for every differentiable operation.

Each case builds float64 inputs from a seeded generator and returns a scalar
function of them; :func:`run_suite` checks every case over many seeds and
records the worst relative error per operation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import ops
from .engine.gradcheck import grad_check, projected
from .engine.tensor import Tensor
from .models import HeadKind, LstmConfig, ResNetConfig, build_model, lstm_cell
from .objectives import ccc_loss, class_weights, weighted_sigmoid_ce

DEFAULT_TOLERANCE = 1e-4
DEFAULT_SEEDS = 20

# make(rng) -> (scalar fn, inputs, elements probed per input or None for all)
CaseFactory = Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[Tensor], int | None]]


def _t(rng: np.random.Generator, *shape: int, grad: bool = True, scale: float = 1.0) -> Tensor:
    return Tensor(scale * rng.standard_normal(shape), requires_grad=grad, dtype=np.float64)


def _conv(rng):
    stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    x, w, b = _t(rng, 2, 3, 6, 6), _t(rng, 4, 3, 3, 3), _t(rng, 4)
    return projected(lambda x, w, b: ops.conv2d(x, w, b, stride, padding)), [x, w, b], None


def _conv_1x1(rng):
    stride = int(rng.integers(1, 3))
    x, w = _t(rng, 2, 4, 5, 5), _t(rng, 3, 4, 1, 1)
    return projected(lambda x, w: ops.conv2d(x, w, None, stride, 0)), [x, w], None


def _max_pool(rng):
    return projected(lambda x: ops.max_pool2d(x, 3, 2)), [_t(rng, 2, 2, 7, 7)], None


def _avg_pool(rng):
    return projected(ops.global_avg_pool), [_t(rng, 2, 3, 4, 4)], None


def _bn(train: bool):
    def make(rng):
        x, gamma, beta = _t(rng, 4, 3, 3, 3), _t(rng, 3), _t(rng, 3)
        mean, var = rng.standard_normal(3), rng.uniform(0.5, 2.0, 3)

        def fn(x, gamma, beta):
            return ops.batch_norm(x, gamma, beta, mean.copy(), var.copy(), train=train)

        return projected(fn), [x, gamma, beta], None

    return make


def _linear(rng):
    return projected(ops.linear), [_t(rng, 5, 4), _t(rng, 4, 3), _t(rng, 3)], None


def _unary(op: str):
    def make(rng):
        return projected(lambda x: ops.elementwise(op, x)), [_t(rng, 3, 4, scale=2.0)], None

    return make


def _binary(op: str):
    def make(rng):
        return projected(lambda a, b: ops.elementwise(op, a, b)), [_t(rng, 3, 4), _t(rng, 3, 4)], None

    return make


def _lstm_cell(rng):
    inputs = [_t(rng, 3, 5), _t(rng, 3, 4), _t(rng, 3, 4), _t(rng, 5, 16), _t(rng, 4, 16), _t(rng, 16)]
    ph, pc = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))

    def fn(*args):
        h, c = lstm_cell(*args)
        return ops.add(ops.sum(ops.mul(h, Tensor(ph))), ops.sum(ops.mul(c, Tensor(pc))))

    return fn, inputs, None


def _ce(rng):
    logits = _t(rng, 6, 8, scale=3.0)
    labels = (rng.random((6, 8)) < 0.3).astype(np.float64)
    weights = class_weights(rng.integers(1, 1000, size=8))
    return (lambda x: weighted_sigmoid_ce(x, labels, weights)), [logits], None


def _ccc_loss(rng):
    pred = _t(rng, 2, 10, 2)
    gold = rng.standard_normal((2, 10, 2))
    return (lambda p: ccc_loss(p, gold)), [pred], None


def _desk_model(rng):
    """Full desk network in train mode on a 2 x 2-frame clip.

    Each seed probes the clip plus a random handful of parameter tensors.
    """
    model = build_model(
        ResNetConfig.desk(), LstmConfig.desk(), HeadKind.DIMENSIONAL, seed=int(rng.integers(1 << 31))
    ).astype(np.float64)
    names = list(model.params)
    probed = set(rng.choice(len(names), size=6, replace=False).tolist())
    for i, n in enumerate(names):
        model.params[n].requires_grad = i in probed
    clip = Tensor(rng.uniform(0, 1, (2, 2, 3, 32, 32)), requires_grad=True, dtype=np.float64)
    probed_params = [model.params[names[i]] for i in sorted(probed)]
    w = rng.standard_normal((2, 2, 2))

    def fn(clip, *_):
        return ops.sum(ops.mul(model.forward(clip, train=True), Tensor(w)))

    return fn, [clip, *probed_params], 2


CASES: dict[str, CaseFactory] = {
    "conv2d": _conv,
    "conv2d_1x1": _conv_1x1,
    "max_pool2d": _max_pool,
    "global_avg_pool": _avg_pool,
    "batch_norm_train": _bn(True),
    "batch_norm_eval": _bn(False),
    "linear": _linear,
    "relu": _unary("relu"),
    "sigmoid": _unary("sigmoid"),
    "tanh": _unary("tanh"),
    "add": _binary("add"),
    "sub": _binary("sub"),
    "mul": _binary("mul"),
    "lstm_cell": _lstm_cell,
    "weighted_sigmoid_ce": _ce,
    "ccc_loss": _ccc_loss,
    "desk_model": _desk_model,
}


@dataclass
class OpResult:
    name: str
    max_error: float
    seeds: int
    tolerance: float
    seconds: float
    errors: list[float] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)


def check_case(name: str, factory: CaseFactory, seeds: Iterable[int], tolerance: float, h: float = 1e-5) -> OpResult:
    start = time.perf_counter()
    errors = []
    for seed in seeds:
        rng = np.random.default_rng([seed, len(name)])
        fn, inputs, max_elements = factory(rng)
        errors.append(
            grad_check(fn, inputs, h=h, max_elements=max_elements, rng=rng, refine_above=tolerance / 10)
        )
    errors = [float(e) for e in errors]
    return OpResult(name, max(errors), len(errors), tolerance, time.perf_counter() - start, errors)


def run_suite(
    seeds: int = DEFAULT_SEEDS,
    tolerance: float = DEFAULT_TOLERANCE,
    only: Sequence[str] | None = None,
    cases: dict[str, CaseFactory] | None = None,
) -> list[OpResult]:
    """Check each registered case over seeds ``0..seeds-1``."""
    registry = CASES if cases is None else cases
    names = list(registry) if only is None else list(only)
    unknown = [n for n in names if n not in registry]
    if unknown:
        raise KeyError(f"unknown gradient cases: {unknown}")
    return [check_case(n, registry[n], range(seeds), tolerance) for n in names]


def report_text(results: Sequence[OpResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'operation':<{width}}  {'max_rel_error':>13}  {'seeds':>5}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.max_error:>13.3e}  {r.seeds:>5}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
