"""Side-by-side fine-tuning of one dataset under several initialisation strategies."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from ..data.storage import Dataset
from ..engine.tensor import ContractError
from ..models import InitStrategy
from ..postprocess import DIMENSIONS, chain_search
from .config import HyperParams
from .loops import _partitions, evaluate, finetune_dimensional, predict


@dataclass
class StrategyRow:
    strategy: str
    best_epoch: int
    epochs_run: int
    stop_reason: str
    val_mean_ccc: float
    val: dict[str, dict[str, float]] = field(default_factory=dict)
    test: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def epochs_to_best(self) -> int:
        return self.best_epoch


@dataclass
class Comparison:
    rows: list[StrategyRow]
    seed: int
    hyperparameters: dict

    def to_dict(self) -> dict:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d["epochs_to_best"] = r.epochs_to_best
            rows.append(d)
        return {"seed": self.seed, "hyperparameters": self.hyperparameters, "rows": rows}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def row(self, strategy: str) -> StrategyRow:
        for r in self.rows:
            if r.strategy == strategy:
                return r
        raise KeyError(strategy)

    def text(self, key: str = "post_ccc") -> str:
        """Aligned table: one row per strategy, ``test (val)`` per dimension."""

        def cell(r: StrategyRow, dim: str) -> str:
            v = r.val.get(dim, {}).get(key)
            t = r.test.get(dim, {}).get(key)
            vs = "-" if v is None else f"{v:.3f}"
            ts = "-" if t is None else f"{t:.3f}"
            return f"{ts} ({vs})"

        width = max([len("Initialisation Strategy")] + [len(r.strategy) for r in self.rows])
        head = f"{'Initialisation Strategy':<{width}}  " + "  ".join(f"{d.capitalize():>15}" for d in DIMENSIONS)
        lines = [head + f"  {'epochs-to-best':>14}"]
        for r in self.rows:
            cells = "  ".join(f"{cell(r, d):>15}" for d in DIMENSIONS)
            lines.append(f"{r.strategy:<{width}}  {cells}  {r.epochs_to_best:>14d}")
        lines.append("values: test (validation) CCC")
        return "\n".join(lines)


def compare_initialisations(
    dataset: Dataset,
    hp: HyperParams,
    strategies: Sequence[InitStrategy | str],
    arch="desk",
    out_dir=None,
    postprocess: bool = True,
) -> Comparison:
    """Fine-tune once per strategy with the same seed, data and hyperparameters.

    Validation and test CCC are reported before and after a chain searched on
    that strategy's own validation predictions.
    """
    if len(strategies) < 2:
        raise ContractError("compare needs at least two strategies")
    parsed = [InitStrategy.parse(s) if isinstance(s, str) else s for s in strategies]
    _, val_v, test_v = _partitions(dataset, hp.seed)
    L = hp.sequence_length
    rows = []
    for i, init in enumerate(parsed):
        run_dir = None if out_dir is None else Path(out_dir) / f"{i:02d}_{init.kind}"
        _, report, model = finetune_dimensional(dataset, hp, init, run_dir, arch, postprocess=False)
        chain = None
        if postprocess:
            p = predict(model, val_v, dataset.gold, L, hp.eval_batch)
            chain = chain_search(p.pred, p.target, val_v[0].frame_period, p.segments)
            if run_dir is not None:
                chain.save(run_dir / "checkpoint" / "chain.json")
        val = evaluate(model, dataset, val_v, chain, L, hp.eval_batch)
        test = evaluate(model, dataset, test_v, chain, L, hp.eval_batch) if test_v else {}
        rows.append(
            StrategyRow(init.label, report.best_epoch, report.epochs_run, report.stop_reason, report.best_metric, val, test)
        )
    result = Comparison(rows, hp.seed, hp.to_dict())
    if out_dir is not None:
        result.save(Path(out_dir) / "comparison.json")
    return result
