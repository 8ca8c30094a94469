"""Command-line entry point.

Every command resolves its parameters from built-in defaults, then an
optional JSON ``--config`` file, then explicit ``--key value`` flags, and
writes the resolved run configuration to ``<out>/run_config.json``. Passing
that file back as ``--config`` replays the run.

Exit codes: 0 success, 1 failed gradient check, 2 bad usage or inputs,
3 training aborted on a non-finite value.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import gradsuite
from .data import SynthConfig, load_dataset, synth_generate
from .data.storage import DatasetExistsError
from .engine.tensor import ContractError, NonFiniteError
from .models import IncompatibleCheckpointError, InitStrategy
from .objectives import EMOTIONS, ccc
from .postprocess import DIMENSIONS, ChainConfig, apply_chain, chain_search
from .training import (
    HyperParams,
    NonFiniteGradientError,
    Predictions,
    compare_initialisations,
    evaluate,
    finetune_dimensional,
    pretrain_categorical,
)

logger = logging.getLogger("affectrec")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_NONFINITE = 0, 1, 2, 3
THREADS_ENV = "AFFECT_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Fully resolved parameters of one command invocation."""

    command: str
    seed: int
    out: str
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, directory) -> Path:
        path = Path(directory) / "run_config.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path


# -- parameter declarations ---------------------------------------------------
_HP_FIELDS = {f.name: f.default for f in dataclasses.fields(HyperParams)}
_SYNTH_FIELDS = {f.name for f in dataclasses.fields(SynthConfig)} - {"seed"}
_TRAIN_KEYS = {"data": None, "init": "random", "arch": "desk", "preset": "desk", **{k: None for k in _HP_FIELDS}}
_TRAIN_KEYS.pop("seed")

COMMAND_KEYS: dict[str, dict[str, Any]] = {
    "synth": {"preset": "categorical-desk", **{k: None for k in sorted(_SYNTH_FIELDS)}},
    "pretrain": dict(_TRAIN_KEYS),
    "finetune": {**_TRAIN_KEYS, "postprocess": True, "gold_mode": "mean"},
    "evaluate": {
        "checkpoint": None,
        "data": None,
        "partitions": ["devel", "test"],
        "chain": "auto",
        "sequence_length": None,
        "gold_mode": "mean",
    },
    "compare": {**_TRAIN_KEYS, "strategies": ["random"], "postprocess": True, "gold_mode": "mean"},
    "postprocess": {"predictions": None, "name": "validation", "chain": None, "frame_period": 0.04, "per_recording": False},
    "gradcheck": {"seeds": gradsuite.DEFAULT_SEEDS, "tolerance": gradsuite.DEFAULT_TOLERANCE, "ops": None},
}
COMMAND_KEYS["compare"].pop("init")

REQUIRED = {
    "pretrain": ("data",),
    "finetune": ("data",),
    "evaluate": ("checkpoint", "data"),
    "compare": ("data",),
    "postprocess": ("predictions",),
}

HELP = {
    "synth": "generate a synthetic categorical or dimensional corpus",
    "pretrain": "categorical pretraining with oversampling and weighted cross-entropy",
    "finetune": "dimensional fine-tuning with the CCC loss and post-processing search",
    "evaluate": "per-dimension CCC before and after post-processing",
    "compare": "fine-tune under several initialisation strategies",
    "postprocess": "search or apply a post-processing chain on saved predictions",
    "gradcheck": "finite-difference gradient checks per operation",
}


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _flag_type(default: Any) -> Callable[[str], Any]:
    if isinstance(default, bool):
        return _parse_value
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, str):
        return str
    return _parse_value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of parameters (or a stored run_config.json)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
    common.add_argument("--threads", type=int, help=f"BLAS threads (fallback: ${THREADS_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="affectrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, keys in COMMAND_KEYS.items():
        p = sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
        for key, default in keys.items():
            flag = "--" + key.replace("_", "-")
            if default is None:
                default = _HP_FIELDS.get(key)
            if isinstance(default, bool):
                p.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction, default=None)
            else:
                p.add_argument(flag, dest=key, type=_flag_type(default), default=None, metavar="VALUE")
    return parser


def resolve(command: str, args: argparse.Namespace) -> RunConfig:
    """Merge defaults < config file < flags; unknown keys in the file are rejected."""
    keys = COMMAND_KEYS[command]
    params = dict(keys)
    seed, out = 0, None
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if "params" in raw and "command" in raw:
            if raw["command"] != command:
                raise ConfigError(f"{args.config} is a {raw['command']!r} run config, not {command!r}")
            seed, out, raw = raw.get("seed", 0), raw.get("out"), raw["params"]
        else:
            raw = dict(raw)
            seed = raw.pop("seed", seed)
            out = raw.pop("out", out)
        unknown = sorted(set(raw) - set(keys))
        if unknown:
            raise ConfigError(f"unknown {command} config keys: {unknown}")
        params.update(raw)
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    if args.seed is not None:
        seed = args.seed
    if args.out is not None:
        out = args.out
    if out is None:
        raise ConfigError("--out is required")
    for key in REQUIRED.get(command, ()):
        if params.get(key) is None:
            raise ConfigError(f"--{key.replace('_', '-')} is required for {command}")
    return RunConfig(command, int(seed), str(out), params)


def hyperparams(cfg: RunConfig) -> HyperParams:
    p = cfg.params
    if p["preset"] not in ("desk", "paper"):
        raise ConfigError(f"unknown hyperparameter preset {p['preset']!r}")
    overrides = {k: p[k] for k in _HP_FIELDS if k != "seed" and p.get(k) is not None}
    overrides["seed"] = cfg.seed
    factory = HyperParams.desk if p["preset"] == "desk" else HyperParams.paper
    return factory(**overrides)


# -- output directory handling ------------------------------------------------
def _inside(path: Path, other: Path) -> bool:
    try:
        path.resolve().relative_to(other.resolve())
        return True
    except ValueError:
        return False


def prepare_out(out: Path, force: bool, inputs: tuple = ()) -> Path:
    """Create ``out``; a non-empty one is cleared only with ``force``.

    Refuses an output directory that contains, or sits inside, an input.
    """
    for src in inputs:
        if src is not None and (_inside(Path(src), out) or _inside(out, Path(src))):
            raise ConfigError(f"output directory {out} overlaps input {src}")
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ConfigError(f"{out} exists and is not empty (use --force)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands -----------------------------------------------------------------
def cmd_synth(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    overrides = {k: v for k, v in p.items() if k != "preset" and v is not None}
    synth_cfg = SynthConfig.preset(p["preset"], seed=cfg.seed, **overrides)
    out = Path(cfg.out)
    path = synth_generate(synth_cfg, out, force=force)
    cfg.save(path)
    n = synth_cfg.subjects * synth_cfg.videos_per_subject
    print(f"wrote {n} {synth_cfg.kind} videos to {path}")
    return EXIT_OK


def oversampling_table(notes: dict) -> str:
    before = notes["frames_before_oversampling"]
    after = notes["frames_after_oversampling"]
    tb, ta = sum(before.values()) or 1, sum(after.values()) or 1
    lines = [f"{'emotion':<10}  {'frames':>8}  {'share':>7}  {'oversampled':>11}  {'share':>7}"]
    for e in EMOTIONS:
        lines.append(f"{e:<10}  {before[e]:>8d}  {100 * before[e] / tb:>6.2f}%  {after[e]:>11d}  {100 * after[e] / ta:>6.2f}%")
    lines.append(f"{'total':<10}  {tb:>8d}  {'':>7}  {ta:>11d}")
    return "\n".join(lines)


def cmd_pretrain(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    out = prepare_out(Path(cfg.out), force, (p["data"],))
    cfg.save(out)
    dataset = load_dataset(p["data"])
    _, report, _ = pretrain_categorical(dataset, hyperparams(cfg), InitStrategy.parse(p["init"]), out, p["arch"])
    print(oversampling_table(report.notes))
    print()
    print(report.text())
    return EXIT_OK


def cmd_finetune(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    out = prepare_out(Path(cfg.out), force, (p["data"],))
    cfg.save(out)
    dataset = load_dataset(p["data"], p["gold_mode"])
    init = InitStrategy.parse(p["init"])
    ckpt, report, _ = finetune_dimensional(dataset, hyperparams(cfg), init, out, p["arch"], p["postprocess"])
    print(report.text())
    chain_path = ckpt / "chain.json"
    if chain_path.exists():
        chain = ChainConfig.load(chain_path)
        for name, c in chain.dimensions.items():
            print(f"{name}: validation CCC {c.raw_ccc:.4f} -> {c.final_ccc:.4f} after post-processing")
    return EXIT_OK


def metrics_table(metrics: dict[str, dict]) -> str:
    """Rows are partitions, columns per dimension ``post (raw)`` CCC."""
    lines = [f"{'partition':<12}  " + "  ".join(f"{d.capitalize():>17}" for d in DIMENSIONS)]
    for part, record in metrics.items():
        cells = [f"{record[d]['post_ccc']:.3f} ({record[d]['raw_ccc']:.3f})" for d in DIMENSIONS]
        lines.append(f"{part:<12}  " + "  ".join(f"{c:>17}" for c in cells))
    lines.append("values: post-processed (raw) CCC")
    return "\n".join(lines)


def cmd_evaluate(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    out = prepare_out(Path(cfg.out), force, (p["data"], p["checkpoint"]))
    cfg.save(out)
    dataset = load_dataset(p["data"], p["gold_mode"])
    chain = None
    if p["chain"] == "auto":
        default = Path(p["checkpoint"]) / "chain.json"
        chain = ChainConfig.load(default) if default.exists() else None
    elif p["chain"] not in (None, "none"):
        chain = ChainConfig.load(p["chain"])
    parts = p["partitions"]
    parts = [parts] if isinstance(parts, str) else list(parts)
    metrics = {part: evaluate(p["checkpoint"], dataset, part, chain, p["sequence_length"]) for part in parts}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    if all("balanced_accuracy" in m for m in metrics.values()):
        for part, m in metrics.items():
            print(f"{part}: balanced accuracy {m['balanced_accuracy']:.4f}")
    else:
        print(metrics_table(metrics))
    return EXIT_OK


def cmd_compare(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    out = prepare_out(Path(cfg.out), force, (p["data"],))
    cfg.save(out)
    dataset = load_dataset(p["data"], p["gold_mode"])
    strategies = p["strategies"]
    strategies = [strategies] if isinstance(strategies, str) else list(strategies)
    result = compare_initialisations(dataset, hyperparams(cfg), strategies, p["arch"], out, p["postprocess"])
    text = result.text()
    (out / "comparison.txt").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_postprocess(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    out = prepare_out(Path(cfg.out), force, (p["predictions"],))
    cfg.save(out)
    preds = Predictions.load(p["predictions"], p["name"])
    if p["chain"]:
        chain = ChainConfig.load(p["chain"])
    else:
        chain = chain_search(preds.pred, preds.target, p["frame_period"], preds.segments, p["per_recording"])
    chain.save(out / "chain.json")
    post = apply_chain(chain, preds.pred, preds.segments)
    record = {
        d: {
            "raw_ccc": ccc(preds.pred[:, k], preds.target[:, k]).rho_c,
            "post_ccc": ccc(post[:, k], preds.target[:, k]).rho_c,
        }
        for k, d in enumerate(DIMENSIONS[: preds.pred.shape[1]])
    }
    (out / "metrics.json").write_text(json.dumps({p["name"]: record}, indent=2, sort_keys=True))
    print(metrics_table({p["name"]: record}))
    return EXIT_OK


def cmd_gradcheck(cfg: RunConfig, force: bool) -> int:
    p = cfg.params
    out = prepare_out(Path(cfg.out), force)
    cfg.save(out)
    ops = p["ops"]
    ops = [ops] if isinstance(ops, str) else ops
    results = gradsuite.run_suite(int(p["seeds"]), float(p["tolerance"]), ops)
    report = {
        r.name: {"max_rel_error": r.max_error, "seeds": r.seeds, "passed": r.passed, "tolerance": r.tolerance}
        for r in results
    }
    (out / "gradcheck.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    print(gradsuite.report_text(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig, bool], int]] = {
    "synth": cmd_synth,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "postprocess": cmd_postprocess,
    "gradcheck": cmd_gradcheck,
}


def _thread_count(args: argparse.Namespace) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else None


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve(args.command, args)
        threads = _thread_count(args)
        if threads is not None:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                return COMMANDS[args.command](cfg, args.force)
        return COMMANDS[args.command](cfg, args.force)
    except (NonFiniteGradientError, NonFiniteError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (ConfigError, ContractError, DatasetExistsError, IncompatibleCheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
