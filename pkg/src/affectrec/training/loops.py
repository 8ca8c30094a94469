"""Categorical pretraining, dimensional fine-tuning and evaluation."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..data.augment import augment_clip
from ..data.sampling import frame_counts, oversample, subject_split, window_dataset
from ..data.schema import RARE_EMOTIONS, VideoRecord, Window, paper_oversample_multipliers
from ..data.storage import Dataset
from ..engine import io as tio
from ..engine.tensor import ContractError, Tensor, no_grad
from ..models import (
    HeadKind,
    InitStrategy,
    LstmConfig,
    Model,
    ResNetConfig,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from ..objectives import EMOTIONS, ccc, ccc_loss, class_weights, weighted_sigmoid_ce
from ..postprocess import DIMENSIONS, ChainConfig, apply_chain, chain_search
from .adam import Adam
from .config import EpochRecord, HyperParams, TrainReport

logger = logging.getLogger(__name__)

ARCHITECTURES = {
    "desk": (ResNetConfig.desk, LstmConfig.desk),
    "paper": (ResNetConfig.paper, LstmConfig.paper),
}


def architecture(name: str) -> tuple[ResNetConfig, LstmConfig]:
    try:
        r, l = ARCHITECTURES[name]
    except KeyError:
        raise ContractError(f"unknown architecture preset {name!r}") from None
    return r(), l()


# -- batching ----------------------------------------------------------------
def clip_batch(
    windows: Sequence[Window],
    videos: dict[str, VideoRecord],
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    clips = []
    for w in windows:
        clip = videos[w.video_id].frames[w.start : w.stop]
        if rng is not None:
            clip = augment_clip(clip, rng)
        clips.append(clip)
    return np.stack(clips).astype(np.float32, copy=False)


def target_batch(windows: Sequence[Window], targets: dict[str, np.ndarray], dtype=np.float32) -> np.ndarray:
    return np.stack([targets[w.video_id][w.start : w.stop] for w in windows]).astype(dtype)


@dataclass
class Predictions:
    """Per-frame outputs of a partition, concatenated video by video."""

    pred: np.ndarray
    target: np.ndarray
    video_ids: list[str]
    segments: list[int]

    def save(self, directory, name: str) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        tio.save(d / f"{name}.pred.tnsr", self.pred)
        tio.save(d / f"{name}.target.tnsr", self.target)
        (d / f"{name}.segments.json").write_text(
            json.dumps({"video_ids": self.video_ids, "segments": self.segments}, indent=2)
        )

    @classmethod
    def load(cls, directory, name: str) -> Predictions:
        d = Path(directory)
        meta = json.loads((d / f"{name}.segments.json").read_text())
        return cls(
            tio.load(d / f"{name}.pred.tnsr"),
            tio.load(d / f"{name}.target.tnsr"),
            meta["video_ids"],
            meta["segments"],
        )


def predict(
    model: Model,
    videos: Sequence[VideoRecord],
    targets: dict[str, np.ndarray],
    sequence_length: int,
    batch: int = 8,
) -> Predictions:
    """Eval-mode outputs over non-overlapping windows; each video contributes its tiled prefix."""
    index = {v.video_id: v for v in videos}
    windows = window_dataset(videos, sequence_length)
    outs = []
    with no_grad():
        for i in range(0, len(windows), batch):
            chunk = windows[i : i + batch]
            out = model.forward(Tensor(clip_batch(chunk, index)), train=False)
            outs.append(out.data.astype(np.float64))
    if not outs:
        raise ContractError(f"no video is at least {sequence_length} frames long")
    flat = np.concatenate(outs).reshape(-1, outs[0].shape[-1])
    video_ids, segments = [], []
    gold = []
    for v in videos:
        n = (v.n_frames // sequence_length) * sequence_length
        if n == 0:
            continue
        video_ids.append(v.video_id)
        segments.append(n)
        gold.append(np.asarray(targets[v.video_id][:n], dtype=np.float64))
    return Predictions(flat, np.concatenate(gold), video_ids, segments)


def mean_ccc(p: Predictions) -> float:
    return float(np.mean([ccc(p.pred[:, k], p.target[:, k]).rho_c for k in range(p.pred.shape[1])]))


def balanced_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean over classes of (TPR + TNR) / 2 at sigmoid threshold 0.5.

    Classes without both positive and negative frames are skipped.
    """
    pred = logits > 0
    lab = labels > 0
    scores = []
    for k in range(lab.shape[1]):
        pos, neg = lab[:, k], ~lab[:, k]
        if pos.any() and neg.any():
            tpr = (pred[pos, k]).mean()
            tnr = (~pred[neg, k]).mean()
            scores.append(0.5 * (tpr + tnr))
    return float(np.mean(scores)) if scores else 0.0


# -- generic epoch loop ------------------------------------------------------
def run_epochs(
    train_epoch: Callable[[int, int | None], tuple[float, int]],
    validate: Callable[[], float],
    hp: HyperParams,
    report: TrainReport,
    on_improve: Callable[[int], None] = lambda epoch: None,
) -> TrainReport:
    """Drive epochs with best-model tracking and patience-based early stopping.

    ``train_epoch(epoch, step_budget)`` returns (mean loss, steps taken). An
    epoch improves on the best when its metric exceeds it by more than
    ``hp.min_delta``; training stops ``hp.patience`` epochs after the last
    improvement, after ``hp.max_epochs`` epochs, or once ``hp.max_steps``
    optimizer steps are spent.
    """
    for epoch in range(1, hp.max_epochs + 1):
        budget = None if hp.max_steps is None else hp.max_steps - report.total_steps
        loss, steps = train_epoch(epoch, budget)
        report.total_steps += steps
        metric = validate()
        report.history.append(EpochRecord(epoch, float(loss), float(metric), steps))
        if report.best_epoch == 0 or metric > report.best_metric + hp.min_delta:
            report.best_epoch, report.best_metric = epoch, float(metric)
            on_improve(epoch)
        if epoch - report.best_epoch >= hp.patience:
            report.stop_reason = "patience"
            return report
        if hp.max_steps is not None and report.total_steps >= hp.max_steps:
            report.stop_reason = "max_steps"
            return report
    report.stop_reason = "max_epochs"
    return report


def _snapshot(model: Model) -> tuple[dict, dict]:
    return {n: t.data.copy() for n, t in model.params.items()}, {n: b.copy() for n, b in model.buffers.items()}


def _restore(model: Model, snap: tuple[dict, dict]) -> None:
    params, buffers = snap
    for n, a in params.items():
        model.params[n].data[...] = a
    for n, b in buffers.items():
        model.buffers[n][...] = b


def _apply_freeze(model: Model, prefixes: Sequence[str]) -> None:
    for name, t in model.params.items():
        t.requires_grad = not any(name.startswith(p) for p in prefixes)


def train_model(
    model: Model,
    windows: Sequence[Window],
    videos: dict[str, VideoRecord],
    targets: dict[str, np.ndarray],
    loss_fn: Callable[[Tensor, np.ndarray], Tensor],
    validate: Callable[[Model], float],
    hp: HyperParams,
    report: TrainReport,
    augment: bool,
) -> TrainReport:
    """Mini-batch Adam over ``windows``; leaves the best-epoch weights in ``model``."""
    _apply_freeze(model, hp.freeze)
    opt = Adam(model.params, hp.learning_rate, (hp.beta1, hp.beta2), hp.adam_eps)
    best: list = [None]

    def train_epoch(epoch: int, budget: int | None) -> tuple[float, int]:
        rng = np.random.default_rng([hp.seed, epoch])
        order = rng.permutation(len(windows))
        losses, steps = [], 0
        for i in range(0, len(order), hp.batch_size):
            if budget is not None and steps >= budget:
                break
            chunk = [windows[j] for j in order[i : i + hp.batch_size]]
            x = Tensor(clip_batch(chunk, videos, rng if augment else None))
            y = target_batch(chunk, targets)
            opt.zero_grad()
            loss = loss_fn(model.forward(x, train=True), y)
            loss.backward()
            opt.step()
            losses.append(loss.item())
            steps += 1
        return (float(np.mean(losses)) if losses else float("nan")), steps

    def on_improve(epoch: int) -> None:
        best[0] = _snapshot(model)

    start = time.perf_counter()
    run_epochs(train_epoch, lambda: validate(model), hp, report, on_improve)
    report.wall_time = time.perf_counter() - start
    if best[0] is not None:
        _restore(model, best[0])
    _apply_freeze(model, ())
    return report


def _partitions(dataset: Dataset, seed: int) -> tuple[list[VideoRecord], list[VideoRecord], list[VideoRecord]]:
    """(train, validation, test) videos: stored partitions if present, else an 80/20 subject split."""
    if any(v.partition for v in dataset.videos):
        train = dataset.partition("train")
        val = dataset.partition("devel") or dataset.partition("validation")
        test = dataset.partition("test")
        return train, val, test
    train, val = subject_split(dataset.videos, 0.8, seed)
    return train, val, []


def _build(arch, head: HeadKind, init: InitStrategy, seed: int) -> Model:
    resnet, lstm = architecture(arch) if isinstance(arch, str) else arch
    return build_model(resnet, lstm, head, init, seed=seed)


# -- pretraining -------------------------------------------------------------
def pretrain_categorical(
    dataset: Dataset,
    hp: HyperParams,
    init: InitStrategy | None = None,
    out_dir=None,
    arch="desk",
) -> tuple[Path | None, TrainReport, Model]:
    """Train extractor + LSTM + 8-logit head with frame-weighted sigmoid cross-entropy.

    Training windows are oversampled toward the rare emotions; the class
    weights come from the training frame counts before oversampling.
    """
    if dataset.kind != "categorical":
        raise ContractError("categorical pretraining needs a dataset with annotator votes")
    init = init or InitStrategy()
    train_v, val_v, _ = _partitions(dataset, hp.seed)
    labels = dataset.labels
    L = hp.sequence_length
    stride = hp.window_stride or L
    windows = window_dataset(train_v, L, stride)
    candidates = window_dataset(train_v, L, hp.resample_stride) if hp.resample_stride else None
    multiplier = hp.oversample_multiplier or paper_oversample_multipliers()
    over = oversample(windows, labels, multiplier=multiplier, candidates=candidates, seed=hp.seed)
    for w in over.warnings:
        logger.warning("oversampling: %s", w)

    # classes absent from the training split are floored to one frame
    weights = class_weights(np.maximum(over.counts_before, 1))
    model = _build(arch, HeadKind.CATEGORICAL, init, hp.seed)
    index = {v.video_id: v for v in dataset.videos}

    def validate(m: Model) -> float:
        p = predict(m, val_v, labels, L, hp.eval_batch)
        return balanced_accuracy(p.pred, p.target)

    report = TrainReport(
        "pretrain_categorical",
        "balanced_accuracy",
        init.label,
        notes={
            "class_weights": weights.as_dict(),
            "frames_before_oversampling": dict(zip(EMOTIONS, map(int, over.counts_before))),
            "frames_after_oversampling": dict(zip(EMOTIONS, map(int, over.counts_after))),
            "validation_frames": dict(zip(EMOTIONS, map(int, frame_counts(window_dataset(val_v, L), labels)))),
            "windows_original": len(windows),
            "windows_resampled": over.added,
            "train_subjects": sorted({v.subject_id for v in train_v}),
            "validation_subjects": sorted({v.subject_id for v in val_v}),
        },
    )
    train_model(
        model,
        over.windows,
        index,
        labels,
        lambda out, y: weighted_sigmoid_ce(out, y, weights),
        validate,
        hp,
        report,
        augment=hp.augment,
    )
    ckpt = None
    if out_dir is not None:
        out = Path(out_dir)
        ckpt = save_checkpoint(model, out / "checkpoint", _metadata(report, hp))
        report.save(out / "report.json")
        _save_timing(out, report)
    return ckpt, report, model


# -- fine-tuning -------------------------------------------------------------
def finetune_dimensional(
    dataset: Dataset,
    hp: HyperParams,
    init: InitStrategy | None = None,
    out_dir=None,
    arch="desk",
    postprocess: bool = True,
    train_videos: Sequence[VideoRecord] | None = None,
    val_videos: Sequence[VideoRecord] | None = None,
) -> tuple[Path | None, TrainReport, Model]:
    """Train on (arousal, valence) gold standards with the CCC loss; no augmentation.

    The best epoch by mean validation CCC is kept. With ``postprocess`` a
    chain is searched on the validation predictions and stored next to the
    checkpoint.
    """
    if dataset.kind != "dimensional":
        raise ContractError("dimensional fine-tuning needs a dataset with rater traces")
    init = init or InitStrategy()
    train_v, val_v, _ = _partitions(dataset, hp.seed)
    if train_videos is not None:
        train_v = list(train_videos)
    if val_videos is not None:
        val_v = list(val_videos)
    gold = dataset.gold
    L = hp.sequence_length
    windows = window_dataset(train_v, L, hp.window_stride or L)
    model = _build(arch, HeadKind.DIMENSIONAL, init, hp.seed)
    index = {v.video_id: v for v in dataset.videos}

    def validate(m: Model) -> float:
        return mean_ccc(predict(m, val_v, gold, L, hp.eval_batch))

    report = TrainReport(
        "finetune_dimensional",
        "mean_ccc",
        init.label,
        notes={
            "train_videos": [v.video_id for v in train_v],
            "validation_videos": [v.video_id for v in val_v],
        },
    )
    train_model(model, windows, index, gold, lambda out, y: ccc_loss(out, y), validate, hp, report, augment=False)

    ckpt = None
    if out_dir is not None:
        out = Path(out_dir)
        ckpt = save_checkpoint(model, out / "checkpoint", _metadata(report, hp))
        val_pred = predict(model, val_v, gold, L, hp.eval_batch)
        val_pred.save(out / "predictions", "validation")
        if postprocess:
            chain = chain_search(val_pred.pred, val_pred.target, val_v[0].frame_period, val_pred.segments)
            chain.save(ckpt / "chain.json")
        report.save(out / "report.json")
        _save_timing(out, report)
    return ckpt, report, model


def _metadata(report: TrainReport, hp: HyperParams) -> dict:
    return {
        "phase": report.phase,
        "init": report.init,
        "best_epoch": report.best_epoch,
        "best_metric": report.best_metric,
        "metric": report.metric_name,
        "hyperparameters": hp.to_dict(),
    }


def _save_timing(out: Path, report: TrainReport) -> None:
    (out / "timing.json").write_text(json.dumps({"wall_time": report.wall_time}))


# -- evaluation --------------------------------------------------------------
def evaluate(
    checkpoint,
    dataset: Dataset,
    partition: str | Sequence[VideoRecord] = "devel",
    chain: ChainConfig | None = None,
    sequence_length: int | None = None,
    batch: int = 8,
) -> dict:
    """Per-dimension CCC before and after post-processing (eval mode).

    For a categorical checkpoint the record holds the balanced accuracy
    instead.
    """
    model = checkpoint if isinstance(checkpoint, Model) else load_checkpoint(checkpoint)
    if sequence_length is None:
        meta = {} if isinstance(checkpoint, Model) else _read_meta(checkpoint)
        sequence_length = meta.get("hyperparameters", {}).get("sequence_length", 16)
    videos = _resolve_partition(dataset, partition)
    if model.head is HeadKind.CATEGORICAL:
        p = predict(model, videos, dataset.labels, sequence_length, batch)
        return {"balanced_accuracy": balanced_accuracy(p.pred, p.target)}
    if dataset.kind != "dimensional":
        raise ContractError("dimensional checkpoint needs a dimensional dataset")
    p = predict(model, videos, dataset.gold, sequence_length, batch)
    post = p.pred if chain is None else apply_chain(chain, p.pred, p.segments)
    record = {}
    for k, name in enumerate(DIMENSIONS):
        record[name] = {
            "raw_ccc": ccc(p.pred[:, k], p.target[:, k]).rho_c,
            "post_ccc": ccc(post[:, k], p.target[:, k]).rho_c,
        }
    return record


def _read_meta(checkpoint) -> dict:
    from ..models import read_manifest

    return read_manifest(checkpoint).get("metadata", {})


def _resolve_partition(dataset: Dataset, partition) -> list[VideoRecord]:
    if not isinstance(partition, str):
        return list(partition)
    if partition == "all":
        return list(dataset.videos)
    videos = dataset.partition(partition)
    if not videos and partition == "validation":
        videos = dataset.partition("devel")
    if not videos:
        raise ContractError(f"dataset has no {partition!r} partition")
    return videos


__all__ = [
    "ARCHITECTURES",
    "Predictions",
    "RARE_EMOTIONS",
    "architecture",
    "balanced_accuracy",
    "evaluate",
    "finetune_dimensional",
    "mean_ccc",
    "predict",
    "pretrain_categorical",
    "run_epochs",
    "train_model",
]
