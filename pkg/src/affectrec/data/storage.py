"""Dataset directories.

``manifest.json`` lists the videos; each video has ``<id>.frames.tnsr``
(T x C x H x W float32) and either ``<id>.votes.tnsr`` (T x A u8 emotion
indices) or ``<id>.traces.tnsr`` (R x T x 2 float32).
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from ..engine import io as tio
from ..engine.tensor import ContractError
from ..objectives import EMOTIONS
from .annotation import fuse_vote_indices, gold_standard
from .schema import VideoRecord

FORMAT = "affectrec-dataset/1"


class DatasetExistsError(FileExistsError):
    pass


def write_dataset(
    out_dir,
    videos: Sequence[VideoRecord],
    kind: str,
    generator: dict | None = None,
    force: bool = False,
) -> Path:
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise DatasetExistsError(f"{out} exists and is not empty (use force)")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for v in videos:
        entry = {
            "id": v.video_id,
            "subject": v.subject_id,
            "frames": v.n_frames,
            "period": v.frame_period,
            "label_kind": v.label_kind,
            "frames_file": f"{v.video_id}.frames.tnsr",
        }
        if v.partition is not None:
            entry["partition"] = v.partition
        if v.attributes:
            entry["attributes"] = v.attributes
        tio.save(out / entry["frames_file"], v.frames.astype(np.float32))
        if v.votes is not None:
            entry["labels_file"] = f"{v.video_id}.votes.tnsr"
            tio.save(out / entry["labels_file"], v.votes.astype(np.uint8))
        else:
            entry["labels_file"] = f"{v.video_id}.traces.tnsr"
            tio.save(out / entry["labels_file"], v.traces.astype(np.float32))
        entries.append(entry)
    manifest = {
        "format": FORMAT,
        "kind": kind,
        "emotions": list(EMOTIONS),
        "generator": generator or {},
        "videos": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


@dataclass
class Dataset:
    kind: str
    videos: list[VideoRecord]
    manifest: dict = field(default_factory=dict)
    gold_mode: str = "mean"

    def by_id(self, video_id: str) -> VideoRecord:
        return self._index[video_id]

    @cached_property
    def _index(self) -> dict[str, VideoRecord]:
        return {v.video_id: v for v in self.videos}

    @cached_property
    def labels(self) -> dict[str, np.ndarray]:
        """Fused multi-hot labels [T, 8] per video (categorical data)."""
        if self.kind != "categorical":
            raise ContractError("dataset carries no annotator votes")
        return {v.video_id: fuse_vote_indices(v.votes) for v in self.videos}

    @cached_property
    def gold(self) -> dict[str, np.ndarray]:
        """Gold-standard (arousal, valence) [T, 2] per video (dimensional data)."""
        if self.kind != "dimensional":
            raise ContractError("dataset carries no dimensional traces")
        return {v.video_id: gold_standard(v.rater_traces(), self.gold_mode).values for v in self.videos}

    def partition(self, name: str) -> list[VideoRecord]:
        return [v for v in self.videos if v.partition == name]

    def subset(self, videos: Sequence[VideoRecord]) -> Dataset:
        return Dataset(self.kind, list(videos), self.manifest, self.gold_mode)


def load_dataset(path, gold_mode: str = "mean") -> Dataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != FORMAT:
        raise ContractError(f"{path} is not a dataset directory")
    videos = []
    for e in manifest["videos"]:
        frames = tio.load(path / e["frames_file"])
        labels = tio.load(path / e["labels_file"])
        kw = {"votes": labels} if e["label_kind"] == "votes" else {"traces": labels}
        videos.append(
            VideoRecord(
                e["id"],
                e["subject"],
                frames,
                frame_period=e["period"],
                partition=e.get("partition"),
                attributes=e.get("attributes", {}),
                **kw,
            )
        )
    return Dataset(manifest["kind"], videos, manifest, gold_mode)
