"""Readers for the corpus produced by the rainsynth toolkit.

Everything here speaks the toolkit's *file* formats: ``manifest.json`` /
``records.jsonl``, 8-bit PNGs, and the raw float dump (16-byte header:
magic ``RSF1`` then height/width/channels as little-endian uint32,
followed by little-endian float32 data). Tensors come out in CHW layout.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

RAW_MAGIC = b"RSF1"


def _to_tensor(arr: np.ndarray) -> torch.Tensor:
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1))).float()


def load_png(path: Path) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im).astype(np.float64) / 255.0
    return _to_tensor(arr)


def load_labels_png(path: Path) -> torch.Tensor:
    with Image.open(path) as im:
        arr = np.asarray(im)
    return torch.from_numpy(arr.astype(np.int64))


def load_raw_float(path: Path) -> torch.Tensor:
    blob = Path(path).read_bytes()
    if len(blob) < 16 or blob[:4] != RAW_MAGIC:
        raise ValueError(f"bad raw float header in {path}")
    h, w, c = struct.unpack("<III", blob[4:16])
    if len(blob) != 16 + h * w * c * 4:
        raise ValueError(f"raw float dump {path} has wrong length")
    data = np.frombuffer(blob, dtype="<f4", offset=16).reshape(h, w, c)
    return _to_tensor(data.astype(np.float64))


@dataclass
class CorpusSample:
    id: str
    split: str
    lrhr: torch.Tensor                  # degraded input, (3, h, w)
    lr: torch.Tensor                    # clean low-res target, (3, h, w)
    hr: torch.Tensor                    # clean high-res target, (3, H, W)
    parsed_hr: torch.Tensor | None      # labels, (H, W) int64
    lrhr_preclamp: torch.Tensor | None  # exact composite, (3, h, w)


@dataclass
class Corpus:
    root: Path
    scale: int
    master_seed: int
    samples: list[CorpusSample]

    def split(self, name: str) -> list[CorpusSample]:
        return [s for s in self.samples if s.split == name]

    @property
    def has_parsing(self) -> bool:
        return all(s.parsed_hr is not None for s in self.samples)

    @property
    def has_preclamp(self) -> bool:
        return all(s.lrhr_preclamp is not None for s in self.samples)


def load_corpus(manifest_path: Path, limit: int | None = None,
                use_preclamp_input: bool = True) -> Corpus:
    """Read a corpus from its manifest.

    With ``use_preclamp_input`` (and dumps present) the degraded input
    tensor is the exact float composite; otherwise it is the quantized
    PNG. Targets (`lr`, `hr`) always come from the PNGs.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        manifest = json.load(f)
    root = manifest_path.parent
    records = manifest["records"]
    if limit is not None:
        records = records[:limit]
    samples = []
    for rec in records:
        paths = rec["paths"]
        preclamp = None
        if "preclamp_lrhr" in paths:
            preclamp = load_raw_float(root / paths["preclamp_lrhr"])
        lrhr = load_png(root / paths["lrhr"])
        if use_preclamp_input and preclamp is not None:
            lrhr = preclamp.clone()
        parsed = None
        if "parsed_hr" in paths:
            parsed = load_labels_png(root / paths["parsed_hr"])
        samples.append(CorpusSample(
            id=rec["id"],
            split=rec["split"],
            lrhr=lrhr,
            lr=load_png(root / paths["lr"]),
            hr=load_png(root / paths["hr"]),
            parsed_hr=parsed,
            lrhr_preclamp=preclamp,
        ))
    return Corpus(
        root=root,
        scale=int(manifest["config"]["scale_s"]),
        master_seed=int(manifest["config"]["master_seed"]),
        samples=samples,
    )


def downsample_labels(labels: torch.Tensor, s: int) -> torch.Tensor:
    """Nearest-neighbor label subsampling (top-left of each block)."""
    if labels.shape[0] % s or labels.shape[1] % s:
        raise ValueError(f"label map {tuple(labels.shape)} not divisible by {s}")
    return labels[::s, ::s]


def one_hot_labels(labels: torch.Tensor, num_classes: int) -> torch.Tensor:
    """(H, W) int labels -> (num_classes, H, W) float one-hot."""
    return torch.nn.functional.one_hot(labels, num_classes).permute(2, 0, 1).float()


def stack_batch(samples: list[CorpusSample], attr: str) -> torch.Tensor:
    return torch.stack([getattr(s, attr) for s in samples])
