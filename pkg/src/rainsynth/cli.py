"""Operator-facing command line.

Subcommands::

    rainsynth synth CONFIG HR_DIR OUT_DIR [--count N] [--seed S]
    rainsynth invert MANIFEST ID OUT_PNG
    rainsynth score REF_DIR TEST_DIR [--metric {psnr,ssim,both}]
    rainsynth inspect MANIFEST ID [--montage OUT_PNG]

Standard output carries machine-readable JSON lines only; human
diagnostics go to standard error. Exit codes: 0 success, 1 usage / config
/ data errors, 2 I/O errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import (
    IMG_EXTENSIONS,
    Manifest,
    decode_png,
    encode_png,
    generate_dataset,
    load_preclamp,
    load_sample,
)
from .errors import (
    InvalidArgumentError,
    RainsynthError,
    SampleCorruptionError,
    SampleIOError,
)
from .facecrop import CropBoxes, default_boxes
from .imgcore import clamp01
from .losses import LossWeights
from .metrics import SsimParams, psnr, ssim
from .rainmodel import DegradationConfig, degrade_lr, invert_heavyrain

__all__ = ["RunConfig", "IOConfig", "main"]


@dataclass(frozen=True)
class IOConfig:
    split_ratios: tuple = (0.8, 0.1, 0.1)
    emit_parsed: bool = True
    emit_preclamp: bool = True
    hr_dir: str = ""
    out_dir: str = ""

    def to_dict(self) -> dict:
        return {
            "split_ratios": list(self.split_ratios),
            "emit_parsed": self.emit_parsed,
            "emit_preclamp": self.emit_preclamp,
            "hr_dir": self.hr_dir,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IOConfig":
        return cls(
            split_ratios=tuple(d["split_ratios"]),
            emit_parsed=bool(d["emit_parsed"]),
            emit_preclamp=bool(d["emit_preclamp"]),
            hr_dir=d.get("hr_dir", ""),
            out_dir=d.get("out_dir", ""),
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, serializable losslessly to one JSON file."""

    degradation: DegradationConfig
    loss_weights: LossWeights
    ssim: SsimParams
    crop_boxes: CropBoxes
    io: IOConfig

    @classmethod
    def default(cls) -> "RunConfig":
        return cls(
            degradation=DegradationConfig(),
            loss_weights=LossWeights(),
            ssim=SsimParams(),
            crop_boxes=default_boxes(),
            io=IOConfig(),
        )

    def to_dict(self) -> dict:
        return {
            "degradation": self.degradation.to_dict(),
            "loss_weights": self.loss_weights.to_dict(),
            "ssim": self.ssim.to_dict(),
            "crop_boxes": self.crop_boxes.to_dict(),
            "io": self.io.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            degradation=DegradationConfig.from_dict(d["degradation"]),
            loss_weights=LossWeights.from_dict(d["loss_weights"]),
            ssim=SsimParams.from_dict(d["ssim"]),
            crop_boxes=CropBoxes.from_dict(d["crop_boxes"]),
            io=IOConfig.from_dict(d["io"]),
        )

    def save(self, path: Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        try:
            with open(path) as f:
                d = json.load(f)
        except FileNotFoundError:
            raise SampleIOError(f"missing config file: {path}")
        except json.JSONDecodeError as e:
            raise InvalidArgumentError(f"config file {path} is not valid JSON: {e}")
        try:
            return cls.from_dict(d)
        except (KeyError, TypeError) as e:
            raise InvalidArgumentError(f"config file {path} is malformed: {e}")


def _emit(obj: dict) -> None:
    def default(v):
        if isinstance(v, float) and math.isinf(v):
            return "inf"
        raise TypeError(f"not JSON serializable: {v!r}")

    sys.stdout.write(json.dumps({k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
                                 for k, v in obj.items()}, default=default) + "\n")


def _info(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args) -> int:
    cfg = RunConfig.load(Path(args.config))
    degradation = cfg.degradation
    if args.seed is not None:
        degradation = replace(degradation, master_seed=int(args.seed))
    started = time.perf_counter()
    manifest = generate_dataset(
        Path(args.hr_dir),
        degradation,
        cfg.io.split_ratios,
        Path(args.out_dir),
        count=args.count,
        emit_parsed=cfg.io.emit_parsed,
        emit_preclamp=cfg.io.emit_preclamp,
    )
    elapsed = time.perf_counter() - started
    counts = {s: sum(1 for r in manifest.records if r.split == s)
              for s in ("train", "val", "test")}
    for err in manifest.errors:
        _info(f"skipped {err['file']}: {err['error']}")
    _info(f"generated {len(manifest.records)} samples in {elapsed:.2f}s "
          f"(train/val/test = {counts['train']}/{counts['val']}/{counts['test']})")
    _emit({
        "records": len(manifest.records),
        "counts": counts,
        "errors": len(manifest.errors),
        "manifest": str(Path(args.out_dir) / "manifest.json"),
        "elapsed_s": round(elapsed, 3),
    })
    return 0


def cmd_invert(args) -> int:
    manifest = Manifest.load(Path(args.manifest))
    loaded = load_sample(manifest, args.id)
    preclamp = load_preclamp(manifest, args.id)
    recovered = invert_heavyrain(preclamp, loaded.phys)
    reference = degrade_lr(loaded.hr, manifest.config)
    value = psnr(recovered, reference)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(encode_png(clamp01(recovered)))
    _emit({"id": args.id, "out": str(out_path), "psnr_db": value})
    return 0


def _matched_files(ref_dir: Path, test_dir: Path) -> list[str]:
    for d in (ref_dir, test_dir):
        if not d.is_dir():
            raise SampleIOError(f"directory does not exist: {d}")

    def names(d: Path) -> set[str]:
        return {p.name for p in d.iterdir()
                if p.is_file() and p.suffix.lower() in IMG_EXTENSIONS}

    ref_names, test_names = names(ref_dir), names(test_dir)
    if ref_names != test_names:
        only_ref = sorted(ref_names - test_names)
        only_test = sorted(test_names - ref_names)
        raise InvalidArgumentError(
            f"file sets differ: only in reference {only_ref}, only in test {only_test}")
    if not ref_names:
        raise InvalidArgumentError("no images to score")
    return sorted(ref_names)


def cmd_score(args) -> int:
    ref_dir, test_dir = Path(args.ref_dir), Path(args.test_dir)
    names = _matched_files(ref_dir, test_dir)
    want_psnr = args.metric in ("psnr", "both")
    want_ssim = args.metric in ("ssim", "both")
    psnr_vals, ssim_vals = [], []
    for name in names:
        a = decode_png(ref_dir / name)
        b = decode_png(test_dir / name)
        row: dict = {"file": name}
        if want_psnr:
            v = psnr(a, b)
            psnr_vals.append(v)
            row["psnr"] = v
        if want_ssim:
            v = ssim(a, b)
            ssim_vals.append(v)
            row["ssim"] = v
        _emit(row)
    aggregate: dict = {"aggregate": True, "count": len(names)}
    if want_psnr:
        aggregate["psnr_mean"] = math.inf if any(math.isinf(v) for v in psnr_vals) \
            else float(np.mean(psnr_vals))
    if want_ssim:
        aggregate["ssim_mean"] = float(np.mean(ssim_vals))
    _emit(aggregate)
    return 0


def _nearest_upscale(img: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(img, factor, axis=0), factor, axis=1)


def _to_rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img


def _montage(manifest: Manifest, sample_id: str) -> np.ndarray:
    """Seven panels at full resolution: hr, lr, rain-streaked, lrhr, S, A, T."""
    loaded = load_sample(manifest, sample_id)
    hr_h = loaded.hr.shape[0]
    factor = max(1, hr_h // loaded.lr.shape[0])
    streaked = clamp01(loaded.lr + loaded.phys.rain_layer_S)
    panels = [loaded.hr] + [
        _to_rgb(_nearest_upscale(p, factor)) for p in (
            loaded.lr,
            streaked,
            loaded.lrhr,
            clamp01(loaded.phys.rain_layer_S),
            loaded.phys.atmospheric_A,
            loaded.phys.transmission_T,
        )
    ]
    gap = np.ones((hr_h, 2, 3))
    pieces = []
    for i, panel in enumerate(panels):
        if i:
            pieces.append(gap)
        pieces.append(panel)
    return np.concatenate(pieces, axis=1)


def cmd_inspect(args) -> int:
    manifest = Manifest.load(Path(args.manifest))
    record = manifest.record_by_id(args.id)
    info = record.to_dict()
    info["montage"] = None
    if args.montage:
        out_path = Path(args.montage)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_bytes(encode_png(_montage(manifest, args.id)))
        info["montage"] = str(out_path)
    _emit(info)
    return 0


# ---------------------------------------------------------------------------
# Parser


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with code 1 on usage errors (2 is I/O)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rainsynth",
                     description="Synthesize, invert, inspect, and score "
                                 "rain-degraded low-resolution imagery.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a degraded corpus from clean images")
    p.add_argument("config", help="RunConfig JSON file")
    p.add_argument("hr_dir", help="directory of clean input images")
    p.add_argument("out_dir", help="output corpus directory")
    p.add_argument("--count", type=int, default=None, help="use only the first N inputs")
    p.add_argument("--seed", type=int, default=None, help="override the config master seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("invert", help="analytically invert one sample's degradation")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("id", help="sample id")
    p.add_argument("out", help="output PNG for the recovered clean image")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("score", help="PSNR/SSIM between matching files of two directories")
    p.add_argument("ref_dir", help="reference images")
    p.add_argument("test_dir", help="images under test")
    p.add_argument("--metric", choices=("psnr", "ssim", "both"), default="both")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("inspect", help="print one sample's record; optional montage")
    p.add_argument("manifest", help="path to manifest.json")
    p.add_argument("id", help="sample id")
    p.add_argument("--montage", default=None, help="write a seven-panel strip PNG here")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except (SampleIOError, SampleCorruptionError) as e:
        _info(f"error: {e}")
        return 2
    except (InvalidArgumentError, RainsynthError, ValueError) as e:
        _info(f"error: {e}")
        return 1
    except OSError as e:
        _info(f"error: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
