"""Reproducible corpus generation, persistence, and verification.

Every sample is a pure function of ``(config.master_seed, index)`` plus
the source image bytes, so a corpus can be regenerated bit-identically
from its manifest alone. Images persist as 8-bit PNG; the exact float
parameters live in the manifest, and an optional raw float32 dump of the
pre-clamp composite preserves the invertible raster exactly.

Directory layout under the output root::

    hr/ lr/ lrhr/ rain/ parsed/ preclamp/   one file per sample
    manifest.json                           config + records + timestamp
    records.jsonl                           one record per line, no timestamp
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .errors import InvalidArgumentError, SampleCorruptionError, SampleIOError
from .facecrop import ParsedMap, synth_face_mask
from .rainmodel import (
    DegradationConfig,
    DegradedSample,
    PhysicalParams,
    RainParams,
    degrade_full,
    degrade_lr,
    make_atmospheric,
    make_transmission,
    synth_rain_layer,
    _layer_seed,
)

__all__ = [
    "IMG_EXTENSIONS",
    "RAW_MAGIC",
    "SampleRecord",
    "Manifest",
    "LoadedSample",
    "VerifyEntry",
    "VerifyReport",
    "assign_splits",
    "generate_dataset",
    "load_sample",
    "load_preclamp",
    "verify_manifest",
    "resolve_workers",
    "encode_png",
    "decode_png",
    "write_raw_float",
    "read_raw_float",
]

IMG_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}
RAW_MAGIC = b"RSF1"
SPLITS = ("train", "val", "test")

_DIRS = {
    "hr": "hr",
    "lr": "lr",
    "lrhr": "lrhr",
    "rain_layer": "rain",
    "parsed_hr": "parsed",
    "preclamp_lrhr": "preclamp",
}


# ---------------------------------------------------------------------------
# Encoding helpers


def encode_png(img: np.ndarray) -> bytes:
    """8-bit PNG bytes for a [0, 1] image; values are clamped then rounded."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    data = np.round(arr * 255.0).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(data, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(path: Path) -> np.ndarray:
    """Decode a PNG into a float64 (H, W, C) image in [0, 1]."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except FileNotFoundError:
        raise SampleIOError(f"missing sample file: {path}")
    except OSError as e:
        raise SampleIOError(f"unreadable sample file {path}: {e}")
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return arr.astype(np.float64) / 255.0


def encode_parsing_png(parsed: ParsedMap) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(parsed.labels, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def decode_parsing_png(path: Path) -> ParsedMap:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im)
    except FileNotFoundError:
        raise SampleIOError(f"missing parsing map: {path}")
    return ParsedMap(arr.astype(np.uint8))


def encode_raw_float(img: np.ndarray) -> bytes:
    """Raw dump: 16-byte header (magic, h, w, c as little-endian u32) + f32 data."""
    arr = np.asarray(img, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    h, w, c = arr.shape
    header = RAW_MAGIC + struct.pack("<III", h, w, c)
    return header + arr.tobytes(order="C")


def write_raw_float(path: Path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode_raw_float(img))


def read_raw_float(path: Path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise SampleIOError(f"missing raw float dump: {path}")
    if len(blob) < 16 or blob[:4] != RAW_MAGIC:
        raise SampleCorruptionError(f"bad raw float header in {path}")
    h, w, c = struct.unpack("<III", blob[4:16])
    expected = 16 + h * w * c * 4
    if len(blob) != expected:
        raise SampleCorruptionError(f"raw float dump {path} truncated: {len(blob)} != {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=16)
    return data.reshape(h, w, c).astype(np.float64)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# Records and manifest


@dataclass(frozen=True)
class SampleRecord:
    id: str
    index: int
    split: str
    hr_size: tuple[int, int]
    lr_size: tuple[int, int]
    paths: dict
    sha256: dict
    params: RainParams

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "index": self.index,
            "split": self.split,
            "hr_size": list(self.hr_size),
            "lr_size": list(self.lr_size),
            "paths": dict(self.paths),
            "sha256": dict(self.sha256),
            "params": self.params.to_dict(),
            "atmo_value": self.params.atmo_value,
            "transmission_value": self.params.transmission_value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SampleRecord":
        return cls(
            id=d["id"],
            index=int(d["index"]),
            split=d["split"],
            hr_size=tuple(int(v) for v in d["hr_size"]),
            lr_size=tuple(int(v) for v in d["lr_size"]),
            paths=dict(d["paths"]),
            sha256=dict(d["sha256"]),
            params=RainParams.from_dict(d["params"]),
        )


@dataclass
class Manifest:
    config: DegradationConfig
    split_ratios: list
    records: list[SampleRecord]
    errors: list[dict] = field(default_factory=list)
    toolkit_version: str = __version__
    generated_at: str = ""
    root: Path | None = None

    def record_by_id(self, sample_id: str) -> SampleRecord:
        for rec in self.records:
            if rec.id == sample_id:
                return rec
        raise InvalidArgumentError(f"unknown sample id: {sample_id!r}")

    def resolve(self, rel: str) -> Path:
        if self.root is None:
            raise SampleIOError("manifest has no root directory; load it from disk first")
        return Path(self.root) / rel

    def to_dict(self) -> dict:
        return {
            "toolkit_version": self.toolkit_version,
            "generated_at": self.generated_at,
            "config": self.config.to_dict(),
            "split_ratios": list(self.split_ratios),
            "errors": list(self.errors),
            "records": [r.to_dict() for r in self.records],
        }

    def save(self, out_dir: Path) -> None:
        """Write ``manifest.json`` and the streaming ``records.jsonl``."""
        out_dir = Path(out_dir)
        with open(out_dir / "manifest.json", "w") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")
        with open(out_dir / "records.jsonl", "w") as f:
            for rec in self.records:
                f.write(json.dumps(rec.to_dict(), sort_keys=True))
                f.write("\n")
        self.root = out_dir

    @classmethod
    def load(cls, manifest_path: Path) -> "Manifest":
        manifest_path = Path(manifest_path)
        try:
            with open(manifest_path) as f:
                d = json.load(f)
        except FileNotFoundError:
            raise SampleIOError(f"missing manifest: {manifest_path}")
        except json.JSONDecodeError as e:
            raise SampleIOError(f"corrupt manifest {manifest_path}: {e}")
        return cls(
            config=DegradationConfig.from_dict(d["config"]),
            split_ratios=d["split_ratios"],
            records=[SampleRecord.from_dict(r) for r in d["records"]],
            errors=d.get("errors", []),
            toolkit_version=d.get("toolkit_version", "unknown"),
            generated_at=d.get("generated_at", ""),
            root=manifest_path.parent,
        )


# ---------------------------------------------------------------------------
# Split assignment


def _split_counts(n: int, ratios) -> tuple[int, int, int]:
    vals = list(ratios)
    if len(vals) != 3:
        raise InvalidArgumentError(f"split ratios must have 3 entries, got {len(vals)}")
    if any(v < 0 for v in vals):
        raise InvalidArgumentError(f"split ratios must be nonnegative, got {vals}")
    if all(float(v).is_integer() for v in vals) and sum(vals) == n and sum(vals) > 0 and max(vals) > 1:
        return tuple(int(v) for v in vals)
    total = float(sum(vals))
    if total <= 0:
        raise InvalidArgumentError("split ratios sum to zero")
    if abs(total - 1.0) > 1e-9 and not all(float(v).is_integer() for v in vals):
        raise InvalidArgumentError(f"fractional split ratios must sum to 1, got {vals}")
    if all(float(v).is_integer() for v in vals) and abs(total - 1.0) > 1e-9:
        raise InvalidArgumentError(
            f"absolute split sizes {vals} do not sum to the corpus size {n}")
    # Largest-remainder apportionment of fractional ratios.
    raw = [v / total * n for v in vals]
    base = [math.floor(r) for r in raw]
    rest = n - sum(base)
    order = sorted(range(3), key=lambda i: raw[i] - base[i], reverse=True)
    for i in range(rest):
        base[order[i]] += 1
    return tuple(base)


def assign_splits(ids: list[str], ratios, master_seed: int) -> dict[str, str]:
    """Deterministically partition ``ids`` into train/val/test.

    ``ratios`` is either three fractions summing to 1 or three absolute
    counts summing to ``len(ids)``; counts are honored exactly. The ids
    are ordered by a seeded hash (independent of input order) and sliced
    into the three splits.
    """
    if len(set(ids)) != len(ids):
        raise InvalidArgumentError("sample ids must be unique")
    n_train, n_val, n_test = _split_counts(len(ids), ratios)

    def key(sample_id: str) -> str:
        return _sha256(f"{master_seed}:{sample_id}".encode())

    ordered = sorted(ids, key=key)
    out = {}
    for pos, sample_id in enumerate(ordered):
        if pos < n_train:
            out[sample_id] = "train"
        elif pos < n_train + n_val:
            out[sample_id] = "val"
        else:
            out[sample_id] = "test"
    return out


# ---------------------------------------------------------------------------
# Generation


def resolve_workers(workers: int | None = None) -> int:
    """Explicit argument, else ``RAINSYNTH_THREADS``, else hardware count."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("RAINSYNTH_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _load_hr(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return arr.astype(np.float64) / 255.0


def _sample_outputs(sample_id: str, sample: DegradedSample, H: np.ndarray,
                    emit_parsed: bool, emit_preclamp: bool) -> dict[str, tuple[str, bytes]]:
    """Encode every artifact of one sample: key -> (relative path, bytes)."""
    out = {
        "hr": (f"hr/{sample_id}.png", encode_png(H)),
        "lr": (f"lr/{sample_id}.png", encode_png(sample.lr)),
        "lrhr": (f"lrhr/{sample_id}.png", encode_png(sample.lrhr)),
        "rain_layer": (f"rain/{sample_id}.png", encode_png(sample.phys.rain_layer_S)),
    }
    if emit_parsed:
        mask = synth_face_mask(H.shape[0], H.shape[1], seed=sample.params.sample_seed)
        out["parsed_hr"] = (f"parsed/{sample_id}.png", encode_parsing_png(mask))
    if emit_preclamp:
        out["preclamp_lrhr"] = (f"preclamp/{sample_id}.raw", encode_raw_float(sample.lrhr_preclamp))
    return out


def _generate_one(job: tuple) -> tuple[str, dict]:
    """Worker: degrade one source image and write its files."""
    index, src_path, sample_id, split, config, out_dir, emit_parsed, emit_preclamp = job
    src_path = Path(src_path)
    out_dir = Path(out_dir)
    try:
        H = _load_hr(src_path)
    except Exception as e:
        return ("err", {"file": str(src_path), "error": f"decode failed: {e}"})
    try:
        sample = degrade_full(H, config, index)
    except InvalidArgumentError as e:
        return ("err", {"file": str(src_path), "error": str(e)})
    outputs = _sample_outputs(sample_id, sample, H, emit_parsed, emit_preclamp)
    paths, hashes = {}, {}
    for key, (rel, blob) in outputs.items():
        (out_dir / rel).write_bytes(blob)
        paths[key] = rel
        hashes[key] = _sha256(blob)
    record = SampleRecord(
        id=sample_id,
        index=index,
        split=split,
        hr_size=(H.shape[0], H.shape[1]),
        lr_size=(sample.lr.shape[0], sample.lr.shape[1]),
        paths=paths,
        sha256=hashes,
        params=sample.params,
    )
    return ("ok", record.to_dict())


def generate_dataset(hr_dir: Path, config: DegradationConfig, split_ratios,
                     out_dir: Path, count: int | None = None,
                     workers: int | None = None, emit_parsed: bool = True,
                     emit_preclamp: bool = True) -> Manifest:
    """Degrade every image under ``hr_dir`` and persist a verifiable corpus.

    Inputs are taken in lexicographic filename order; a file's sample
    index is its position in that listing, so its parameters never depend
    on other files. Unreadable or mis-sized inputs become error entries
    and generation continues. Output bytes are identical for any worker
    count.
    """
    hr_dir = Path(hr_dir)
    out_dir = Path(out_dir)
    if not hr_dir.is_dir():
        raise SampleIOError(f"input directory does not exist: {hr_dir}")
    files = sorted(p for p in hr_dir.iterdir()
                   if p.is_file() and p.suffix.lower() in IMG_EXTENSIONS)
    if count is not None:
        if count > len(files):
            raise InvalidArgumentError(
                f"requested {count} samples but only {len(files)} inputs available")
        files = files[:count]
    if not files:
        raise InvalidArgumentError(f"no input images found in {hr_dir}")

    errors: list[dict] = []
    jobs = []
    seen: set[str] = set()
    candidates: list[tuple[int, Path, str]] = []
    for index, path in enumerate(files):
        sample_id = path.stem
        if sample_id in seen:
            errors.append({"file": str(path), "error": "duplicate sample id"})
            continue
        seen.add(sample_id)
        candidates.append((index, path, sample_id))

    splits = assign_splits([c[2] for c in candidates], split_ratios,
                           config.master_seed)

    for sub in _DIRS.values():
        (out_dir / sub).mkdir(parents=True, exist_ok=True)

    for index, path, sample_id in candidates:
        jobs.append((index, str(path), sample_id, splits[sample_id], config,
                     str(out_dir), emit_parsed, emit_preclamp))

    n_workers = min(resolve_workers(workers), len(jobs))
    if n_workers <= 1:
        results = [_generate_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_generate_one, jobs, chunksize=8))

    records = []
    for status, payload in results:
        if status == "ok":
            records.append(SampleRecord.from_dict(payload))
        else:
            errors.append(payload)
    records.sort(key=lambda r: r.index)

    manifest = Manifest(
        config=config,
        split_ratios=list(split_ratios),
        records=records,
        errors=errors,
        generated_at=datetime.now(timezone.utc).isoformat(),
    )
    manifest.save(out_dir)
    return manifest


# ---------------------------------------------------------------------------
# Loading and verification


@dataclass(frozen=True)
class LoadedSample:
    lrhr: np.ndarray
    lr: np.ndarray
    hr: np.ndarray
    phys: PhysicalParams
    parsed: ParsedMap | None
    lrhr_preclamp: np.ndarray | None


def rebuild_phys(params: RainParams, h: int, w: int, channels: int,
                 num_layers: int = 1) -> PhysicalParams:
    """Reconstruct the exact parameter maps from their recorded draws."""
    total = np.zeros((h, w, 1))
    for layer in range(num_layers):
        layer_params = replace(params, sample_seed=_layer_seed(params.sample_seed, layer))
        total = total + synth_rain_layer(h, w, layer_params)
    return PhysicalParams(
        rain_layer_S=total,
        transmission_T=make_transmission(h, w, params.transmission_value),
        atmospheric_A=make_atmospheric(h, w, params.atmo_value, channels=channels),
    )


def _checked_read(manifest: Manifest, record: SampleRecord, key: str) -> Path:
    path = manifest.resolve(record.paths[key])
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise SampleIOError(f"missing sample file: {path}")
    if _sha256(blob) != record.sha256[key]:
        raise SampleCorruptionError(f"checksum mismatch for {path}")
    return path


def load_sample(manifest: Manifest, sample_id: str) -> LoadedSample:
    """Decode one sample; parameter maps come from the exact recorded floats.

    Every file read is checksum-verified. The physical maps are rebuilt
    from the manifest's parameters rather than from the quantized PNGs so
    that loss computations see exact values.
    """
    record = manifest.record_by_id(sample_id)
    lrhr = decode_png(_checked_read(manifest, record, "lrhr"))
    lr = decode_png(_checked_read(manifest, record, "lr"))
    hr = decode_png(_checked_read(manifest, record, "hr"))
    for name, img, size in (("lrhr", lrhr, record.lr_size), ("lr", lr, record.lr_size),
                            ("hr", hr, record.hr_size)):
        if img.shape[:2] != size:
            raise SampleCorruptionError(
                f"{name} of sample {sample_id!r} decodes to {img.shape[:2]}, "
                f"manifest records {size}")
    phys = rebuild_phys(record.params, lr.shape[0], lr.shape[1], lr.shape[2],
                        num_layers=manifest.config.num_streak_layers_m)
    parsed = None
    if "parsed_hr" in record.paths:
        parsed = decode_parsing_png(_checked_read(manifest, record, "parsed_hr"))
    preclamp = None
    if "preclamp_lrhr" in record.paths:
        preclamp = read_raw_float(_checked_read(manifest, record, "preclamp_lrhr"))
    return LoadedSample(lrhr=lrhr, lr=lr, hr=hr, phys=phys, parsed=parsed,
                        lrhr_preclamp=preclamp)


def load_preclamp(manifest: Manifest, sample_id: str) -> np.ndarray:
    """Read just the pre-clamp float dump of one sample."""
    record = manifest.record_by_id(sample_id)
    if "preclamp_lrhr" not in record.paths:
        raise InvalidArgumentError(
            f"sample {sample_id!r} has no pre-clamp dump; regenerate with dumps enabled")
    return read_raw_float(_checked_read(manifest, record, "preclamp_lrhr"))


@dataclass(frozen=True)
class VerifyEntry:
    id: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class VerifyReport:
    entries: list[VerifyEntry]

    @property
    def n_pass(self) -> int:
        return sum(1 for e in self.entries if e.ok)

    @property
    def n_fail(self) -> int:
        return sum(1 for e in self.entries if not e.ok)

    @property
    def all_ok(self) -> bool:
        return self.n_fail == 0


def _verify_record(manifest: Manifest, record: SampleRecord) -> VerifyEntry:
    # Stage 1: on-disk bytes still match the recorded checksums.
    for key, rel in record.paths.items():
        path = manifest.resolve(rel)
        try:
            blob = path.read_bytes()
        except FileNotFoundError:
            return VerifyEntry(record.id, False, f"missing file: {rel}")
        if _sha256(blob) != record.sha256[key]:
            return VerifyEntry(record.id, False, f"checksum mismatch: {rel}")
    # Stage 2: the sample re-derives bit-exactly from its seed.
    H = decode_png(manifest.resolve(record.paths["hr"]))
    try:
        sample = degrade_full(H, manifest.config, record.index)
    except InvalidArgumentError as e:
        return VerifyEntry(record.id, False, f"replay failed: {e}")
    if sample.params != record.params:
        return VerifyEntry(record.id, False, "replayed parameters differ from record")
    regenerated = _sample_outputs(record.id, sample, H,
                                  emit_parsed="parsed_hr" in record.paths,
                                  emit_preclamp="preclamp_lrhr" in record.paths)
    for key, (_, blob) in regenerated.items():
        if _sha256(blob) != record.sha256[key]:
            return VerifyEntry(record.id, False, f"replayed {key} differs from record")
    return VerifyEntry(record.id, True, "")


def verify_manifest(manifest: Manifest) -> VerifyReport:
    """Re-derive every sample from its seed and compare with stored files."""
    return VerifyReport(entries=[_verify_record(manifest, r) for r in manifest.records])
