"""Facial-component cropping and parsing-map utilities.

Crop boxes are stored as normalized fractions of the image so one set of
boxes serves images of any resolution. Parsing maps label every pixel
with one of six integer classes; a deterministic geometric face
generator provides stand-in masks wherever annotated data is
unavailable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .imgcore import ensure_image

__all__ = [
    "PARSE_CLASSES",
    "NormRect",
    "CropBoxes",
    "ParsedMap",
    "crop_region",
    "default_boxes",
    "downsample_parsing",
    "synth_face_mask",
]

# Class palette used by every parsing map and its 8-bit PNG persistence.
PARSE_CLASSES = {
    "background": 0,
    "skin": 1,
    "eye": 2,
    "nose": 3,
    "lip": 4,
    "hair": 5,
}


@dataclass(frozen=True)
class NormRect:
    """Axis-aligned box in normalized [0, 1] image coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        for v in (self.x0, self.y0, self.x1, self.y1):
            if not np.isfinite(v) or not (0.0 <= v <= 1.0):
                raise InvalidArgumentError(f"rect coordinates must lie in [0, 1], got {self}")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise InvalidArgumentError(f"rect must have positive extent, got {self}")

    def to_list(self) -> list[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, vals) -> "NormRect":
        x0, y0, x1, y1 = (float(v) for v in vals)
        return cls(x0, y0, x1, y1)


@dataclass(frozen=True)
class CropBoxes:
    eye: NormRect
    nose: NormRect
    lip: NormRect

    def to_dict(self) -> dict:
        return {"eye": self.eye.to_list(), "nose": self.nose.to_list(), "lip": self.lip.to_list()}

    @classmethod
    def from_dict(cls, d: dict) -> "CropBoxes":
        return cls(
            eye=NormRect.from_list(d["eye"]),
            nose=NormRect.from_list(d["nose"]),
            lip=NormRect.from_list(d["lip"]),
        )


@dataclass(frozen=True)
class ParsedMap:
    """Per-pixel integer class labels over the six-class palette."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise InvalidArgumentError(f"parsing labels must be 2-D, got ndim={arr.ndim}")
        if not np.issubdtype(arr.dtype, np.integer):
            arr = arr.astype(np.int64)
        valid = set(PARSE_CLASSES.values())
        present = set(np.unique(arr).tolist())
        if not present <= valid:
            raise InvalidArgumentError(f"unknown parsing labels: {sorted(present - valid)}")
        object.__setattr__(self, "labels", arr.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def crop_region(img: np.ndarray, r: NormRect) -> np.ndarray:
    """Extract the integer pixel box of ``r`` from ``img``.

    The box starts at ``(floor(x0*W), floor(y0*H))`` and spans
    ``floor((x1-x0)*W) x floor((y1-y0)*H)`` pixels (half-open). Contents
    are copied bit-identically.
    """
    arr = ensure_image(img)
    h, w = arr.shape[:2]
    x_start = math.floor(r.x0 * w)
    y_start = math.floor(r.y0 * h)
    box_w = math.floor((r.x1 - r.x0) * w)
    box_h = math.floor((r.y1 - r.y0) * h)
    if box_w < 1 or box_h < 1:
        raise InvalidArgumentError(f"rect {r} maps to an empty pixel box on a {h}x{w} image")
    return arr[y_start:y_start + box_h, x_start:x_start + box_w, :].copy()


def default_boxes() -> CropBoxes:
    """Component boxes proportioned for aligned frontal face crops."""
    return CropBoxes(
        eye=NormRect(0.15, 0.30, 0.85, 0.50),
        nose=NormRect(0.35, 0.45, 0.65, 0.70),
        lip=NormRect(0.30, 0.68, 0.70, 0.85),
    )


def downsample_parsing(parsed: ParsedMap, s: int) -> ParsedMap:
    """Nearest-neighbor label subsampling by integer factor ``s``.

    Each output label is the source label at the top-left corner of its
    block; labels are never blended, so no new classes can appear.
    """
    s = int(s)
    if s < 1:
        raise InvalidArgumentError(f"scale must be >= 1, got {s}")
    if parsed.height % s != 0 or parsed.width % s != 0:
        raise InvalidArgumentError(
            f"parsing map {parsed.height}x{parsed.width} not divisible by scale {s}")
    return ParsedMap(parsed.labels[::s, ::s])


# Base geometry of the synthetic face, in normalized coordinates. Each
# entry stays inside its default crop box (and inside the skin ellipse)
# with a margin comfortably above the maximum jitter.
_FACE_GEOMETRY = {
    "hair": (0.50, 0.38, 0.36, 0.30),   # cx, cy, rx, ry
    "skin": (0.50, 0.58, 0.32, 0.34),
    "eye_left": (0.35, 0.40, 0.05, 0.03),
    "eye_right": (0.65, 0.40, 0.05, 0.03),
    "nose": (0.50, 0.50, 0.06, 0.14),   # apex at cy, base half-width rx, height ry
    "lip": (0.50, 0.765, 0.12, 0.045),
}

_MAX_JITTER = 0.02


def synth_face_mask(h: int, w: int, seed: int, jitter: float = _MAX_JITTER) -> ParsedMap:
    """Deterministic geometric face mask: ellipses plus a nose triangle.

    ``jitter`` displaces each component center by a seed-derived offset
    drawn uniformly from ``[-jitter, jitter]`` per axis. It is capped at
    0.02 so that jittered components always stay inside their default
    crop boxes; pass 0 for the exact base geometry.
    """
    h, w = int(h), int(w)
    if h < 16 or w < 16:
        raise InvalidArgumentError(f"mask dimensions must be >= 16, got {h}x{w}")
    if not (0.0 <= jitter <= _MAX_JITTER):
        raise InvalidArgumentError(f"jitter must lie in [0, {_MAX_JITTER}], got {jitter}")
    rng = np.random.default_rng(seed)
    offsets = {name: rng.uniform(-jitter, jitter, size=2) for name in _FACE_GEOMETRY}

    ny = (np.arange(h) + 0.5)[:, None] / h
    nx = (np.arange(w) + 0.5)[None, :] / w
    labels = np.zeros((h, w), dtype=np.uint8)

    def ellipse(name):
        cx, cy, rx, ry = _FACE_GEOMETRY[name]
        dx, dy = offsets[name]
        return ((nx - (cx + dx)) / rx) ** 2 + ((ny - (cy + dy)) / ry) ** 2 <= 1.0

    labels[ellipse("hair")] = PARSE_CLASSES["hair"]
    labels[ellipse("skin")] = PARSE_CLASSES["skin"]
    labels[ellipse("eye_left")] = PARSE_CLASSES["eye"]
    labels[ellipse("eye_right")] = PARSE_CLASSES["eye"]

    cx, cy, half_w, height = _FACE_GEOMETRY["nose"]
    dx, dy = offsets["nose"]
    apex_x, apex_y = cx + dx, cy + dy
    rel = (ny - apex_y) / height
    triangle = (rel >= 0.0) & (rel <= 1.0) & (np.abs(nx - apex_x) <= half_w * rel)
    labels[triangle] = PARSE_CLASSES["nose"]

    labels[ellipse("lip")] = PARSE_CLASSES["lip"]
    return ParsedMap(labels)
