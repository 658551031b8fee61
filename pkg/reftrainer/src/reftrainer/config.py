"""Training and architecture configuration."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class CropBox:
    """Normalized crop rectangle, matching the corpus toolkit's convention:
    pixel box starts at floor(lo * dim) and spans floor((hi - lo) * dim)."""

    x0: float
    y0: float
    x1: float
    y1: float


def default_crop_boxes() -> dict[str, CropBox]:
    return {
        "eye": CropBox(0.15, 0.30, 0.85, 0.50),
        "nose": CropBox(0.35, 0.45, 0.65, 0.70),
        "lip": CropBox(0.30, 0.68, 0.70, 0.85),
    }


@dataclass(frozen=True)
class ModelConfig:
    """Toy-scale defaults; the schedule fields carry full-scale values.

    Full-scale runs use batch 64 for 200 pretraining epochs and batch 16
    for 80 joint epochs; desk-scale runs override ``*_steps`` directly and
    ignore the epoch fields.
    """

    # architecture
    base_width: int = 16
    dense_layers: int = 3
    growth: int = 8
    upsample_factor: int = 4          # must equal the corpus scale
    num_parse_classes: int = 6

    # optimizer
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4

    # full-scale schedule (reference defaults)
    pretrain_epochs: int = 200
    pretrain_batch_size: int = 64
    joint_epochs: int = 80
    joint_batch_size: int = 16

    # loss weights
    omega1: float = 0.1
    gamma_p: float = 1e-3
    gamma1: float = 1e-3
    gamma2: float = 1e-4
    gamma3: float = 1e-4
    gamma4: float = 1e-4

    # joint-stage behavior
    freeze_pretrained: bool = False

    seed: int = 0
    crop_boxes: dict = field(default_factory=default_crop_boxes)
