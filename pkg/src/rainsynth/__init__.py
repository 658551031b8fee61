"""rainsynth: deterministic low-resolution heavy-rain degradation toolkit.

Synthesis of rain-and-veiling degraded low-resolution images from clean
high-resolution sources, the exact parameterized inverse, loss formulas
over images and discriminator scores, PSNR/SSIM scoring, and a
reproducible dataset generator with a verifiable manifest.
"""

__version__ = "0.1.0"

from .errors import (
    IllConditionedInversionError,
    InvalidArgumentError,
    RainsynthError,
    SampleCorruptionError,
    SampleIOError,
)
from .imgcore import clamp01, convolve2d, gaussian_kernel, resize_bicubic
from .rainmodel import (
    DegradationConfig,
    DegradedSample,
    PhysicalParams,
    RainParams,
    compose_heavyrain,
    degrade_full,
    degrade_lr,
    invert_heavyrain,
    make_atmospheric,
    make_transmission,
    motion_kernel,
    recompose,
    sample_params,
    synth_rain_layer,
)
from .losses import (
    DiscriminatorScores,
    FeatureExtractor,
    GradientPyramidExtractor,
    LossWeights,
    loss_discriminators,
    loss_generator,
    loss_recon,
    loss_rt,
    mse,
    perceptual,
)
from .metrics import SsimParams, psnr, ssim
from .facecrop import (
    PARSE_CLASSES,
    CropBoxes,
    NormRect,
    ParsedMap,
    crop_region,
    default_boxes,
    downsample_parsing,
    synth_face_mask,
)
from .dataset import (
    Manifest,
    SampleRecord,
    assign_splits,
    generate_dataset,
    load_preclamp,
    load_sample,
    verify_manifest,
)
from .cli import IOConfig, RunConfig

__all__ = [
    "__version__",
    # errors
    "RainsynthError",
    "InvalidArgumentError",
    "IllConditionedInversionError",
    "SampleIOError",
    "SampleCorruptionError",
    # imgcore
    "gaussian_kernel",
    "convolve2d",
    "resize_bicubic",
    "clamp01",
    # rainmodel
    "DegradationConfig",
    "RainParams",
    "PhysicalParams",
    "DegradedSample",
    "sample_params",
    "motion_kernel",
    "synth_rain_layer",
    "make_transmission",
    "make_atmospheric",
    "degrade_lr",
    "compose_heavyrain",
    "recompose",
    "invert_heavyrain",
    "degrade_full",
    # losses
    "LossWeights",
    "DiscriminatorScores",
    "FeatureExtractor",
    "GradientPyramidExtractor",
    "mse",
    "perceptual",
    "loss_recon",
    "loss_rt",
    "loss_generator",
    "loss_discriminators",
    # metrics
    "SsimParams",
    "psnr",
    "ssim",
    # facecrop
    "PARSE_CLASSES",
    "NormRect",
    "CropBoxes",
    "ParsedMap",
    "crop_region",
    "default_boxes",
    "downsample_parsing",
    "synth_face_mask",
    # dataset
    "Manifest",
    "SampleRecord",
    "assign_splits",
    "generate_dataset",
    "load_sample",
    "load_preclamp",
    "verify_manifest",
    # cli
    "RunConfig",
    "IOConfig",
]
