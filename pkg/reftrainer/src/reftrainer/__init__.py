"""reftrainer: toy-scale reference trainer for rain-degraded face restoration.

Trains a three-module network (physical-parameter rain removal, face
parsing, and an upsampling generator with one global and three local
facial-component discriminators) on corpora produced by the rainsynth
toolkit, and scores results through the toolkit's CLI.
"""

__version__ = "0.1.0"

from .config import CropBox, ModelConfig, default_crop_boxes
from .corpus import Corpus, CorpusSample, load_corpus
from .networks import (
    DenseBlock,
    Discriminator,
    FpmNet,
    Generator,
    HrrmNet,
    NetworkBundle,
    build_bundle,
)
from .trainer import (
    JointStepLosses,
    JointTrainer,
    RestoreResult,
    TrainingDiverged,
    evaluate,
    hrrm_loss_report,
    joint_loss_report,
    pretrain_fpm,
    pretrain_hrrm,
    restore,
    score_dirs,
    train_joint,
)

__all__ = [
    "__version__",
    "ModelConfig",
    "CropBox",
    "default_crop_boxes",
    "Corpus",
    "CorpusSample",
    "load_corpus",
    "DenseBlock",
    "HrrmNet",
    "FpmNet",
    "Generator",
    "Discriminator",
    "NetworkBundle",
    "build_bundle",
    "pretrain_hrrm",
    "pretrain_fpm",
    "train_joint",
    "JointTrainer",
    "restore",
    "evaluate",
    "score_dirs",
    "hrrm_loss_report",
    "joint_loss_report",
    "RestoreResult",
    "JointStepLosses",
    "TrainingDiverged",
]
