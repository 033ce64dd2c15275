from .config import BYOLConfig, DINOConfig, FRAMEWORKS, SimCLRConfig, SimSiamConfig
from .heads import DistillationHead, NormalizedLinear, PredictionMLP, ProjectionMLP
from .losses import (
    byol_loss,
    dino_loss,
    ema_update,
    ema_update_,
    simclr_loss,
    simsiam_loss,
    softmax_entropy,
    teacher_softmax,
    update_center,
)
from .methods import (
    AdaptedDINO,
    BYOL,
    FrameworkOutput,
    SimCLR,
    SimSiam,
    SSLMethod,
    SSLState,
    build_method,
)
from .step import train_step

__all__ = [
    "AdaptedDINO", "BYOL", "BYOLConfig", "DINOConfig", "DistillationHead",
    "FRAMEWORKS", "FrameworkOutput", "NormalizedLinear", "PredictionMLP",
    "ProjectionMLP", "SSLMethod", "SSLState", "SimCLR", "SimCLRConfig",
    "SimSiam", "SimSiamConfig", "build_method", "byol_loss", "dino_loss",
    "ema_update", "ema_update_", "simclr_loss", "simsiam_loss",
    "softmax_entropy", "teacher_softmax", "train_step", "update_center",
]
