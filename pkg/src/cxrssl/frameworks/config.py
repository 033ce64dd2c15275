"""Hyperparameter records for the four frameworks.

Defaults follow the self-distillation lineage the method adapts; every
value is config-exposed and none is hard-coded in the training path.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError

FRAMEWORKS = ("adapted_dino", "simclr", "byol", "simsiam")


def _check_unit(name: str, value: float):
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class DINOConfig:
    out_dim: int = 4096
    tau_student: float = 0.1
    tau_teacher: float = 0.04
    teacher_momentum: float = 0.996
    center_momentum: float = 0.9
    head_hidden: int = 2048
    head_bottleneck: int = 256
    norm_last_layer: bool = True
    # set False only for collapse-ablation runs that deliberately remove
    # sharpening (tau_teacher == tau_student)
    enforce_sharpening: bool = True

    def __post_init__(self):
        if self.tau_student <= 0 or self.tau_teacher <= 0:
            raise ConfigError("temperatures must be positive")
        if self.enforce_sharpening and not self.tau_teacher < self.tau_student:
            raise ConfigError(
                f"sharpening requires tau_teacher < tau_student "
                f"(got {self.tau_teacher} vs {self.tau_student})"
            )
        _check_unit("teacher_momentum", self.teacher_momentum)
        _check_unit("center_momentum", self.center_momentum)
        if self.out_dim < 2:
            raise ConfigError("out_dim must be at least 2")


@dataclass(frozen=True)
class SimCLRConfig:
    proj_dim: int = 128
    proj_hidden: int = 2048
    temperature: float = 0.5

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")


@dataclass(frozen=True)
class BYOLConfig:
    proj_dim: int = 256
    proj_hidden: int = 4096
    pred_hidden: int = 4096
    momentum: float = 0.996

    def __post_init__(self):
        _check_unit("momentum", self.momentum)


@dataclass(frozen=True)
class SimSiamConfig:
    proj_dim: int = 2048
    proj_hidden: int = 2048
    pred_hidden: int = 512
