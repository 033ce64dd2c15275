"""The four frameworks as interchangeable training strategies.

Every method owns a student-side tower (encoder + head(s)) whose parameters
the optimizer updates, and -- for the distillation-style methods -- a
teacher/target tower updated only by EMA after each step.  ``loss_on_views``
is pure with respect to model state; all mutation happens in ``post_step``.
"""

from __future__ import annotations

import copy
from collections import OrderedDict
from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..backbones import BackboneConfig, build_backbone
from .config import BYOLConfig, DINOConfig, SimCLRConfig, SimSiamConfig
from .heads import DistillationHead, PredictionMLP, ProjectionMLP
from .losses import (
    byol_loss,
    dino_loss,
    ema_update_,
    simclr_loss,
    simsiam_loss,
    softmax_entropy,
    teacher_softmax,
    update_center,
)


@dataclass
class FrameworkOutput:
    loss: float
    diagnostics: dict[str, float] = field(default_factory=dict)


@dataclass
class SSLState:
    """Snapshot view of the resumable training state."""

    student_params: dict[str, torch.Tensor]
    teacher_params: dict[str, torch.Tensor] | None
    center: torch.Tensor | None
    step: int


class SSLMethod(nn.Module):
    """Base for the four frameworks; subclasses set ``framework`` and
    implement ``loss_on_views`` / ``post_step``."""

    framework: str = ""

    def __init__(self):
        super().__init__()
        self.register_buffer("step", torch.zeros((), dtype=torch.long))

    def loss_on_views(self, v1: torch.Tensor, v2: torch.Tensor) -> tuple[torch.Tensor, dict]:
        raise NotImplementedError

    @torch.no_grad()
    def post_step(self):
        """Updates applied after the optimizer step (EMA, centering)."""

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def ssl_state(self) -> SSLState:
        student = {n: p.detach().clone() for n, p in self.student.named_parameters()}
        teacher = getattr(self, "teacher", None)
        teacher_params = (
            {n: p.detach().clone() for n, p in teacher.named_parameters()}
            if teacher is not None else None
        )
        center = self.center.detach().clone() if hasattr(self, "center") else None
        return SSLState(student, teacher_params, center, int(self.step))


def _frozen_copy(module: nn.Module) -> nn.Module:
    clone = copy.deepcopy(module)
    for p in clone.parameters():
        p.requires_grad_(False)
    return clone


class AdaptedDINO(SSLMethod):
    """Two fixed-size views through student and teacher; teacher outputs are
    centered and sharpened; teacher follows the student by EMA."""

    framework = "adapted_dino"

    def __init__(self, backbone_cfg: BackboneConfig, cfg: DINOConfig):
        super().__init__()
        self.cfg = cfg
        encoder = build_backbone(backbone_cfg)
        head = DistillationHead(encoder.embed_dim, cfg.head_hidden, cfg.head_bottleneck,
                                cfg.out_dim, norm_last_layer=cfg.norm_last_layer)
        self.student = nn.Sequential(OrderedDict(encoder=encoder, head=head))
        self.teacher = _frozen_copy(self.student)
        self.register_buffer("center", torch.zeros(cfg.out_dim))
        self._pending_teacher_logits: torch.Tensor | None = None

    def loss_on_views(self, v1, v2):
        s1, s2 = self.student(v1), self.student(v2)
        with torch.no_grad():
            t1, t2 = self.teacher(v1), self.teacher(v2)
        loss = dino_loss((s1, s2), (t1, t2), self.center,
                         self.cfg.tau_student, self.cfg.tau_teacher)
        teacher_logits = torch.cat([t1, t2], dim=0)
        self._pending_teacher_logits = teacher_logits
        probs = teacher_softmax(teacher_logits, self.center, self.cfg.tau_teacher)
        diag = {"teacher_entropy": float(softmax_entropy(probs).mean())}
        return loss, diag

    @torch.no_grad()
    def post_step(self):
        ema_update_(self.teacher, self.student, self.cfg.teacher_momentum)
        if self._pending_teacher_logits is not None:
            self.center.copy_(update_center(self.center, self._pending_teacher_logits,
                                            self.cfg.center_momentum))
            self._pending_teacher_logits = None


class SimCLR(SSLMethod):
    framework = "simclr"

    def __init__(self, backbone_cfg: BackboneConfig, cfg: SimCLRConfig):
        super().__init__()
        self.cfg = cfg
        encoder = build_backbone(backbone_cfg)
        projector = ProjectionMLP(encoder.embed_dim, cfg.proj_hidden, cfg.proj_dim)
        self.student = nn.Sequential(OrderedDict(encoder=encoder, projector=projector))

    def loss_on_views(self, v1, v2):
        z = torch.cat([self.student(v1), self.student(v2)], dim=0)
        return simclr_loss(z, self.cfg.temperature), {}


class BYOL(SSLMethod):
    framework = "byol"

    def __init__(self, backbone_cfg: BackboneConfig, cfg: BYOLConfig):
        super().__init__()
        self.cfg = cfg
        encoder = build_backbone(backbone_cfg)
        projector = ProjectionMLP(encoder.embed_dim, cfg.proj_hidden, cfg.proj_dim)
        self.student = nn.Sequential(OrderedDict(encoder=encoder, projector=projector))
        self.predictor = PredictionMLP(cfg.proj_dim, cfg.pred_hidden)
        self.teacher = _frozen_copy(self.student)

    def loss_on_views(self, v1, v2):
        p1 = self.predictor(self.student(v1))
        p2 = self.predictor(self.student(v2))
        with torch.no_grad():
            z1, z2 = self.teacher(v1), self.teacher(v2)
        loss = 0.5 * (byol_loss(p1, z2) + byol_loss(p2, z1))
        return loss, {}

    @torch.no_grad()
    def post_step(self):
        ema_update_(self.teacher, self.student, self.cfg.momentum)


class SimSiam(SSLMethod):
    framework = "simsiam"

    def __init__(self, backbone_cfg: BackboneConfig, cfg: SimSiamConfig):
        super().__init__()
        self.cfg = cfg
        encoder = build_backbone(backbone_cfg)
        projector = ProjectionMLP(encoder.embed_dim, cfg.proj_hidden, cfg.proj_dim)
        self.student = nn.Sequential(OrderedDict(encoder=encoder, projector=projector))
        self.predictor = PredictionMLP(cfg.proj_dim, cfg.pred_hidden)

    def loss_on_views(self, v1, v2):
        z1, z2 = self.student(v1), self.student(v2)
        p1, p2 = self.predictor(z1), self.predictor(z2)
        loss = 0.5 * (simsiam_loss(p1, z2) + simsiam_loss(p2, z1))
        return loss, {}


def build_method(framework: str, backbone_cfg: BackboneConfig, framework_cfg) -> SSLMethod:
    methods = {
        "adapted_dino": (AdaptedDINO, DINOConfig),
        "simclr": (SimCLR, SimCLRConfig),
        "byol": (BYOL, BYOLConfig),
        "simsiam": (SimSiam, SimSiamConfig),
    }
    if framework not in methods:
        raise ValueError(f"unknown framework {framework!r}; expected one of {sorted(methods)}")
    cls, cfg_cls = methods[framework]
    if not isinstance(framework_cfg, cfg_cls):
        raise ValueError(f"{framework} expects a {cfg_cls.__name__}, got {type(framework_cfg).__name__}")
    return cls(backbone_cfg, framework_cfg)
