"""Optimizer construction: Adam, SGD with momentum, and layerwise-adaptive
LARS.  Biases and normalization/scale parameters go into a no-decay group
that LARS also exempts from trust-ratio adaptation."""

from __future__ import annotations

import torch
from torch.optim.optimizer import Optimizer

from .errors import ConfigError

OPTIMIZERS = ("adam", "sgd", "lars")

NO_DECAY_NAME_PARTS = ("cls_token", "pos_embed", "rel_bias")


class LARS(Optimizer):
    """SGD with momentum scaled per layer by the trust ratio
    ``eta * ||w|| / (||g|| + wd * ||w||)``; groups flagged ``lars_exclude``
    fall back to plain momentum SGD."""

    def __init__(self, params, lr: float, momentum: float = 0.9,
                 weight_decay: float = 0.0, trust_coefficient: float = 1e-3):
        if lr < 0:
            raise ConfigError(f"invalid learning rate {lr}")
        defaults = dict(lr=lr, momentum=momentum, weight_decay=weight_decay,
                        trust_coefficient=trust_coefficient)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            wd = group["weight_decay"]
            momentum = group["momentum"]
            eta = group["trust_coefficient"]
            exclude = group.get("lars_exclude", False)
            for p in group["params"]:
                if p.grad is None:
                    continue
                grad = p.grad
                if exclude:
                    update = grad
                else:
                    w_norm = p.norm()
                    g_norm = grad.norm()
                    denom = g_norm + wd * w_norm
                    ratio = eta * w_norm / denom if denom > 0 else torch.ones((), device=p.device)
                    update = ratio * (grad + wd * p)
                buf = self.state.setdefault(p, {}).setdefault(
                    "momentum_buffer", torch.zeros_like(p))
                buf.mul_(momentum).add_(update)
                p.add_(buf, alpha=-group["lr"])
        return loss


def split_param_groups(module: torch.nn.Module) -> list[dict]:
    """Two groups: weight matrices (decayable, LARS-adapted) and everything
    one-dimensional or positional (no decay, no adaptation)."""
    decay, no_decay = [], []
    for name, p in module.named_parameters():
        if not p.requires_grad:
            continue
        if p.ndim <= 1 or any(part in name for part in NO_DECAY_NAME_PARTS):
            no_decay.append(p)
        else:
            decay.append(p)
    groups = []
    if decay:
        groups.append({"params": decay, "use_weight_decay": True})
    if no_decay:
        groups.append({"params": no_decay, "weight_decay": 0.0,
                       "use_weight_decay": False, "lars_exclude": True})
    return groups


def build_optimizer(kind: str, module: torch.nn.Module, base_lr: float,
                    momentum: float = 0.9, trust_coefficient: float = 1e-3) -> Optimizer:
    groups = split_param_groups(module)
    if not groups:
        raise ConfigError("module has no trainable parameters")
    if kind == "adam":
        return torch.optim.Adam(groups, lr=base_lr)
    if kind == "sgd":
        return torch.optim.SGD(groups, lr=base_lr, momentum=momentum)
    if kind == "lars":
        return LARS(groups, lr=base_lr, momentum=momentum,
                    trust_coefficient=trust_coefficient)
    raise ConfigError(f"unknown optimizer {kind!r}; expected one of {OPTIMIZERS}")
