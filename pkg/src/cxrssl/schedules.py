"""Learning-rate and weight-decay schedules; pure functions of the step."""

from __future__ import annotations

import math

from .errors import ConfigError

LR_POLICIES = ("constant", "cosine")


def lr_schedule(step: int, total_steps: int, base_lr: float, warmup_steps: int = 0,
                policy: str = "constant") -> float:
    """Linear ramp from 0 to ``base_lr`` over the warmup, then the post-
    warmup policy.  ``lr(warmup_steps) == base_lr`` exactly."""
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    if policy not in LR_POLICIES:
        raise ConfigError(f"unknown lr policy {policy!r}")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if policy == "constant":
        return base_lr
    span = max(total_steps - warmup_steps, 1)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - warmup_steps) / span))


def wd_schedule(step: int, total_steps: int, wd_start: float, wd_end: float) -> float:
    """Linear interpolation from ``wd_start`` at step 0 to ``wd_end`` at the
    final step (``total_steps - 1``)."""
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    if total_steps == 1 or wd_start == wd_end:
        return wd_start
    frac = step / (total_steps - 1)
    return wd_start + (wd_end - wd_start) * frac
