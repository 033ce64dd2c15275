"""Objectives for the four self-supervised frameworks.

The self-distillation objective compares softmax distributions of a student
and an EMA teacher over the same two augmented views: teacher outputs are
centered by a running mean and sharpened with a lower temperature, and the
cross-entropy is taken in both view directions with the teacher treated as
a constant.  The baselines are NT-Xent (contrastive), normalized-MSE with a
stop-gradient target, and negative cosine with a stop-gradient target.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from ..errors import NumericError


def _check_finite(name: str, x: torch.Tensor):
    if not torch.isfinite(x).all():
        raise NumericError(f"non-finite values in {name}")


def teacher_softmax(teacher_logits: torch.Tensor, center: torch.Tensor,
                    tau_teacher: float) -> torch.Tensor:
    """Centered, sharpened teacher distribution; detached from the graph."""
    return F.softmax((teacher_logits.detach() - center.detach()) / tau_teacher, dim=-1)


def softmax_entropy(probs: torch.Tensor) -> torch.Tensor:
    """Row-wise Shannon entropy in nats, with 0*log(0) = 0."""
    logp = torch.where(probs > 0, probs.log(), torch.zeros_like(probs))
    return -(probs * logp).sum(dim=-1)


def dino_loss(student_logits: tuple[torch.Tensor, torch.Tensor],
              teacher_logits: tuple[torch.Tensor, torch.Tensor],
              center: torch.Tensor,
              tau_student: float, tau_teacher: float) -> torch.Tensor:
    """Symmetric two-view self-distillation cross-entropy.

    Each element of ``student_logits``/``teacher_logits`` is a (B, K) head
    output for one view.  The teacher side is centered and sharpened, and is
    a constant for differentiation; the student side is a log-softmax at its
    own temperature.  The two cross-view terms are averaged, as is the batch.
    """
    s1, s2 = student_logits
    t1, t2 = teacher_logits
    k = center.shape[-1]
    for name, x in (("student v1", s1), ("student v2", s2), ("teacher v1", t1), ("teacher v2", t2)):
        if x.shape[-1] != k:
            raise ValueError(f"{name} has {x.shape[-1]} classes but center has {k}")
        _check_finite(name, x)
    _check_finite("center", center)

    def cross_entropy(teacher, student):
        p_t = teacher_softmax(teacher, center, tau_teacher)
        log_p_s = F.log_softmax(student / tau_student, dim=-1)
        return -(p_t * log_p_s).sum(dim=-1).mean()

    return 0.5 * (cross_entropy(t1, s2) + cross_entropy(t2, s1))


def update_center(center: torch.Tensor, teacher_logits_batch: torch.Tensor,
                  momentum: float) -> torch.Tensor:
    """EMA of the batch-mean teacher logits (pre-softmax); pure function."""
    if teacher_logits_batch.ndim != 2 or teacher_logits_batch.shape[0] < 1:
        raise ValueError("teacher logits batch must be a non-empty (N, K) array")
    batch_mean = teacher_logits_batch.detach().mean(dim=0)
    return momentum * center + (1.0 - momentum) * batch_mean


def ema_update(teacher_params, student_params, momentum: float):
    """Leafwise ``t' = m*t + (1-m)*s`` over two same-shaped parameter
    collections; pure, returns new tensors.

    Accepts mappings (name -> tensor) or plain sequences of tensors.
    """
    if isinstance(teacher_params, dict) != isinstance(student_params, dict):
        raise ValueError("teacher and student parameter collections must have the same structure")
    if isinstance(teacher_params, dict):
        if teacher_params.keys() != student_params.keys():
            raise ValueError("teacher and student parameter names differ")
        items = [(name, teacher_params[name], student_params[name]) for name in teacher_params]
        out_dict = True
    else:
        teacher_params = list(teacher_params)
        student_params = list(student_params)
        if len(teacher_params) != len(student_params):
            raise ValueError("teacher and student parameter counts differ")
        items = [(i, t, s) for i, (t, s) in enumerate(zip(teacher_params, student_params))]
        out_dict = False
    out = {}
    for key, t, s in items:
        if t.shape != s.shape:
            raise ValueError(f"shape mismatch at {key!r}: {tuple(t.shape)} vs {tuple(s.shape)}")
        out[key] = momentum * t.detach() + (1.0 - momentum) * s.detach()
    return out if out_dict else list(out.values())


@torch.no_grad()
def ema_update_(teacher_module, student_module, momentum: float):
    """In-place EMA of a teacher module toward a student module."""
    t_params = dict(teacher_module.named_parameters())
    s_params = dict(student_module.named_parameters())
    new = ema_update(t_params, s_params, momentum)
    for name, value in new.items():
        t_params[name].copy_(value)
    # buffers (e.g. normalization statistics) are mirrored directly
    for (name, t_buf), (_, s_buf) in zip(teacher_module.named_buffers(), student_module.named_buffers()):
        if t_buf.dtype.is_floating_point:
            t_buf.copy_(s_buf)


def simclr_loss(projections: torch.Tensor, temperature: float) -> torch.Tensor:
    """NT-Xent over 2B projections where rows i and i+B are views of image i.

    Per anchor, the positive's cosine similarity is contrasted against the
    2B-2 negatives at the given temperature; the mean over anchors is
    returned.  Similarities are cosine, so projections may have any scale.
    """
    if projections.ndim != 2 or projections.shape[0] % 2 != 0:
        raise ValueError("projections must be (2B, D)")
    two_b = projections.shape[0]
    b = two_b // 2
    if b < 2:
        raise ValueError("NT-Xent needs at least 2 images per batch for negatives")
    _check_finite("projections", projections)
    if (projections.norm(dim=1) == 0).any():
        raise ValueError("zero-norm projection row")
    z = F.normalize(projections, dim=1)
    sim = (z @ z.T) / temperature
    self_mask = torch.eye(two_b, dtype=torch.bool, device=projections.device)
    sim = sim.masked_fill(self_mask, float("-inf"))
    targets = torch.arange(two_b, device=projections.device)
    targets = (targets + b) % two_b
    return F.cross_entropy(sim, targets)


def byol_loss(online_pred: torch.Tensor, target_proj: torch.Tensor) -> torch.Tensor:
    """Mean squared distance between L2-normalized prediction and
    stop-gradient target; one view direction (callers symmetrize)."""
    if online_pred.shape != target_proj.shape:
        raise ValueError(f"shape mismatch {tuple(online_pred.shape)} vs {tuple(target_proj.shape)}")
    if (online_pred.norm(dim=1) == 0).any() or (target_proj.norm(dim=1) == 0).any():
        raise ValueError("zero-norm row")
    p = F.normalize(online_pred, dim=1)
    z = F.normalize(target_proj.detach(), dim=1)
    return ((p - z) ** 2).sum(dim=1).mean()


def simsiam_loss(pred: torch.Tensor, proj: torch.Tensor) -> torch.Tensor:
    """Negative cosine similarity against a stop-gradient projection; one
    view direction (callers symmetrize)."""
    if pred.shape != proj.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(proj.shape)}")
    if (pred.norm(dim=1) == 0).any() or (proj.norm(dim=1) == 0).any():
        raise ValueError("zero-norm row")
    p = F.normalize(pred, dim=1)
    z = F.normalize(proj.detach(), dim=1)
    return -(p * z).sum(dim=1).mean()
