"""One optimization step over a two-view batch.

The gradient only ever touches student-side parameters; teacher/target
parameters are frozen and move solely through the post-step EMA.  A
non-finite loss aborts the step before any state is touched.
"""

from __future__ import annotations

import math

import torch

from ..errors import NonFiniteLossError
from .methods import FrameworkOutput, SSLMethod


def train_step(method: SSLMethod, optimizer: torch.optim.Optimizer,
               views: tuple[torch.Tensor, torch.Tensor],
               lr: float | None = None,
               weight_decay: float | None = None) -> FrameworkOutput:
    """Run one step: loss on the view pair, backprop through the student,
    optimizer step, then the method's post-step updates.

    ``lr``/``weight_decay`` override the optimizer's current schedule values
    for this step (weight decay only on groups that opted in via the
    ``use_weight_decay`` group flag).
    """
    v1, v2 = views
    for group in optimizer.param_groups:
        if lr is not None:
            group["lr"] = lr
        if weight_decay is not None and group.get("use_weight_decay", True):
            group["weight_decay"] = weight_decay

    loss, diagnostics = method.loss_on_views(v1, v2)
    loss_value = float(loss.detach())
    if not math.isfinite(loss_value):
        raise NonFiniteLossError(f"non-finite loss ({loss_value}) at step {int(method.step)}",
                                 diagnostics={"loss": loss_value, **diagnostics})

    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    method.post_step()
    with torch.no_grad():
        method.step += 1

    diagnostics = {"loss": loss_value, **diagnostics}
    return FrameworkOutput(loss=loss_value, diagnostics=diagnostics)
