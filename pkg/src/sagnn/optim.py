"""AdamW with a warm-up linear learning-rate schedule."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter
from .errors import ValidationError


@dataclass
class OptimConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.01
    total_steps: int | None = None  # filled in by the trainer when None
    warmup_fraction: float = 0.06

    def __post_init__(self):
        # 0 is allowed as a degenerate no-update configuration
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValidationError("warmup_fraction must be in (0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("betas must be in [0, 1)")
        if self.total_steps is not None and self.total_steps < 1:
            raise ValidationError("total_steps must be >= 1")


def lr_scale(step: int, total_steps: int, warmup_fraction: float) -> float:
    """Linear 0 -> 1 over the warm-up steps, then linear 1 -> 0 at total_steps."""
    warmup = warmup_fraction * total_steps
    if step >= total_steps:
        warnings.warn(f"step {step} is past total_steps={total_steps};"
                      " learning rate clamped to 0")
        return 0.0
    if step <= warmup:
        return step / warmup
    return (total_steps - step) / (total_steps - warmup)


def adamw_step(params, cfg: OptimConfig, global_step: int) -> None:
    """One decoupled-weight-decay update on every parameter with a gradient.

    Uses bias-corrected first/second moments and the scheduled learning rate
    ``learning_rate * lr_scale(global_step)``. Gradients are zeroed at the
    end; parameters appearing more than once (shared weights) update once.
    """
    if cfg.total_steps is None:
        raise ValidationError("OptimConfig.total_steps must be set before stepping")
    scale = lr_scale(global_step, cfg.total_steps, cfg.warmup_fraction)
    lr = cfg.learning_rate * scale
    seen: set[int] = set()
    for p in params:
        if not isinstance(p, Parameter):
            raise ValidationError("adamw_step expects Parameter instances")
        if id(p) in seen:
            continue
        seen.add(id(p))
        if p.grad is None:
            continue
        g = p.grad
        p.step_count += 1
        t = p.step_count
        p.adam_m = cfg.beta1 * p.adam_m + (1.0 - cfg.beta1) * g
        p.adam_v = cfg.beta2 * p.adam_v + (1.0 - cfg.beta2) * (g * g)
        m_hat = p.adam_m / (1.0 - cfg.beta1 ** t)
        v_hat = p.adam_v / (1.0 - cfg.beta2 ** t)
        p.value -= lr * (m_hat / (np.sqrt(v_hat) + cfg.epsilon)
                         + cfg.weight_decay * p.value)
        p.zero_grad()
