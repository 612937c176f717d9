"""AdamW with decoupled weight decay and a cosine learning-rate schedule."""

from __future__ import annotations

import numpy as np


def cosine_lr(step, total_steps, peak_lr=0.001):
    """peak_lr * 0.5 * (1 + cos(pi * step / total_steps)); lr(0) == peak_lr."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return peak_lr * 0.5 * (1.0 + np.cos(np.pi * step / total_steps))


def adamw_step(param, grad, state, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
    """One AdamW update on a raw array; mutates and returns (param, state).

    state is (m, v, t); weight decay is decoupled (applied to the parameter
    directly, never folded into the moments).
    """
    b1, b2 = betas
    m, v, t = state
    t += 1
    m = b1 * m + (1.0 - b1) * grad
    v = b2 * v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    param = param - lr * weight_decay * param - lr * m_hat / (np.sqrt(v_hat) + eps)
    return param, (m, v, t)


class AdamW:
    def __init__(self, named_params, lr=0.001, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01):
        # accepts [(name, Tensor)] so freeze audits can inspect exactly who is trained
        self.named_params = list(named_params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = {
            name: (np.zeros_like(t.data), np.zeros_like(t.data), 0)
            for name, t in self.named_params
        }

    def parameter_names(self):
        return [name for name, _ in self.named_params]

    def zero_grad(self):
        for _, t in self.named_params:
            t.grad = None

    def step(self, lr=None):
        lr = self.lr if lr is None else lr
        for name, t in self.named_params:
            if t.grad is None:
                continue
            t.data, self.state[name] = adamw_step(
                t.data, t.grad, self.state[name], lr,
                betas=self.betas, eps=self.eps, weight_decay=self.weight_decay,
            )
