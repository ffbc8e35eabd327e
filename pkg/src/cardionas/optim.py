"""Parameter update rules and the cosine learning-rate schedule.

Both optimizers keep their per-parameter buffers keyed by parameter id so the
whole state can be serialized into a checkpoint and restored bit-exactly.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .autodiff import Parameter
from .errors import StateError

Array = np.ndarray


def cosine_lr(epoch: int, total_epochs: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Cosine annealing from lr_max (epoch 0) to lr_min (last epoch)."""
    if total_epochs < 2:
        return lr_max
    t = epoch / (total_epochs - 1)
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * t))


def clip_grad_norm(parameters: Sequence[Parameter], max_norm: float) -> float:
    """Scale the gradient group down if its joint L2 norm exceeds max_norm."""
    sq = 0.0
    for p in parameters:
        if p.grad is None:
            raise StateError(f"parameter {p.id!r} has no gradient to clip")
        sq += float(np.vdot(p.grad, p.grad))
    total = math.sqrt(sq)
    if total > max_norm:
        scale = max_norm / total
        for p in parameters:
            p.grad *= np.asarray(scale, dtype=p.grad.dtype)
    return total


class MomentumSgd:
    """SGD with classical momentum and L2 weight decay folded into the gradient.

    v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
    """

    def __init__(self, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.step_count = 0
        self.velocity: dict[str, Array] = {}

    def step(self, parameters: Sequence[Parameter]) -> None:
        for p in parameters:
            if p.grad is None:
                raise StateError(f"parameter {p.id!r} has no gradient; run backward first")
            g = p.grad
            if self.weight_decay:
                g = g + np.asarray(self.weight_decay, dtype=p.data.dtype) * p.data
            v = self.velocity.get(p.id)
            if v is None:
                v = np.zeros_like(p.data)
                self.velocity[p.id] = v
            v *= np.asarray(self.momentum, dtype=p.data.dtype)
            v += g
            p.data -= np.asarray(self.lr, dtype=p.data.dtype) * v
        self.step_count += 1

    def state_arrays(self) -> dict[str, Array]:
        return {f"velocity.{k}": v for k, v in self.velocity.items()}

    def load_state_arrays(self, arrays: dict[str, Array]) -> None:
        self.velocity = {k.removeprefix("velocity."): np.array(v)
                         for k, v in arrays.items()}


class AdaptiveMoments:
    """Adam with bias correction; weight decay added to the raw gradient."""

    def __init__(self, lr: float, betas: tuple[float, float] = (0.9, 0.999),
                 weight_decay: float = 0.0, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.step_count = 0
        self.m: dict[str, Array] = {}
        self.v: dict[str, Array] = {}

    def step(self, parameters: Sequence[Parameter]) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p in parameters:
            if p.grad is None:
                raise StateError(f"parameter {p.id!r} has no gradient; run backward first")
            dtype = p.data.dtype
            g = p.grad
            if self.weight_decay:
                g = g + np.asarray(self.weight_decay, dtype=dtype) * p.data
            m = self.m.get(p.id)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
                self.m[p.id], self.v[p.id] = m, v
            else:
                v = self.v[p.id]
            b1 = np.asarray(self.beta1, dtype=dtype)
            b2 = np.asarray(self.beta2, dtype=dtype)
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            mhat = m / np.asarray(bc1, dtype=dtype)
            vhat = v / np.asarray(bc2, dtype=dtype)
            p.data -= np.asarray(self.lr, dtype=dtype) * mhat / (np.sqrt(vhat) + np.asarray(self.eps, dtype=dtype))

    def state_arrays(self) -> dict[str, Array]:
        out = {f"m.{k}": v for k, v in self.m.items()}
        out.update({f"v.{k}": v for k, v in self.v.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, Array]) -> None:
        self.m = {k.removeprefix("m."): np.array(v)
                  for k, v in arrays.items() if k.startswith("m.")}
        self.v = {k.removeprefix("v."): np.array(v)
                  for k, v in arrays.items() if k.startswith("v.")}
