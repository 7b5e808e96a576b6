"""SGD with momentum and polynomial learning-rate decay.

Update rule per parameter: v <- mu*v - lr*g, p <- p + v, with
lr(t) = base * (1 - t/max_iterations)**power shared across groups and a
per-group base rate (the segmentation output layer and the pose head train
faster than the body).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor
from .errors import ContractViolation


def poly_lr(base, iteration, max_iterations, power=0.9):
    """Polynomially decayed learning rate; equals `base` at iteration 0."""
    if iteration > max_iterations:
        raise ContractViolation(f"iteration {iteration} exceeds max {max_iterations}")
    return base * (1.0 - iteration / max_iterations) ** power


@dataclass
class ParamGroup:
    name: str
    params: list  # of (name, Tensor)
    lr: float


class SgdMomentum:
    """Velocity state for a set of named parameter groups."""

    def __init__(self, groups, momentum=0.9, max_iterations=20000, power=0.9):
        self.groups = list(groups)
        self.momentum = momentum
        self.max_iterations = max_iterations
        self.power = power
        self.iteration = 0
        self.velocity = {}
        for group in self.groups:
            for name, p in group.params:
                self.velocity[name] = np.zeros_like(p.data)

    def lr_factor(self):
        return (1.0 - self.iteration / self.max_iterations) ** self.power

    def step(self, frozen=()):
        """Apply one update; groups named in `frozen` stay bit-identical."""
        if self.iteration >= self.max_iterations:
            raise ContractViolation(
                f"optimizer stepped past max_iterations={self.max_iterations}"
            )
        factor = self.lr_factor()
        for group in self.groups:
            if group.name in frozen:
                continue
            lr = group.lr * factor
            for name, p in group.params:
                if p.grad is None:
                    continue
                v = self.velocity[name]
                v *= self.momentum
                v -= (lr * p.grad).astype(v.dtype, copy=False)
                p.data += v
        self.iteration += 1

    def effective_lrs(self):
        factor = self.lr_factor()
        return {g.name: g.lr * factor for g in self.groups}
