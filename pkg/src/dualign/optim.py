"""Parameter initialization and the Adam optimizer."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .autodiff import Tensor


def xavier_init(rows: int, cols: int, seed) -> Tensor:
    """Uniform Xavier/Glorot draw in [-b, b] with b = sqrt(6 / (rows + cols)).

    `seed` may be an int or an existing numpy Generator (so a whole model can
    be drawn from one stream in a fixed order).
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"xavier_init: dimensions must be >= 1, got {rows}x{cols}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


class Adam:
    """Bias-corrected Adam over a fixed dict of named parameters.

    step() applies one update and zeroes all gradients afterwards; the step
    counter increases by exactly one per call.
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 5e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in self.params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in self.params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                raise ValueError(f"adam step: missing gradient on parameter {name!r}")
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        self.zero_grad()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
