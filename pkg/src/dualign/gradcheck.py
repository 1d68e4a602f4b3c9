"""Analytic-vs-numeric gradient comparison for recorded computations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward


@dataclass
class GradCheckReport:
    """Max relative error per parameter between analytic and central FD grads."""

    step: float
    tolerance: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_err(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.per_param.items() if v > self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.failures

    def __str__(self) -> str:
        lines = [f"grad_check step={self.step:g} tol={self.tolerance:g}"]
        for k, v in sorted(self.per_param.items()):
            mark = "ok" if v <= self.tolerance else "FAIL"
            lines.append(f"  {k}: max_rel_err={v:.3e} {mark}")
        return "\n".join(lines)


def grad_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients of the scalar `f()` against central differences.

    `f` must be a deterministic closure over `params` returning a 1x1 tensor.
    The report flags failures rather than raising. Per parameter, the error
    is the largest elementwise discrepancy measured against that parameter's
    gradient scale (max-norm); this keeps the check meaningful on elements
    whose true gradient sits below the finite-difference noise floor.
    """
    for p in params.values():
        p.zero_grad()
    backward(f())
    analytic = {
        k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for k, p in params.items()
    }

    report = GradCheckReport(step=step, tolerance=tolerance)
    for name, p in params.items():
        numeric = np.zeros_like(p.data)
        flat = p.data.ravel()
        num_flat = numeric.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = f().item()
            flat[i] = orig - step
            f_minus = f().item()
            flat[i] = orig
            num_flat[i] = (f_plus - f_minus) / (2.0 * step)
        a = analytic[name]
        scale = max(np.abs(a).max(), np.abs(numeric).max(), 1e-8) if a.size else 1.0
        report.per_param[name] = float(np.abs(a - numeric).max() / scale) if a.size else 0.0

    for p in params.values():
        p.zero_grad()
    return report
