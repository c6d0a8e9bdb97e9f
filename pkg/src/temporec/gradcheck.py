"""Central finite-difference verification of analytic gradients.

The numeric side only ever calls the loss function forward, so it stays
independent of the tape machinery it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckReport:
    tolerance: float
    max_error: dict[str, float] = field(default_factory=dict)
    passed: bool = True

    def worst(self) -> tuple[str, float]:
        name = max(self.max_error, key=self.max_error.get)
        return name, self.max_error[name]

    def format(self) -> str:
        lines = []
        for name, err in sorted(self.max_error.items()):
            status = "ok" if err <= self.tolerance else "FAIL"
            lines.append(f"{status:4s} {name:40s} max_err={err:.3e}")
        lines.append(f"=> {'PASS' if self.passed else 'FAIL'} "
                     f"(tolerance {self.tolerance:g})")
        return "\n".join(lines)


def _normalized_error(analytic: float, numeric: float) -> float:
    # relative for O(1)+ gradients, absolute below unit scale
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def grad_check(f, params: list[Tensor], step: float = 1e-5,
               tolerance: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must be deterministic (dropout off, fixed streams) and the
    parameters must be held in 64-bit precision; both are verified.
    """
    if step <= 0:
        raise ValueError(f"grad_check: step must be positive, got {step}")
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError(
                f"grad_check: parameter {p.name or '<unnamed>'} must be float64, "
                f"got {p.data.dtype}")
        if not p.requires_grad:
            raise ValueError(f"grad_check: {p.name or '<unnamed>'} is frozen")

    y0 = float(f().data.reshape(()))
    y1 = float(f().data.reshape(()))
    if y0 != y1:
        raise ValueError(
            f"grad_check: f is not deterministic ({y0!r} != {y1!r})")

    for p in params:
        p.zero_grad()
    with Tape():
        loss = f()
        backward(loss)
    analytic = {id(p): p.grad.copy() for p in params}

    report = GradCheckReport(tolerance=tolerance)
    for k, p in enumerate(params):
        name = p.name or f"param{k}"
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(f().data.reshape(()))
            flat[i] = orig - step
            f_minus = float(f().data.reshape(()))
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = _normalized_error(analytic[id(p)].reshape(-1)[i], numeric)
            worst = max(worst, err)
        report.max_error[name] = worst
        if worst > tolerance:
            report.passed = False
    return report
