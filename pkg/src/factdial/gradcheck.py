"""Numerical gradient checking via central differences.

Compares tape gradients against finite differences coordinate by
coordinate. Coordinates sitting on a kink (maxout argmax switches,
exact ties) are detected by disagreement between the one-sided
differences and reported separately instead of counting as failures.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tape, Tensor


@dataclass
class GradCheckReport:
    checked: int = 0
    max_rel_err: float = 0.0
    worst: tuple[str, tuple] | None = None
    nonsmooth: list[tuple[str, tuple]] = field(default_factory=list)

    def ok(self, threshold: float = 1e-4) -> bool:
        return self.max_rel_err < threshold


def _rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-4)


def check_gradients(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    max_coords_per_param: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Check d f / d p for every (sampled) coordinate of every param.

    f must be a deterministic scalar-valued closure over params (re-seed
    any internal randomness on every call). Perturbs param.data in place
    and restores it.
    """
    for p in params.values():
        p.zero_grad()
    with Tape() as tape:
        loss = f()
        if loss.size != 1:
            raise ValueError("gradcheck: f must return a scalar")
        tape.backward(loss)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    report = GradCheckReport()
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = f().item()
            flat[i] = orig - eps
            f_minus = f().item()
            flat[i] = orig
            f_base = f().item()

            fwd = (f_plus - f_base) / eps
            bwd = (f_base - f_minus) / eps
            if abs(fwd - bwd) > 1e-2 * max(1.0, abs(fwd), abs(bwd)):
                idx = np.unravel_index(i, p.data.shape)
                report.nonsmooth.append((name, tuple(int(k) for k in idx)))
                continue

            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic[name].reshape(-1)[i]
            rel = _rel_err(float(a), numeric)
            report.checked += 1
            if rel > report.max_rel_err:
                report.max_rel_err = rel
                idx = np.unravel_index(i, p.data.shape)
                report.worst = (name, tuple(int(k) for k in idx))
    return report
