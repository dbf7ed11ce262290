"""Independent numerical oracles shared across test modules.

The finite-difference gradient here is deliberately dumb: central
differences on the scalar loss, one coordinate at a time, with no reuse
of the analytic machinery under test.
"""
from __future__ import annotations

import numpy as np

from sagefed.model import ParameterVector


def finite_difference_grad(loss_fn, params: ParameterVector, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of loss_fn over a flat parameter vector."""
    base = params.values
    grad = np.zeros_like(base)
    for j in range(base.size):
        bumped = base.copy()
        bumped[j] = base[j] + eps
        up = loss_fn(ParameterVector(bumped, params.layout))
        bumped[j] = base[j] - eps
        down = loss_fn(ParameterVector(bumped, params.layout))
        grad[j] = (up - down) / (2.0 * eps)
    return grad


def max_grad_error(loss_fn, params: ParameterVector, analytic: np.ndarray, eps: float = 1e-6) -> float:
    fd = finite_difference_grad(loss_fn, params, eps)
    return float(np.max(np.abs(fd - analytic)))
