"""Adaptive composite Gauss-Legendre quadrature on finite intervals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureError

_NODES_15, _WEIGHTS_15 = np.polynomial.legendre.leggauss(15)


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    n_panels: int
    n_evals: int
    min_node: float
    max_node: float


def _panel(f: Callable[[float], float], a: float, b: float) -> float:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return half * sum(w * f(mid + half * x) for x, w in zip(_NODES_15, _WEIGHTS_15))


def adaptive_quadrature(
    f: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float,
    *,
    split_points: Sequence[float] = (),
    max_panels: int = 4096,
    abs_floor: float = 1e-300,
) -> QuadratureResult:
    """Integrate f over [a, b] by bisecting 15-point panels until each panel's
    bisection defect is below its width-share of the relative tolerance.

    `split_points` force panel boundaries (use them at integrand kinks).
    """
    if b <= a:
        raise QuadratureError(f"empty interval [{a}, {b}]")
    bounds = sorted({a, b, *(p for p in split_points if a < p < b)})
    evals = 0
    min_node, max_node = b, a

    def feval(x: float) -> float:
        nonlocal evals, min_node, max_node
        evals += 1
        min_node = min(min_node, x)
        max_node = max(max_node, x)
        return f(x)

    # First pass for a coarse magnitude to scale the acceptance threshold.
    coarse = sum(_panel(feval, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]))
    scale = max(abs(coarse), abs_floor)

    total = 0.0
    err_total = 0.0
    n_panels = 0
    stack = list(zip(bounds[:-1], bounds[1:]))
    while stack:
        lo, hi = stack.pop()
        if n_panels + len(stack) > max_panels:
            raise QuadratureError(
                f"exceeded {max_panels} panels at rel_tol={rel_tol}; "
                f"partial value {total + coarse:.6g}"
            )
        whole = _panel(feval, lo, hi)
        mid = 0.5 * (lo + hi)
        left = _panel(feval, lo, mid)
        right = _panel(feval, mid, hi)
        defect = abs(whole - (left + right))
        budget = rel_tol * scale * (hi - lo) / (b - a)
        if defect <= max(budget, abs_floor):
            total += left + right
            err_total += defect
            n_panels += 1
        else:
            stack.append((lo, mid))
            stack.append((mid, hi))
    return QuadratureResult(total, err_total, n_panels, evals, min_node, max_node)
