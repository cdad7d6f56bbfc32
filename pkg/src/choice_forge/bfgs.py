"""BFGS minimizer with backtracking (Armijo) line search."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

FunGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


@dataclass
class BfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    status: str

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if self.grad.size else 0.0


def minimize_bfgs(
    fun_grad: FunGrad,
    x0: np.ndarray,
    max_iter: int = 500,
    grad_tol: float = 1e-6,
    c1: float = 1e-4,
    stop: Callable[[np.ndarray], bool] | None = None,
) -> BfgsResult:
    """Minimize ``f`` given a callable returning ``(f(x), grad f(x))``.

    Converged means ``max|grad| <= grad_tol``. ``stop(x)`` is checked after
    every accepted step and ends the run early (status ``"stopped"``).

    Near the optimum the Armijo decrease can fall below the round-off in
    ``f``; a full step whose change in ``f`` is within that noise is still
    accepted when it shrinks the gradient.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.size
    f, g = fun_grad(x)
    evals = 1

    def initial_h(g):
        # keep the first, unscaled step no longer than one unit per coordinate
        return np.eye(n) / max(1.0, float(np.max(np.abs(g))) if n else 1.0)

    H = initial_h(g)
    first_update = True
    status = "max_iter"

    for it in range(max_iter):
        if np.max(np.abs(g)) <= grad_tol:
            return BfgsResult(x, f, g, it, evals, True, "grad_tol")
        p = -H @ g
        slope = g @ p
        if slope >= 0:
            H = initial_h(g)
            first_update = True
            p = -H @ g
            slope = g @ p

        noise = 8 * np.finfo(float).eps * max(1.0, abs(f))
        t = 1.0
        accepted = False
        while t > 1e-16:
            x_new = x + t * p
            f_new, g_new = fun_grad(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                accepted = True
                break
            if (t == 1.0 and np.isfinite(f_new) and abs(f_new - f) <= noise
                    and np.max(np.abs(g_new)) < np.max(np.abs(g))):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status = "line_search"
            break

        s = x_new - x
        y = g_new - g
        sy = s @ y
        x, f, g = x_new, f_new, g_new
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first_update:
                H = np.eye(n) * (sy / (y @ y))
                first_update = False
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
        if stop is not None and stop(x):
            return BfgsResult(x, f, g, it + 1, evals, False, "stopped")
    else:
        it = max_iter - 1

    converged = bool(np.max(np.abs(g)) <= grad_tol)
    return BfgsResult(x, f, g, it + 1, evals, converged, "grad_tol" if converged else status)
