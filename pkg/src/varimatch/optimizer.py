"""L-BFGS with Armijo backtracking for the momenta optimization.

Deliberately small and deterministic: fixed summation orders, no randomized
restarts, and a report that keeps the accepted objective values (which are
non-increasing by construction of the line search). On a failed line search
the memory is dropped and one steepest-descent attempt is made before giving
up.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .kernels import ConfigError


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 200
    history: int = 10
    armijo: float = 1e-4
    backtrack: float = 0.5
    grad_tol: float = 1e-8
    rel_obj_tol: float = 1e-9
    max_backtracks: int = 40

    def __post_init__(self):
        if self.max_iters < 1 or self.history < 1 or self.max_backtracks < 1:
            raise ConfigError("iteration counts must be positive")
        if not (0 < self.backtrack < 1) or not (0 < self.armijo < 1):
            raise ConfigError("armijo and backtrack factors must lie in (0, 1)")
        if self.grad_tol <= 0 or self.rel_obj_tol <= 0:
            raise ConfigError("tolerances must be positive")


@dataclass
class OptimReport:
    iterations: int
    objective_history: list = field(default_factory=list)
    final_grad_norm: float = float("nan")
    termination: str = ""


def _two_loop(grad, s_list, y_list):
    """L-BFGS two-loop recursion for the search direction."""
    q = grad.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / np.vdot(y, s)
        alpha = rho * np.vdot(s, q)
        q -= alpha * y
        alphas.append((rho, alpha))
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= np.vdot(s, y) / np.vdot(y, y)
    for (s, y), (rho, alpha) in zip(zip(s_list, y_list), reversed(alphas)):
        beta = rho * np.vdot(y, q)
        q += (alpha - beta) * s
    return -q


def _line_search(fun_grad, x, f, g, direction, cfg):
    """Backtracking Armijo search. Returns (x1, f1, g1, t) or None.

    If the unit step was accepted outright and still decreases at the full
    linear rate, the direction is badly under-scaled; the step is then
    doubled while the Armijo bound keeps holding and the value keeps
    improving.
    """
    slope = float(np.vdot(g, direction))
    if slope >= 0:
        return None
    t = 1.0
    for _ in range(cfg.max_backtracks):
        x1 = x + t * direction
        f1, g1 = fun_grad(x1)
        if np.isfinite(f1) and f1 <= f + cfg.armijo * t * slope:
            break
        t *= cfg.backtrack
    else:
        return None
    if t == 1.0 and f1 <= f + slope:
        while t < 2.0**20:
            x2 = x + 2.0 * t * direction
            f2, g2 = fun_grad(x2)
            if np.isfinite(f2) and f2 <= f + cfg.armijo * 2.0 * t * slope and f2 < f1:
                x1, f1, g1, t = x2, f2, g2, 2.0 * t
            else:
                break
    return x1, f1, g1, t


def minimize(
    initial: np.ndarray,
    fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
    cfg: OptimizerConfig = OptimizerConfig(),
    callback: Callable[[np.ndarray, float], None] | None = None,
):
    """Minimize a smooth function from ``initial``; returns (best x, report).

    ``fun_grad`` maps an array to (value, gradient of the same shape).
    ``callback`` is invoked on every accepted iterate, the initial one
    included.
    """
    x = np.array(initial, dtype=float)
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the initial point")
    report = OptimReport(iterations=0, objective_history=[f])
    if callback is not None:
        callback(x, f)
    best_x, best_f = x.copy(), f

    s_list: list[np.ndarray] = []
    y_list: list[np.ndarray] = []
    grad_norm = float(np.linalg.norm(g))
    if grad_norm < cfg.grad_tol:
        report.final_grad_norm = grad_norm
        report.termination = "converged"
        return best_x, report

    stale = 0
    for iteration in range(1, cfg.max_iters + 1):
        direction = _two_loop(g, s_list, y_list)
        step = _line_search(fun_grad, x, f, g, direction, cfg)
        if step is None:
            # quasi-Newton direction failed: retry once along steepest descent
            s_list.clear()
            y_list.clear()
            step = _line_search(fun_grad, x, f, g, -g, cfg)
            if step is None:
                report.final_grad_norm = float(np.linalg.norm(g))
                report.termination = "line_search_failure"
                return best_x, report
        x1, f1, g1, _ = step

        s, y = x1 - x, g1 - g
        if np.vdot(s, y) > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            stale = 0
            if len(s_list) > cfg.history:
                s_list.pop(0)
                y_list.pop(0)
        else:
            # steps without usable curvature leave the memory increasingly
            # wrong; drop it after a few in a row
            stale += 1
            if stale >= 3:
                s_list.clear()
                y_list.clear()
                stale = 0

        decrease = f - f1
        x, f, g = x1, f1, g1
        report.iterations = iteration
        report.objective_history.append(f)
        if callback is not None:
            callback(x, f)
        if f < best_f:
            best_x, best_f = x.copy(), f

        grad_norm = float(np.linalg.norm(g))
        if grad_norm < cfg.grad_tol or decrease <= cfg.rel_obj_tol * max(abs(f) , 1e-30):
            report.final_grad_norm = grad_norm
            report.termination = "converged"
            return best_x, report

    report.final_grad_norm = grad_norm
    report.termination = "max_iters"
    return best_x, report
