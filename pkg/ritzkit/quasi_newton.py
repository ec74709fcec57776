# ritzkit/quasi_newton.py
"""
Limited-memory BFGS with Armijo backtracking.

Used as the inner solver of the implicit gradient descent step; the
objective is a callable returning (value, gradient) for a flat vector.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

ValueAndGrad = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class LbfgsOptions:
    max_iters: int = 10
    grad_tol: float = 1e-8
    memory: int = 10
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30

    def to_dict(self):
        return {
            "max_iters": int(self.max_iters),
            "grad_tol": float(self.grad_tol),
            "memory": int(self.memory),
            "armijo": float(self.armijo),
            "shrink": float(self.shrink),
            "max_backtracks": int(self.max_backtracks),
        }


@dataclass
class LbfgsResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    iterations: int
    converged: bool     # |grad| <= grad_tol at the returned point
    improved: bool      # at least one accepted step (or converged at the start)
    evaluations: int


def _two_loop(g: np.ndarray, pairs: Deque[Tuple[np.ndarray, np.ndarray, float]]) -> np.ndarray:
    """H_k g by the standard two-loop recursion; pairs hold (s, y, 1/(y.s)), oldest first."""
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * float(s @ q)
        q -= alpha * y
        alphas.append(alpha)
    s, y, _ = pairs[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * float(y @ q)
        q += (alpha - beta) * s
    return q


def lbfgs_minimize(
    fun: ValueAndGrad,
    x0: np.ndarray,
    options: Optional[LbfgsOptions] = None,
    start: Optional[Tuple[float, np.ndarray]] = None,
) -> LbfgsResult:
    opts = options or LbfgsOptions()
    x = np.array(x0, dtype=np.float64).reshape(-1)
    if start is None:
        f, g = fun(x)
        evals = 1
    else:
        f, g = start
        evals = 0
    g = np.asarray(g, dtype=np.float64)
    pairs: Deque[Tuple[np.ndarray, np.ndarray, float]] = deque(maxlen=max(1, int(opts.memory)))

    if float(np.linalg.norm(g)) <= opts.grad_tol:
        return LbfgsResult(x=x, f=float(f), g=g, iterations=0, converged=True, improved=True, evaluations=evals)

    improved = False
    it = 0
    for it in range(1, int(opts.max_iters) + 1):
        if pairs:
            p = -_two_loop(g, pairs)
            step = 1.0
        else:
            p = -g
            step = min(1.0, 1.0 / float(np.linalg.norm(g)))
        slope = float(g @ p)
        if not slope < 0.0:
            # stale curvature; restart from steepest descent
            pairs.clear()
            p = -g
            slope = float(g @ p)
            step = min(1.0, 1.0 / float(np.linalg.norm(g)))

        accepted = False
        for _ in range(int(opts.max_backtracks) + 1):
            x_new = x + step * p
            f_new, g_new = fun(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + opts.armijo * step * slope:
                accepted = True
                break
            step *= opts.shrink

        if not accepted:
            logger.debug("line search found no decrease after %d backtracks", opts.max_backtracks)
            it -= 1
            break

        g_new = np.asarray(g_new, dtype=np.float64)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, float(f_new), g_new
        improved = True
        if float(np.linalg.norm(g)) <= opts.grad_tol:
            return LbfgsResult(x=x, f=f, g=g, iterations=it, converged=True, improved=True, evaluations=evals)

    return LbfgsResult(
        x=x,
        f=float(f),
        g=g,
        iterations=max(it, 0),
        converged=float(np.linalg.norm(g)) <= opts.grad_tol,
        improved=improved,
        evaluations=evals,
    )
