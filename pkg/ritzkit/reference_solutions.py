# ritzkit/reference_solutions.py
"""
Reference fields used to validate trained networks.

These evaluators use quadrature and finite differences only; nothing here
goes through the network derivative code.

  - burgers_reference: Cole-Hopf representation of u_t + u u_x = nu u_xx with
    u(0, x) = -sin(pi x), evaluated by Gauss-Hermite quadrature.
  - burgers_crank_nicolson: Newton / Crank-Nicolson finite differences (cross-check).
  - manufactured_linear: separable exact solutions with their sources and boundary data.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .domain import MultiIndex
from .errors import DimensionMismatchError, UnknownExpressionError
from .geometry import Domain
from .operators import BURGERS_NU, LinearOperatorSpec, RobinSpec, check_normals

logger = logging.getLogger(__name__)

HERMITE_LEVELS = (64, 128, 256, 512)
HERMITE_AGREEMENT = 1e-7


# -----------------------------
# Cole-Hopf (Gauss-Hermite)
# -----------------------------

@lru_cache(maxsize=None)
def _hermite(n: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.polynomial.hermite.hermgauss(n)


def _cole_hopf_level(t: np.ndarray, x: np.ndarray, nu: float, n: int) -> np.ndarray:
    z, w = _hermite(n)
    c = np.sqrt(4.0 * nu * t)[:, None]
    y = x[:, None] - c * z[None, :]
    # f(y) = exp(-cos(pi y) / (2 pi nu)), shifted per point to avoid overflow
    expo = -np.cos(np.pi * y) / (2.0 * np.pi * nu)
    expo = expo - expo.max(axis=1, keepdims=True)
    fy = w[None, :] * np.exp(expo)
    num = np.sum(np.sin(np.pi * y) * fy, axis=1)
    den = np.sum(fy, axis=1)
    return -num / den


def burgers_reference(tx, nu: float = BURGERS_NU):
    """u(t, x) for t > 0; node count escalates 64 -> 512 until two levels agree to 1e-7."""
    arr = np.asarray(tx, dtype=np.float64)
    single = arr.ndim == 1
    P = arr.reshape(1, -1) if single else arr
    if P.ndim != 2 or P.shape[1] != 2:
        raise DimensionMismatchError("Burgers reference takes points (t, x)")
    t, x = P[:, 0], P[:, 1]
    if np.any(t <= 0.0):
        raise ValueError("Cole-Hopf reference needs t > 0")

    prev = _cole_hopf_level(t, x, nu, HERMITE_LEVELS[0])
    out = prev.copy()
    pending = np.ones(t.shape[0], dtype=bool)
    for n in HERMITE_LEVELS[1:]:
        cur = _cole_hopf_level(t, x, nu, n)
        out[pending] = cur[pending]
        pending &= np.abs(cur - prev) > HERMITE_AGREEMENT
        if not pending.any():
            break
        prev = cur
    if pending.any():
        logger.debug("Cole-Hopf quadrature did not settle to %.0e at %d point(s)", HERMITE_AGREEMENT, int(pending.sum()))
    return float(out[0]) if single else out


def reference_grid(ts: Sequence[float], xs: Sequence[float], nu: float = BURGERS_NU) -> List[Tuple[float, float, float]]:
    """(t, x, u) rows of the Cole-Hopf field on a tensor grid."""
    T, Xg = np.meshgrid(np.asarray(ts, dtype=np.float64), np.asarray(xs, dtype=np.float64), indexing="ij")
    pts = np.stack([T.reshape(-1), Xg.reshape(-1)], axis=1)
    u = burgers_reference(pts, nu)
    return [(float(a), float(b), float(c)) for (a, b), c in zip(pts, u)]


# -----------------------------
# Crank-Nicolson cross-check
# -----------------------------

@dataclass
class GridSolution:
    x: np.ndarray
    t: float
    u: np.ndarray

    def value(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.u)


def _burgers_rhs(U: np.ndarray, dx: float, nu: float) -> np.ndarray:
    # U includes the two Dirichlet ends
    F = np.zeros_like(U)
    F[1:-1] = -(U[2:] ** 2 - U[:-2] ** 2) / (4.0 * dx) + nu * (U[2:] - 2.0 * U[1:-1] + U[:-2]) / dx ** 2
    return F


def burgers_crank_nicolson(
    nu: float = BURGERS_NU,
    dx: float = 1.0 / 2048,
    dt: float = 1.0 / 4096,
    t_final: float = 0.5,
    newton_tol: float = 1e-12,
    max_newton: int = 20,
) -> GridSolution:
    n_int = int(round(2.0 / dx))
    x = np.linspace(-1.0, 1.0, n_int + 1)
    dx = float(x[1] - x[0])
    U = -np.sin(np.pi * x)
    U[0] = U[-1] = 0.0
    steps = int(round(t_final / dt))
    h = t_final / steps
    k = 0.5 * h

    for _ in range(steps):
        Fn = _burgers_rhs(U, dx, nu)
        V = U.copy()
        for _ in range(max_newton):
            R = (V - U - k * (_burgers_rhs(V, dx, nu) + Fn))[1:-1]
            # tridiagonal jacobian of R over interior unknowns
            lower = -k * (V[:-2] / (2.0 * dx) + nu / dx ** 2)
            diag = np.full(n_int - 1, 1.0 + k * 2.0 * nu / dx ** 2)
            upper = -k * (-V[2:] / (2.0 * dx) + nu / dx ** 2)
            ab = np.zeros((3, n_int - 1))
            ab[0, 1:] = upper[:-1]
            ab[1, :] = diag
            ab[2, :-1] = lower[1:]
            delta = solve_banded((1, 1), ab, -R)
            V[1:-1] += delta
            if float(np.max(np.abs(delta))) < newton_tol:
                break
        U = V
    return GridSolution(x=x, t=float(t_final), u=U)


# -----------------------------
# Manufactured solutions
# -----------------------------

@dataclass(frozen=True)
class Factor:
    """One-dimensional factor with closed-form derivatives of any order."""
    kind: str                      # "one" | "sine" | "exp" | "poly"
    k: float = 1.0                 # sine frequency (times pi) or exponential rate
    coeffs: Tuple[float, ...] = ()

    def derivative(self, x: np.ndarray, n: int) -> np.ndarray:
        if self.kind == "one":
            return np.ones_like(x) if n == 0 else np.zeros_like(x)
        if self.kind == "sine":
            w = self.k * math.pi
            return w ** n * np.sin(w * x + n * math.pi / 2.0)
        if self.kind == "exp":
            return self.k ** n * np.exp(self.k * x)
        c = np.array(self.coeffs, dtype=np.float64)
        for _ in range(n):
            c = np.polynomial.polynomial.polyder(c) if c.size > 1 else np.zeros(1)
        return np.polynomial.polynomial.polyval(x, c)


@dataclass(frozen=True)
class ManufacturedSolution:
    """u*(x) = amplitude * prod_i factors[i](x_i)."""
    expr_id: str
    factors: Tuple[Factor, ...]
    amplitude: float = 1.0

    @property
    def d(self) -> int:
        return len(self.factors)

    def _points(self, x) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        X = arr.reshape(1, -1) if single else arr
        if X.shape[1] != self.d:
            raise DimensionMismatchError(f"'{self.expr_id}' is {self.d}-dimensional")
        return X, single

    def derivative(self, x, xi) -> np.ndarray:
        X, single = self._points(x)
        mi = MultiIndex.of(xi)
        out = np.full(X.shape[0], float(self.amplitude))
        for i, fac in enumerate(self.factors):
            out = out * fac.derivative(X[:, i], mi[i])
        return float(out[0]) if single else out

    def value(self, x):
        return self.derivative(x, MultiIndex.zero(self.d))


def _sine(k: float = 1.0) -> Factor:
    return Factor("sine", k=k)


_TIME_SLAB_IDS = {"heat_mode", "poly_heat"}


def manufactured_solution(expr_id: str, d: int) -> ManufacturedSolution:
    """Shipped ids: zero, heat_mode, sin_product, poly_sin, poly_heat."""
    if expr_id == "zero":
        return ManufacturedSolution(expr_id, tuple(Factor("one") for _ in range(d)), amplitude=0.0)
    if expr_id in _TIME_SLAB_IDS and d != 2:
        raise DimensionMismatchError(f"'{expr_id}' lives on (t, x) with d = 2")
    if expr_id == "heat_mode":
        return ManufacturedSolution(expr_id, (Factor("exp", k=-math.pi ** 2), _sine()))
    if expr_id == "poly_heat":
        return ManufacturedSolution(expr_id, (Factor("poly", coeffs=(1.0, 1.0)), _sine()))
    if expr_id == "sin_product":
        return ManufacturedSolution(expr_id, tuple(_sine() for _ in range(d)))
    if expr_id == "poly_sin":
        if d < 2:
            raise DimensionMismatchError("'poly_sin' needs d >= 2")
        factors = (Factor("poly", coeffs=(0.0, 1.0, -1.0)),) + tuple(_sine() for _ in range(d - 1))
        return ManufacturedSolution(expr_id, factors)
    raise UnknownExpressionError(
        f"unknown manufactured solution '{expr_id}' (zero, heat_mode, sin_product, poly_sin, poly_heat)"
    )


@dataclass
class ManufacturedProblem:
    solution: ManufacturedSolution
    u: Callable
    f: Callable
    g: Callable


def manufactured_linear(
    expr_id: str,
    domain: Domain,
    operator: LinearOperatorSpec,
    robin: RobinSpec = RobinSpec(1.0, 0.0),
) -> ManufacturedProblem:
    """Exact solution u*, source f = L u*, boundary data g = B u*."""
    sol = manufactured_solution(expr_id, domain.d)
    if operator.dim != domain.d:
        raise DimensionMismatchError("operator and domain dimensions differ")

    def u(X, normals=None):
        return sol.value(X)

    def f(X, normals=None):
        out = np.zeros(np.atleast_2d(X).shape[0])
        for term in operator.terms:
            out = out + term.values(np.atleast_2d(X)) * sol.derivative(np.atleast_2d(X), term.xi)
        return out

    def g(X, normals=None):
        X = np.atleast_2d(X)
        out = float(robin.alpha) * sol.value(X)
        if float(robin.beta) != 0.0:
            if normals is None:
                raise ValueError("Robin data with beta != 0 needs boundary normals")
            N = np.atleast_2d(normals)
            check_normals(N)
            for i in range(domain.d):
                out = out + float(robin.beta) * N[:, i] * sol.derivative(X, MultiIndex.unit(domain.d, i))
        return out

    for fn in (u, f, g):
        fn.field_name = f"manufactured:{expr_id}"  # type: ignore[attr-defined]
    return ManufacturedProblem(solution=sol, u=u, f=f, g=g)


# -----------------------------
# Reference fields
# -----------------------------

@dataclass
class ReferenceField:
    """Evaluator behind `compare`: cole_hopf(nu) or manufactured:<id>."""
    kind: str
    nu: float = BURGERS_NU
    expr_id: Optional[str] = None
    d: int = 2

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.kind == "cole_hopf":
            return np.asarray(burgers_reference(X, self.nu))
        return np.asarray(manufactured_solution(self.expr_id or "zero", self.d).value(X))

    @staticmethod
    def parse(spec: str, d: int = 2, nu: float = BURGERS_NU) -> "ReferenceField":
        s = spec.strip()
        if s == "cole_hopf":
            return ReferenceField(kind="cole_hopf", nu=nu, d=2)
        if s.startswith("manufactured:"):
            expr = s.split(":", 1)[1]
            manufactured_solution(expr, d)
            return ReferenceField(kind="manufactured", expr_id=expr, d=d)
        raise UnknownExpressionError(f"unknown reference '{spec}'")
