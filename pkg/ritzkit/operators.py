# ritzkit/operators.py
"""
Differential operators applied to the network (or to the cutoff ansatz eta*u).

Every operator exists in two forms:
  - a point-wise function taking (params, x) and returning values;
  - a *_from_jet function taking precomputed derivative fields (and their
    jacobians) which the loss module uses to assemble residual gradients.
"""
from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .domain import MultiIndex, NetworkParams, all_indices_up_to
from .errors import (
    DerivativeOrderError,
    DimensionMismatchError,
    NonUnitNormalError,
    ReactionAuditError,
    UnknownExpressionError,
)
from .net_core import MAX_DERIVATIVE_ORDER, Jet, network_jet

ScalarField = Union[float, Callable[..., np.ndarray]]

BURGERS_NU = 0.01 / math.pi
GRADIENT_SINGULARITY_EPS = 1e-10


# -----------------------------
# Scalar fields (coefficients, sources, boundary data)
# -----------------------------

def _takes_normals(fld: Callable) -> bool:
    """True when fld accepts a second positional argument (the boundary normals)."""
    try:
        params = inspect.signature(fld).parameters.values()
    except (TypeError, ValueError):
        return False
    positional = 0
    for p in params:
        if p.kind == inspect.Parameter.VAR_POSITIONAL:
            return True
        if p.kind in (inspect.Parameter.POSITIONAL_ONLY, inspect.Parameter.POSITIONAL_OR_KEYWORD):
            positional += 1
    return positional >= 2


def field_values(fld: ScalarField, X: np.ndarray, normals: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Evaluates a constant or callable field at the rows of X.

    Callables are called as fld(X), or as fld(X, normals) on the boundary when
    their signature takes a second positional argument.
    """
    n = X.shape[0]
    if fld is None:
        return np.zeros(n)
    if callable(fld):
        out = fld(X, normals) if normals is not None and _takes_normals(fld) else fld(X)
        out = np.asarray(out, dtype=np.float64)
        if out.ndim == 0:
            return np.full(n, float(out))
        return out.reshape(n)
    return np.full(n, float(fld))


def _zero_field(X, normals=None):
    return np.zeros(X.shape[0])


def _one_field(X, normals=None):
    return np.ones(X.shape[0])


def _neg_sin_pi_x(X, normals=None):
    # x is the last coordinate ((t, x) on time slabs)
    return -np.sin(np.pi * X[:, -1])


BUILTIN_FIELDS: Dict[str, Callable] = {
    "zero": _zero_field,
    "one": _one_field,
    "neg_sin_pi_x": _neg_sin_pi_x,
}


def builtin_field(spec) -> ScalarField:
    """Resolves a field given as a number or a built-in name."""
    if isinstance(spec, (int, float)):
        return float(spec)
    name = str(spec).strip()
    if name in BUILTIN_FIELDS:
        fn = BUILTIN_FIELDS[name]
        fn.field_name = name  # type: ignore[attr-defined]
        return fn
    try:
        return float(name)
    except ValueError:
        raise UnknownExpressionError(f"unknown field '{name}'. Built-ins: {sorted(BUILTIN_FIELDS)}")


def field_to_json(fld: ScalarField):
    if fld is None:
        return "zero"
    if callable(fld):
        return getattr(fld, "field_name", getattr(fld, "__name__", "callable"))
    return float(fld)


# -----------------------------
# Linear operators
# -----------------------------

@dataclass(frozen=True)
class LinearTerm:
    xi: MultiIndex
    coeff: ScalarField = 1.0

    def __post_init__(self):
        object.__setattr__(self, "xi", MultiIndex.of(self.xi))

    def values(self, X: np.ndarray) -> np.ndarray:
        return field_values(self.coeff, X)

    def is_zero(self) -> bool:
        return not callable(self.coeff) and float(self.coeff) == 0.0


@dataclass(frozen=True)
class LinearOperatorSpec:
    """
    L u = sum_xi c_xi(x) d^xi u with a unique strictly maximal-order term.

    Callable coefficients are assumed bounded and not identically zero.
    """
    terms: Tuple[LinearTerm, ...]

    def __post_init__(self):
        terms = tuple(t if isinstance(t, LinearTerm) else LinearTerm(*t) for t in self.terms)
        terms = tuple(t for t in terms if not t.is_zero())
        if not terms:
            raise ValueError("linear operator needs at least one non-zero term")
        dims = {t.xi.dim for t in terms}
        if len(dims) != 1:
            raise ValueError("all multi-indices of an operator must share one dimension")
        top = max(t.xi.order for t in terms)
        leaders = [t for t in terms if t.xi.order == top]
        if len(leaders) != 1:
            raise ValueError(
                f"operator is not admissible: {len(leaders)} terms share the maximal order {top}"
            )
        object.__setattr__(self, "terms", terms)

    @property
    def leading(self) -> MultiIndex:
        return max(self.terms, key=lambda t: t.xi.order).xi

    @property
    def dim(self) -> int:
        return self.terms[0].xi.dim

    @property
    def order(self) -> int:
        return self.leading.order

    def xis(self) -> List[MultiIndex]:
        return [t.xi for t in self.terms]

    def to_dict(self) -> Dict:
        return {
            "kind": "linear",
            "terms": [{"xi": t.xi.to_list(), "coeff": field_to_json(t.coeff)} for t in self.terms],
        }

    @staticmethod
    def from_dict(d: Dict) -> "LinearOperatorSpec":
        terms = []
        for t in d.get("terms") or []:
            terms.append(LinearTerm(xi=MultiIndex.of(t["xi"]), coeff=builtin_field(t.get("coeff", 1.0))))
        return LinearOperatorSpec(terms=tuple(terms))


def identity_operator(d: int) -> LinearOperatorSpec:
    return LinearOperatorSpec(terms=(LinearTerm(MultiIndex.zero(d), 1.0),))


def laplacian_operator(d: int, sign: float = 1.0) -> LinearOperatorSpec:
    """sign * sum_i d_ii. Not admissible for d > 1 (several top-order terms)."""
    terms = tuple(LinearTerm(MultiIndex.unit(d, i, 2), float(sign)) for i in range(d))
    return _unchecked_operator(terms)


def heat_operator(kappa: float = 1.0) -> LinearOperatorSpec:
    """d_t - kappa d_xx on (t, x)."""
    return LinearOperatorSpec(terms=(
        LinearTerm(MultiIndex((1, 0)), 1.0),
        LinearTerm(MultiIndex((0, 2)), -float(kappa)),
    ))


def advection_diffusion_operator(c: float, kappa: float) -> LinearOperatorSpec:
    """d_t + c d_x - kappa d_xx on (t, x)."""
    return LinearOperatorSpec(terms=(
        LinearTerm(MultiIndex((1, 0)), 1.0),
        LinearTerm(MultiIndex((0, 1)), float(c)),
        LinearTerm(MultiIndex((0, 2)), -float(kappa)),
    ))


def _unchecked_operator(terms: Tuple[LinearTerm, ...]) -> LinearOperatorSpec:
    op = object.__new__(LinearOperatorSpec)
    object.__setattr__(op, "terms", terms)
    return op


# -----------------------------
# Robin boundary operator
# -----------------------------

@dataclass(frozen=True)
class RobinSpec:
    """B u = alpha * u + beta * du/dn."""
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if float(self.alpha) == 0.0 and float(self.beta) == 0.0:
            raise ValueError("Robin operator needs (alpha, beta) != (0, 0)")

    def to_dict(self) -> Dict:
        return {"alpha": float(self.alpha), "beta": float(self.beta)}

    @staticmethod
    def from_dict(d: Dict) -> "RobinSpec":
        return RobinSpec(alpha=float(d.get("alpha", 1.0)), beta=float(d.get("beta", 0.0)))


# -----------------------------
# Nonlinear operators and energies
# -----------------------------

@dataclass(frozen=True)
class Reaction:
    """Lower-order term h(u) with its derivative; h(u)*u >= 0 is audited at evaluation."""
    name: str
    h: Callable[[np.ndarray], np.ndarray]
    dh: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if abs(float(self.h(np.zeros(1))[0])) > 1e-14:
            raise ValueError(f"reaction '{self.name}' must satisfy h(0) = 0")

    def audit(self, u: np.ndarray) -> np.ndarray:
        hu = self.h(u)
        bad = hu * u < 0.0
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ReactionAuditError(
                f"reaction '{self.name}' violates h(u)*u >= 0 at u={u[i]!r} (h={hu[i]!r})"
            )
        return hu


def reaction_zero() -> Reaction:
    return Reaction("zero", lambda u: np.zeros_like(u), lambda u: np.zeros_like(u))


def reaction_cubic() -> Reaction:
    return Reaction("cubic", lambda u: u ** 3, lambda u: 3.0 * u ** 2)


def reaction_linear_damping(c: float = 1.0) -> Reaction:
    if c < 0:
        raise ValueError("linear damping needs c >= 0")
    return Reaction(f"linear_damping:{c!r}", lambda u: c * u, lambda u: np.full_like(u, c))


def builtin_reaction(name: str) -> Reaction:
    name = (name or "zero").strip()
    if name == "zero":
        return reaction_zero()
    if name == "cubic":
        return reaction_cubic()
    if name.startswith("linear_damping"):
        _, _, c = name.partition(":")
        return reaction_linear_damping(float(c) if c else 1.0)
    raise UnknownExpressionError(f"unknown reaction '{name}' (zero, cubic, linear_damping[:c])")


NONLINEAR_KINDS = ("burgers", "p_laplace", "quasilinear")


@dataclass(frozen=True)
class NonlinearOperatorSpec:
    """
    kind:
      burgers      u_t + u u_x - nu u_xx                     (d = 2, (t, x))
      p_laplace    -div(|grad u|^{p-2} grad u) + q u + h(u)   (p >= 2)
      quasilinear  -div((1 + u^2) grad u) + q u + h(u)
    """
    kind: str
    nu: float = BURGERS_NU
    p: float = 2.0
    q: ScalarField = 0.0
    reaction: Reaction = field(default_factory=reaction_zero)

    def __post_init__(self):
        if self.kind not in NONLINEAR_KINDS:
            raise ValueError(f"unknown nonlinear operator kind '{self.kind}'")
        if self.kind == "p_laplace" and float(self.p) < 2.0:
            raise ValueError(f"p-Laplace operator needs p >= 2, got {self.p}")

    def q_values(self, X: np.ndarray) -> np.ndarray:
        q = field_values(self.q, X)
        if np.any(q < 0.0):
            raise ReactionAuditError("coefficient q(x) must be >= 0 on every sampled point")
        return q

    def to_dict(self) -> Dict:
        if self.kind == "burgers":
            return {"kind": "burgers", "nu": float(self.nu)}
        out = {"kind": self.kind, "q": field_to_json(self.q), "h": self.reaction.name}
        if self.kind == "p_laplace":
            out["p"] = float(self.p)
        return out

    @staticmethod
    def from_dict(d: Dict) -> "NonlinearOperatorSpec":
        kind = str(d["kind"])
        if kind == "burgers":
            return NonlinearOperatorSpec(kind="burgers", nu=float(d.get("nu", BURGERS_NU)))
        return NonlinearOperatorSpec(
            kind=kind,
            p=float(d.get("p", 2.0)),
            q=builtin_field(d.get("q", 0.0)),
            reaction=builtin_reaction(str(d.get("h", "zero"))),
        )


ENERGY_KINDS = ("p_laplace", "allen_cahn")


@dataclass(frozen=True)
class EnergySpec:
    """
    Ritz energy densities:
      p_laplace   (1/p)|grad u|^p - f u
      allen_cahn  (eps^2/2)|grad u|^2 + (u^2 - 1)^2 / 4
    """
    kind: str
    p: float = 2.0
    f: ScalarField = 0.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.kind not in ENERGY_KINDS:
            raise ValueError(f"unknown energy kind '{self.kind}'")
        if self.kind == "p_laplace" and float(self.p) < 2.0:
            raise ValueError("p-Laplace energy needs p >= 2")
        if self.kind == "allen_cahn" and float(self.epsilon) <= 0.0:
            raise ValueError("Allen-Cahn energy needs epsilon > 0")

    def to_dict(self) -> Dict:
        if self.kind == "p_laplace":
            return {"kind": "p_laplace", "p": float(self.p), "f": field_to_json(self.f)}
        return {"kind": "allen_cahn", "epsilon": float(self.epsilon)}

    @staticmethod
    def from_dict(d: Dict) -> "EnergySpec":
        kind = str(d["kind"])
        if kind == "p_laplace":
            return EnergySpec(kind=kind, p=float(d.get("p", 2.0)), f=builtin_field(d.get("f", 0.0)))
        return EnergySpec(kind=kind, epsilon=float(d.get("epsilon", 0.1)))


# -----------------------------
# Cutoff function
# -----------------------------

# smoothstep polynomials S(s) on [0, 1], ascending coefficients
_SMOOTHSTEPS = {
    2: (0.0, 0.0, 0.0, 10.0, -15.0, 6.0),
    3: (0.0, 0.0, 0.0, 0.0, 35.0, -84.0, 70.0, -20.0),
}


@dataclass(frozen=True)
class CutoffSpec:
    """
    eta(x) = prod_i rho_i(x_i) on the box [lo, hi].

    rho_i ramps from 0 on each face to 1 over a margin delta_i = margin_fraction * side_i
    using a smoothstep polynomial (quintic for smoothness 2, septic for 3). The plateau U
    is the delta-inset box.
    """
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    margin_fraction: float = 0.1
    smoothness: int = 2

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("cutoff box needs matching non-empty lo/hi")
        if any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("cutoff box needs lo < hi componentwise")
        if not 0.0 < float(self.margin_fraction) <= 0.5:
            raise ValueError("margin_fraction must lie in (0, 0.5]")
        if int(self.smoothness) not in _SMOOTHSTEPS:
            raise ValueError(f"supported smoothness orders: {sorted(_SMOOTHSTEPS)}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def margins(self) -> np.ndarray:
        return float(self.margin_fraction) * (np.array(self.hi) - np.array(self.lo))

    def plateau(self) -> Tuple[np.ndarray, np.ndarray]:
        dm = self.margins()
        return np.array(self.lo) + dm, np.array(self.hi) - dm

    def in_plateau(self, X: np.ndarray) -> np.ndarray:
        ulo, uhi = self.plateau()
        X = np.atleast_2d(X)
        return np.all((X >= ulo) & (X <= uhi), axis=1)

    def to_dict(self) -> Dict:
        return {
            "lo": list(self.lo),
            "hi": list(self.hi),
            "margin_fraction": float(self.margin_fraction),
            "smoothness": int(self.smoothness),
        }

    @staticmethod
    def from_dict(d: Dict) -> "CutoffSpec":
        return CutoffSpec(
            lo=tuple(d["lo"]),
            hi=tuple(d["hi"]),
            margin_fraction=float(d.get("margin_fraction", 0.1)),
            smoothness=int(d.get("smoothness", 2)),
        )


def _smoothstep(s: np.ndarray, k: int, smoothness: int) -> np.ndarray:
    coeffs = np.array(_SMOOTHSTEPS[smoothness])
    for _ in range(k):
        coeffs = np.polynomial.polynomial.polyder(coeffs)
    inside = (s > 0.0) & (s < 1.0)
    val = np.polynomial.polynomial.polyval(np.clip(s, 0.0, 1.0), coeffs)
    if k == 0:
        return np.where(s >= 1.0, 1.0, np.where(s <= 0.0, 0.0, val))
    return np.where(inside, val, 0.0)


def _ramp_derivative(cutoff: CutoffSpec, x: np.ndarray, axis: int, k: int) -> np.ndarray:
    lo, hi = cutoff.lo[axis], cutoff.hi[axis]
    delta = cutoff.margin_fraction * (hi - lo)
    u = (x - lo) / delta
    v = (hi - x) / delta
    sm = cutoff.smoothness
    # rho = S(u) S(v); du/dx = 1/delta, dv/dx = -1/delta
    total = np.zeros_like(x)
    for j in range(k + 1):
        c = math.comb(k, j) * (1.0 / delta) ** k * (-1.0) ** (k - j)
        total = total + c * _smoothstep(u, j, sm) * _smoothstep(v, k - j, sm)
    return total


def cutoff_eval(cutoff: CutoffSpec, x, xi):
    """d^xi eta(x) for |xi| <= 2."""
    mi = MultiIndex.of(xi)
    if mi.order > 2:
        raise DerivativeOrderError(f"cutoff derivatives are provided up to order 2, got {mi.order}")
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    X = arr.reshape(1, -1) if single else arr
    if X.shape[1] != cutoff.dim or mi.dim != cutoff.dim:
        raise DimensionMismatchError(f"cutoff is {cutoff.dim}-dimensional")
    out = np.ones(X.shape[0])
    for i, k in enumerate(mi.entries):
        out = out * _ramp_derivative(cutoff, X[:, i], i, k)
    return float(out[0]) if single else out


# -----------------------------
# Ansatz jets (u or eta * u)
# -----------------------------

def _leibniz(
    targets: Sequence[MultiIndex],
    base: Dict[MultiIndex, np.ndarray],
    eta: Dict[MultiIndex, np.ndarray],
) -> Dict[MultiIndex, np.ndarray]:
    out: Dict[MultiIndex, np.ndarray] = {}
    for xi in targets:
        acc = None
        for beta in xi.sub_indices():
            gamma = xi - beta
            c = xi.binomial(beta) * eta[gamma]
            arr = base[beta]
            term = (c[:, None] * arr) if arr.ndim == 2 else c * arr
            acc = term if acc is None else acc + term
        out[xi] = acc
    return out


def _leibniz_support(xis: Sequence[MultiIndex]) -> List[MultiIndex]:
    support: List[MultiIndex] = []
    for xi in xis:
        for beta in xi.sub_indices():
            if beta not in support:
                support.append(beta)
    return support


def cutoff_derivatives(cutoff: CutoffSpec, X: np.ndarray, xis: Sequence[MultiIndex]) -> Dict[MultiIndex, np.ndarray]:
    return {g: cutoff_eval(cutoff, X, g) for g in _leibniz_support(xis)}


def ansatz_features(
    params: NetworkParams,
    X: np.ndarray,
    xis: Iterable,
    cutoff: Optional[CutoffSpec] = None,
) -> Dict[MultiIndex, np.ndarray]:
    """Outer-weight feature matrices of u (or of eta*u when a cutoff is given)."""
    from .net_core import outer_features

    idx = [MultiIndex.of(x) for x in xis]
    if cutoff is None:
        return outer_features(params, X, idx)
    support = _leibniz_support(idx)
    base = outer_features(params, X, support)
    return _leibniz(idx, base, cutoff_derivatives(cutoff, X, idx))


def ansatz_jet(
    params: NetworkParams,
    X: np.ndarray,
    xis: Iterable,
    cutoff: Optional[CutoffSpec] = None,
    jacobian: bool = False,
) -> Jet:
    idx = [MultiIndex.of(x) for x in xis]
    if cutoff is None:
        return network_jet(params, X, idx, jacobian=jacobian)
    support = _leibniz_support(idx)
    base = network_jet(params, X, support, jacobian=jacobian)
    eta = cutoff_derivatives(cutoff, X, idx)
    values = _leibniz(idx, base.values, eta)
    jacs = _leibniz(idx, base.jacobians, eta) if jacobian else None
    return Jet(values=values, jacobians=jacs)


def _first_and_second(d: int) -> Tuple[MultiIndex, List[MultiIndex], List[List[MultiIndex]]]:
    zero = MultiIndex.zero(d)
    grads = [MultiIndex.unit(d, i) for i in range(d)]
    hess = [[grads[i] + grads[j] for j in range(d)] for i in range(d)]
    return zero, grads, hess


def _maybe_jac(jet: Jet, xi: MultiIndex) -> Optional[np.ndarray]:
    return jet.jacobians[xi] if jet.has_jacobian else None


# -----------------------------
# Linear residuals
# -----------------------------

def linear_from_jet(op: LinearOperatorSpec, jet: Jet, X: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    r = np.zeros(X.shape[0])
    J = None
    for term in op.terms:
        c = term.values(X)
        r = r + c * jet.values[term.xi]
        if jet.has_jacobian:
            contrib = c[:, None] * jet.jacobians[term.xi]
            J = contrib if J is None else J + contrib
    return r, J


def apply_linear(op: LinearOperatorSpec, params: NetworkParams, x, cutoff: Optional[CutoffSpec] = None):
    """sum_xi c_xi(x) d^xi u(x); applied to eta*u when a cutoff is given."""
    X, single = params.check_points(x)
    if op.dim != params.d:
        raise DimensionMismatchError(f"operator is {op.dim}-dimensional, network is {params.d}-dimensional")
    if op.order > MAX_DERIVATIVE_ORDER:
        raise DerivativeOrderError(f"operator order {op.order} exceeds {MAX_DERIVATIVE_ORDER}")
    jet = ansatz_jet(params, X, op.xis(), cutoff=cutoff)
    r, _ = linear_from_jet(op, jet, X)
    return float(r[0]) if single else r


# -----------------------------
# Robin boundary values
# -----------------------------

def check_normals(normals: np.ndarray, tol: float = 1e-12) -> None:
    norms = np.linalg.norm(normals, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise NonUnitNormalError(f"boundary normals must have unit length (max deviation {np.max(np.abs(norms - 1.0)):.3e})")


def boundary_xis(robin: RobinSpec, d: int) -> List[MultiIndex]:
    xis = [MultiIndex.zero(d)]
    if float(robin.beta) != 0.0:
        xis.extend(MultiIndex.unit(d, i) for i in range(d))
    return xis


def boundary_residual(
    robin: RobinSpec, jet: Jet, normals: np.ndarray
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    d = normals.shape[1]
    zero = MultiIndex.zero(d)
    r = float(robin.alpha) * jet.values[zero]
    J = float(robin.alpha) * jet.jacobians[zero] if jet.has_jacobian else None
    if float(robin.beta) != 0.0:
        for i in range(d):
            e = MultiIndex.unit(d, i)
            c = float(robin.beta) * normals[:, i]
            r = r + c * jet.values[e]
            if J is not None:
                J = J + c[:, None] * jet.jacobians[e]
    return r, J


def boundary_value(params: NetworkParams, x, normal, robin: RobinSpec):
    """alpha * u(x) + beta * grad u(x) . n"""
    X, single = params.check_points(x)
    N = np.asarray(normal, dtype=np.float64).reshape(X.shape[0] if not single else 1, -1)
    if N.shape[1] != params.d:
        raise DimensionMismatchError("normal dimension does not match the network")
    check_normals(N)
    jet = network_jet(params, X, boundary_xis(robin, params.d))
    r, _ = boundary_residual(robin, jet, N)
    return float(r[0]) if single else r


# -----------------------------
# Burgers
# -----------------------------

BURGERS_XIS = (MultiIndex((0, 0)), MultiIndex((1, 0)), MultiIndex((0, 1)), MultiIndex((0, 2)))


def burgers_from_jet(jet: Jet, nu: float) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    u, ut, ux, uxx = (jet.values[xi] for xi in BURGERS_XIS)
    r = ut + u * ux - nu * uxx
    J = None
    if jet.has_jacobian:
        J0, Jt, Jx, Jxx = (jet.jacobians[xi] for xi in BURGERS_XIS)
        J = Jt + ux[:, None] * J0 + u[:, None] * Jx - nu * Jxx
    return r, J


def burgers_residual(params: NetworkParams, tx, nu: float = BURGERS_NU):
    """u_t + u u_x - nu u_xx at (t, x)."""
    if params.d != 2:
        raise DimensionMismatchError("Burgers residual needs d = 2 with coordinates (t, x)")
    X, single = params.check_points(tx)
    r, _ = burgers_from_jet(network_jet(params, X, BURGERS_XIS), float(nu))
    return float(r[0]) if single else r


# -----------------------------
# Monotone operators (cutoff ansatz)
# -----------------------------

def _masked_power(G: np.ndarray, expo: float, mask: np.ndarray) -> np.ndarray:
    out = np.zeros_like(G)
    ok = ~mask
    out[ok] = G[ok] ** expo
    return out


def monotone_from_jet(
    op: NonlinearOperatorSpec, jet: Jet, X: np.ndarray, eps_g: float = GRADIENT_SINGULARITY_EPS
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    d = X.shape[1]
    zero, grads, hess = _first_and_second(d)
    u = jet.values[zero]
    g = np.stack([jet.values[e] for e in grads], axis=1)
    H = np.stack([np.stack([jet.values[hess[i][j]] for j in range(d)], axis=1) for i in range(d)], axis=1)
    lap = np.trace(H, axis1=1, axis2=2)
    G = np.sum(g * g, axis=1)
    q = op.q_values(X)
    hu = op.reaction.audit(u)
    dh = op.reaction.dh(u)

    if op.kind == "quasilinear":
        r = -(1.0 + u * u) * lap - 2.0 * u * G + q * u + hu
        if not jet.has_jacobian:
            return r, None
        d_u = -2.0 * u * lap - 2.0 * G + q + dh
        d_g = -4.0 * u[:, None] * g
        d_H = -(1.0 + u * u)[:, None, None] * np.eye(d)[None, :, :]
    else:
        p = float(op.p)
        small = np.sqrt(G) < eps_g
        never = np.zeros_like(small)
        if p == 2.0:
            A = np.ones_like(G)
            B = np.zeros_like(G)
            C = np.zeros_like(G)
        else:
            A = G ** ((p - 2.0) / 2.0)
            B = _masked_power(G, (p - 4.0) / 2.0, small if p < 4.0 else never)
            C = _masked_power(G, (p - 6.0) / 2.0, small if p < 6.0 else never)
        Hg = np.einsum("nij,nj->ni", H, g)
        Q = np.sum(g * Hg, axis=1)
        r = -A * lap - (p - 2.0) * B * Q + q * u + hu
        if not jet.has_jacobian:
            return r, None
        d_u = q + dh
        # d/dg_i of A = (p-2) B g_i, of B = (p-4) C g_i
        d_g = (
            -lap[:, None] * (p - 2.0) * B[:, None] * g
            - (p - 2.0) * ((p - 4.0) * C[:, None] * g * Q[:, None] + 2.0 * B[:, None] * Hg)
        )
        d_H = -A[:, None, None] * np.eye(d)[None, :, :] - (p - 2.0) * B[:, None, None] * (
            g[:, :, None] * g[:, None, :]
        )

    J = d_u[:, None] * jet.jacobians[zero]
    for i in range(d):
        J = J + d_g[:, i][:, None] * jet.jacobians[grads[i]]
        for j in range(d):
            J = J + d_H[:, i, j][:, None] * jet.jacobians[hess[i][j]]
    return r, J


def monotone_xis(d: int) -> List[MultiIndex]:
    return all_indices_up_to(d, 2)


def monotone_residual(
    op: NonlinearOperatorSpec, cutoff: Optional[CutoffSpec], params: NetworkParams, x
):
    """L(eta u) + q (eta u) + h(eta u) for the p-Laplace / quasilinear families."""
    if op.kind == "burgers":
        raise ValueError("use burgers_residual for the Burgers operator")
    X, single = params.check_points(x)
    jet = ansatz_jet(params, X, monotone_xis(params.d), cutoff=cutoff)
    r, _ = monotone_from_jet(op, jet, X)
    return float(r[0]) if single else r


# -----------------------------
# Ritz energy densities
# -----------------------------

def energy_xis(d: int) -> List[MultiIndex]:
    return all_indices_up_to(d, 1)


def energy_from_jet(spec: EnergySpec, jet: Jet, X: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    d = X.shape[1]
    zero = MultiIndex.zero(d)
    grads = [MultiIndex.unit(d, i) for i in range(d)]
    u = jet.values[zero]
    g = np.stack([jet.values[e] for e in grads], axis=1)
    G = np.sum(g * g, axis=1)
    if spec.kind == "p_laplace":
        p = float(spec.p)
        f = field_values(spec.f, X)
        e = (G ** (p / 2.0)) / p - f * u
        d_u = -f
        d_g = (G ** ((p - 2.0) / 2.0))[:, None] * g
    else:
        eps2 = float(spec.epsilon) ** 2
        e = 0.5 * eps2 * G + 0.25 * (u * u - 1.0) ** 2
        d_u = u ** 3 - u
        d_g = eps2 * g
    if not jet.has_jacobian:
        return e, None
    J = d_u[:, None] * jet.jacobians[zero]
    for i in range(d):
        J = J + d_g[:, i][:, None] * jet.jacobians[grads[i]]
    return e, J


def energy_density(spec: EnergySpec, cutoff: Optional[CutoffSpec], params: NetworkParams, x):
    X, single = params.check_points(x)
    jet = ansatz_jet(params, X, energy_xis(params.d), cutoff=cutoff)
    e, _ = energy_from_jet(spec, jet, X)
    return float(e[0]) if single else e


# -----------------------------
# Dispatch used by the loss module
# -----------------------------

InteriorOperator = Union[LinearOperatorSpec, NonlinearOperatorSpec]


def interior_xis(op: Union[InteriorOperator, EnergySpec], d: int) -> List[MultiIndex]:
    if isinstance(op, LinearOperatorSpec):
        return op.xis()
    if isinstance(op, EnergySpec):
        return energy_xis(d)
    if op.kind == "burgers":
        return list(BURGERS_XIS)
    return monotone_xis(d)


def interior_residual(
    op: InteriorOperator, jet: Jet, X: np.ndarray
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if isinstance(op, LinearOperatorSpec):
        return linear_from_jet(op, jet, X)
    if op.kind == "burgers":
        if X.shape[1] != 2:
            raise DimensionMismatchError("Burgers residual needs d = 2 with coordinates (t, x)")
        return burgers_from_jet(jet, float(op.nu))
    return monotone_from_jet(op, jet, X)


def operator_from_dict(d: Dict) -> InteriorOperator:
    if str(d.get("kind")) == "linear":
        return LinearOperatorSpec.from_dict(d)
    return NonlinearOperatorSpec.from_dict(d)
