# ritzkit/net_core.py
"""
Two-layer tanh network: values, analytic partial derivatives of any supported order,
and derivatives with respect to the trainable parameters.

tanh^(k)(t) is stored as an integer polynomial P_k in s = tanh(t):
    P_0(s) = s,   P_{k+1}(s) = P_k'(s) * (1 - s^2)
which stays bounded by sum(|coeffs of P_k|) since |s| <= 1.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .domain import MultiIndex, NetworkParams, TRAINABLE_FULL
from .errors import DerivativeOrderError

MAX_DERIVATIVE_ORDER = 8

XiLike = Union[MultiIndex, Sequence[int]]


# -----------------------------
# tanh derivative polynomials
# -----------------------------

@lru_cache(maxsize=None)
def tanh_poly_coeffs(k: int) -> Tuple[int, ...]:
    """Ascending integer coefficients of P_k(s)."""
    if k < 0:
        raise DerivativeOrderError(f"derivative order must be >= 0, got {k}")
    if k == 0:
        return (0, 1)
    prev = tanh_poly_coeffs(k - 1)
    dp = [i * c for i, c in enumerate(prev)][1:]
    out = [0] * (len(dp) + 2)
    for i, c in enumerate(dp):
        out[i] += c
        out[i + 2] -= c
    while len(out) > 1 and out[-1] == 0:
        out.pop()
    return tuple(out)


def derivative_bound(k: int) -> float:
    return float(sum(abs(c) for c in tanh_poly_coeffs(k)))


def _check_order(k: int, max_order: int) -> None:
    if k > max_order:
        raise DerivativeOrderError(f"derivative order {k} exceeds the supported maximum {max_order}")


def _poly_in_tanh(k: int, s: np.ndarray) -> np.ndarray:
    coeffs = tanh_poly_coeffs(k)
    out = np.zeros_like(s)
    for c in reversed(coeffs):
        out = out * s + float(c)
    return out


def tanh_kth_derivative(k: int, t, max_order: int = MAX_DERIVATIVE_ORDER):
    """d^k/dt^k tanh(t); scalar in, float out; array in, array out."""
    _check_order(int(k), max_order)
    arr = np.asarray(t, dtype=np.float64)
    val = _poly_in_tanh(int(k), np.tanh(arr))
    if arr.ndim == 0:
        return float(val)
    return val


class _TanhDerivatives:
    """Lazily evaluated tanh^(k)(Z) for one pre-activation matrix Z."""

    def __init__(self, Z: np.ndarray):
        self._s = np.tanh(Z)
        self._cache: Dict[int, np.ndarray] = {0: self._s}

    def __getitem__(self, k: int) -> np.ndarray:
        got = self._cache.get(k)
        if got is None:
            got = _poly_in_tanh(k, self._s)
            self._cache[k] = got
        return got


# -----------------------------
# Multi-index powers w^xi
# -----------------------------

def multi_power(w: np.ndarray, xi: XiLike) -> np.ndarray:
    """Row-wise prod_i w_{k,i}^{xi_i}; 0^0 = 1."""
    xi = MultiIndex.of(xi)
    out = np.ones(w.shape[0], dtype=np.float64)
    for i, e in enumerate(xi.entries):
        if e == 0:
            continue
        col = w[:, i]
        for _ in range(e):
            out = out * col
    return out


def multi_power_gradient(w: np.ndarray, xi: XiLike) -> np.ndarray:
    """d(w_k^xi)/d w_{k,j} as an (m, d) matrix."""
    xi = MultiIndex.of(xi)
    m, d = w.shape
    out = np.zeros((m, d), dtype=np.float64)
    for j, e in enumerate(xi.entries):
        if e == 0:
            continue
        lowered = list(xi.entries)
        lowered[j] -= 1
        out[:, j] = float(e) * multi_power(w, lowered)
    return out


# -----------------------------
# Features and jets
# -----------------------------

def _preactivation(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    return X @ params.w.T + params.b[None, :]


def _normalize_xis(xis: Iterable[XiLike], d: int) -> List[MultiIndex]:
    out: List[MultiIndex] = []
    for xi in xis:
        mi = MultiIndex.of(xi)
        if mi.dim != d:
            raise ValueError(f"multi-index {mi.entries} does not match dimension d={d}")
        if mi not in out:
            out.append(mi)
    return out


def outer_features(
    params: NetworkParams,
    x,
    xis: Iterable[XiLike],
    max_order: int = MAX_DERIVATIVE_ORDER,
) -> Dict[MultiIndex, np.ndarray]:
    """
    Feature matrices Phi_xi[p, k] = s * tanh^(|xi|)(w_k . x_p + b_k) * w_k^xi.

    Phi_xi @ a is d^xi u at every point; Phi_xi is also d(d^xi u)/da.
    """
    X, _ = params.check_points(x)
    idx = _normalize_xis(xis, params.d)
    for mi in idx:
        _check_order(mi.order, max_order)
    D = _TanhDerivatives(_preactivation(params, X))
    out: Dict[MultiIndex, np.ndarray] = {}
    for mi in idx:
        out[mi] = params.scale * D[mi.order] * multi_power(params.w, mi)[None, :]
    return out


def _inner_jacobian(
    params: NetworkParams, X: np.ndarray, mi: MultiIndex, D: _TanhDerivatives
) -> Tuple[np.ndarray, np.ndarray]:
    k = mi.order
    sk = D[k]
    sk1 = D[k + 1]
    P = multi_power(params.w, mi)
    dP = multi_power_gradient(params.w, mi)
    coef = params.scale * params.a
    # (n, m, d)
    Jw = coef[None, :, None] * (
        sk1[:, :, None] * X[:, None, :] * P[None, :, None] + sk[:, :, None] * dP[None, :, :]
    )
    Jb = coef[None, :] * sk1 * P[None, :]
    return Jw, Jb


@dataclass
class Jet:
    """
    Derivative fields of a scalar function at n points.

    values[xi] has shape (n,); jacobians[xi] has shape (n, P) over the
    trainable vector (None when not requested).
    """
    values: Dict[MultiIndex, np.ndarray]
    jacobians: Optional[Dict[MultiIndex, np.ndarray]] = None

    def value(self, xi: XiLike) -> np.ndarray:
        return self.values[MultiIndex.of(xi)]

    def jacobian(self, xi: XiLike) -> np.ndarray:
        if self.jacobians is None:
            raise ValueError("jet was built without jacobians")
        return self.jacobians[MultiIndex.of(xi)]

    @property
    def has_jacobian(self) -> bool:
        return self.jacobians is not None


def jet_from_features(features: Dict[MultiIndex, np.ndarray], a: np.ndarray, jacobian: bool) -> Jet:
    """Outer-only jet: values are Phi @ a and the jacobian is Phi itself."""
    values = {mi: phi @ a for mi, phi in features.items()}
    jacs = dict(features) if jacobian else None
    return Jet(values=values, jacobians=jacs)


def network_jet(
    params: NetworkParams,
    x,
    xis: Iterable[XiLike],
    jacobian: bool = False,
    max_order: int = MAX_DERIVATIVE_ORDER,
) -> Jet:
    X, _ = params.check_points(x)
    idx = _normalize_xis(xis, params.d)
    for mi in idx:
        _check_order(mi.order, max_order)
    D = _TanhDerivatives(_preactivation(params, X))
    feats = {mi: params.scale * D[mi.order] * multi_power(params.w, mi)[None, :] for mi in idx}
    if not jacobian or params.trainable != TRAINABLE_FULL:
        return jet_from_features(feats, params.a, jacobian)

    n = X.shape[0]
    values: Dict[MultiIndex, np.ndarray] = {}
    jacs: Dict[MultiIndex, np.ndarray] = {}
    for mi, phi in feats.items():
        Jw, Jb = _inner_jacobian(params, X, mi, D)
        values[mi] = phi @ params.a
        jacs[mi] = np.concatenate([phi, Jw.reshape(n, -1), Jb], axis=1)
    return Jet(values=values, jacobians=jacs)


# -----------------------------
# Spec-level operations
# -----------------------------

def _finish(val: np.ndarray, single: bool):
    return float(val[0]) if single else val


def evaluate(params: NetworkParams, x):
    """u(x) with the configured scaling."""
    X, single = params.check_points(x)
    u = params.scale * (np.tanh(_preactivation(params, X)) @ params.a)
    return _finish(u, single)


def partial_derivative(params: NetworkParams, x, xi: XiLike, max_order: int = MAX_DERIVATIVE_ORDER):
    X, single = params.check_points(x)
    mi = MultiIndex.of(xi)
    phi = outer_features(params, X, [mi], max_order=max_order)[mi]
    return _finish(phi @ params.a, single)


def feature_derivative_vector(
    params: NetworkParams, x, xi: XiLike, max_order: int = MAX_DERIVATIVE_ORDER
) -> np.ndarray:
    """d(d^xi u(x))/da: shape (m,) for a point, (n, m) for a batch."""
    X, single = params.check_points(x)
    mi = MultiIndex.of(xi)
    phi = outer_features(params, X, [mi], max_order=max_order)[mi]
    return phi[0] if single else phi


def inner_param_gradient(
    params: NetworkParams, x, xi: XiLike, max_order: int = MAX_DERIVATIVE_ORDER
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gradient of d^xi u(x) with respect to (w, b).

    Returns (grad_w, grad_b) with shapes (m, d), (m,) for one point or
    (n, m, d), (n, m) for a batch.
    """
    if params.trainable != TRAINABLE_FULL:
        raise ValueError("inner_param_gradient requires trainable='full'")
    X, single = params.check_points(x)
    mi = _normalize_xis([xi], params.d)[0]
    _check_order(mi.order, max_order)
    D = _TanhDerivatives(_preactivation(params, X))
    Jw, Jb = _inner_jacobian(params, X, mi, D)
    if single:
        return Jw[0], Jb[0]
    return Jw, Jb
