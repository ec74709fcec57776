# ritzkit/loss.py
"""
PINN and Deep Ritz objectives in the empirical convention

    s_p = (L u(x_p) - f(x_p)) / sqrt(n1)
    h_j = sqrt(lambda / n2) * (B u(x_j) - g(x_j))
    J   = 1/2 (|s|^2 + |h|^2)                       (pinn)
    J   = sum_p w_p E(u)(x_p) + 1/2 |h|^2           (ritz, w_p = |Omega| / n1)

with analytic gradients over the trainable vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .domain import NetworkParams, TRAINABLE_OUTER
from .geometry import CollocationSet
from .net_core import Jet, jet_from_features
from .operators import (
    CutoffSpec,
    EnergySpec,
    InteriorOperator,
    RobinSpec,
    ScalarField,
    ansatz_features,
    ansatz_jet,
    boundary_residual,
    boundary_xis,
    check_normals,
    energy_from_jet,
    field_values,
    interior_residual,
    interior_xis,
)

LOSS_PINN = "pinn"
LOSS_RITZ = "ritz"


@dataclass
class LossSpec:
    kind: str
    collocation: CollocationSet
    operator: Optional[InteriorOperator] = None
    energy: Optional[EnergySpec] = None
    robin: RobinSpec = RobinSpec(1.0, 0.0)
    f: ScalarField = 0.0
    g: ScalarField = 0.0
    lam: float = 1.0
    cutoff: Optional[CutoffSpec] = None

    def __post_init__(self):
        if self.kind == LOSS_PINN:
            if self.operator is None:
                raise ValueError("pinn loss needs an interior operator")
        elif self.kind == LOSS_RITZ:
            if self.energy is None:
                raise ValueError("ritz loss needs an energy density")
        else:
            raise ValueError(f"unknown loss kind '{self.kind}'")
        if float(self.lam) < 0.0:
            raise ValueError("lambda must be >= 0")
        if self.collocation.n1 < 1:
            raise ValueError("loss needs at least one interior collocation point")
        if self.collocation.n2 == 0 and self.cutoff is None:
            raise ValueError("n2 = 0 is only allowed when a cutoff enforces the boundary condition")
        if self.collocation.n2 > 0:
            check_normals(self.collocation.normals)

    @property
    def interior_op(self) -> Union[InteriorOperator, EnergySpec]:
        return self.operator if self.kind == LOSS_PINN else self.energy

    @property
    def d(self) -> int:
        return self.collocation.d


@dataclass
class ResidualVectors:
    s: np.ndarray
    h: np.ndarray

    @property
    def loss(self) -> float:
        return 0.5 * (float(self.s @ self.s) + float(self.h @ self.h))


@dataclass
class PointwiseResiduals:
    """Unscaled residuals (L u - f, B u - g) with their jacobians over the trainable vector."""
    interior: np.ndarray
    boundary: np.ndarray
    interior_jac: Optional[np.ndarray] = None
    boundary_jac: Optional[np.ndarray] = None


@dataclass
class ResidualJacobians:
    s: np.ndarray
    h: np.ndarray
    Js: np.ndarray
    Jh: np.ndarray


# -----------------------------
# Evaluator (with a feature cache for outer-only training)
# -----------------------------

class LossEvaluator:
    """
    Evaluates a LossSpec for many parameter vectors.

    With trainable='outer_only' every derivative field is Phi @ a with Phi
    depending only on (w, b); the Phi matrices are kept until (w, b) change.
    """

    def __init__(self, spec: LossSpec):
        self.spec = spec
        self._key: Optional[Tuple[np.ndarray, np.ndarray, str]] = None
        self._int_feats = None
        self._bnd_feats = None

    # ---------------- jets ----------------

    def _features(self, params: NetworkParams):
        key = self._key
        if key is None or key[2] != params.scaling or not (
            np.array_equal(key[0], params.w) and np.array_equal(key[1], params.b)
        ):
            spec = self.spec
            col = spec.collocation
            self._int_feats = ansatz_features(
                params, col.interior, interior_xis(spec.interior_op, spec.d), cutoff=spec.cutoff
            )
            if col.n2 > 0:
                self._bnd_feats = ansatz_features(
                    params, col.boundary, boundary_xis(spec.robin, spec.d), cutoff=spec.cutoff
                )
            else:
                self._bnd_feats = None
            self._key = (params.w, params.b, params.scaling)
        return self._int_feats, self._bnd_feats

    def jets(self, params: NetworkParams, jacobian: bool) -> Tuple[Jet, Optional[Jet]]:
        spec = self.spec
        col = spec.collocation
        if params.trainable == TRAINABLE_OUTER:
            fi, fb = self._features(params)
            jet_i = jet_from_features(fi, params.a, jacobian)
            jet_b = jet_from_features(fb, params.a, jacobian) if fb is not None else None
            return jet_i, jet_b
        jet_i = ansatz_jet(
            params, col.interior, interior_xis(spec.interior_op, spec.d), cutoff=spec.cutoff, jacobian=jacobian
        )
        jet_b = None
        if col.n2 > 0:
            jet_b = ansatz_jet(
                params, col.boundary, boundary_xis(spec.robin, spec.d), cutoff=spec.cutoff, jacobian=jacobian
            )
        return jet_i, jet_b

    # ---------------- residuals ----------------

    def pointwise(self, params: NetworkParams, jacobian: bool = False) -> PointwiseResiduals:
        spec = self.spec
        col = spec.collocation
        if params.d != spec.d:
            raise ValueError(f"network dimension {params.d} does not match collocation dimension {spec.d}")
        jet_i, jet_b = self.jets(params, jacobian)
        P = params.n_trainable

        if spec.kind == LOSS_PINN:
            r, J = interior_residual(spec.operator, jet_i, col.interior)
            r = r - field_values(spec.f, col.interior)
        else:
            r, J = energy_from_jet(spec.energy, jet_i, col.interior)

        if jet_b is not None:
            b, Jb = boundary_residual(spec.robin, jet_b, col.normals)
            b = b - field_values(spec.g, col.boundary, col.normals)
        else:
            b = np.zeros(0)
            Jb = np.zeros((0, P)) if jacobian else None
        return PointwiseResiduals(interior=r, boundary=b, interior_jac=J, boundary_jac=Jb)

    def _boundary_scale(self) -> float:
        n2 = self.spec.collocation.n2
        return math.sqrt(float(self.spec.lam) / n2) if n2 > 0 else 0.0

    def residual_vectors(self, params: NetworkParams) -> ResidualVectors:
        if self.spec.kind != LOSS_PINN:
            raise ValueError("residual vectors are defined for pinn losses")
        pr = self.pointwise(params)
        n1 = self.spec.collocation.n1
        return ResidualVectors(s=pr.interior / math.sqrt(n1), h=self._boundary_scale() * pr.boundary)

    def residual_jacobians(self, params: NetworkParams) -> ResidualJacobians:
        if self.spec.kind != LOSS_PINN:
            raise ValueError("residual jacobians are defined for pinn losses")
        pr = self.pointwise(params, jacobian=True)
        c1 = 1.0 / math.sqrt(self.spec.collocation.n1)
        c2 = self._boundary_scale()
        return ResidualJacobians(
            s=c1 * pr.interior,
            h=c2 * pr.boundary,
            Js=c1 * pr.interior_jac,
            Jh=c2 * pr.boundary_jac,
        )

    # ---------------- objective ----------------

    def value_and_grad(self, params: NetworkParams, with_grad: bool = True) -> Tuple[float, Optional[np.ndarray]]:
        spec = self.spec
        pr = self.pointwise(params, jacobian=with_grad)
        c2 = self._boundary_scale()
        h = c2 * pr.boundary
        bterm = 0.5 * float(h @ h)
        if spec.kind == LOSS_PINN:
            c1 = 1.0 / math.sqrt(spec.collocation.n1)
            s = c1 * pr.interior
            value = 0.5 * float(s @ s) + bterm
            if not with_grad:
                return value, None
            grad = c1 * (pr.interior_jac.T @ s)
        else:
            wts = spec.collocation.interior_weights
            value = float(wts @ pr.interior) + bterm
            if not with_grad:
                return value, None
            grad = pr.interior_jac.T @ wts
        if h.size:
            grad = grad + c2 * (pr.boundary_jac.T @ h)
        return value, grad

    def loss(self, params: NetworkParams) -> float:
        return self.value_and_grad(params, with_grad=False)[0]

    def gradient(self, params: NetworkParams) -> np.ndarray:
        return self.value_and_grad(params)[1]

    def quadrature_loss(self, params: NetworkParams) -> float:
        """Integral form: int (Lu - f)^2 + lambda int (Bu - g)^2 (or the Ritz energy in place of the first term)."""
        spec = self.spec
        col = spec.collocation
        pr = self.pointwise(params)
        if spec.kind == LOSS_PINN:
            interior = float(col.interior_weights @ (pr.interior ** 2))
        else:
            interior = float(col.interior_weights @ pr.interior)
        boundary = float(col.boundary_weights @ (pr.boundary ** 2)) if col.n2 else 0.0
        return interior + float(spec.lam) * boundary


# -----------------------------
# Module-level operations
# -----------------------------

def residual_vectors(spec: LossSpec, params: NetworkParams) -> ResidualVectors:
    return LossEvaluator(spec).residual_vectors(params)


def residual_jacobians(spec: LossSpec, params: NetworkParams) -> ResidualJacobians:
    return LossEvaluator(spec).residual_jacobians(params)


def empirical_loss(spec: LossSpec, params: NetworkParams) -> float:
    return LossEvaluator(spec).loss(params)


def loss_gradient(spec: LossSpec, params: NetworkParams) -> np.ndarray:
    return LossEvaluator(spec).gradient(params)


def quadrature_loss(spec: LossSpec, params: NetworkParams) -> float:
    return LossEvaluator(spec).quadrature_loss(params)
