# ritzkit/diagnostics.py
"""
NTK Gram matrices, their drift, a cyclic Jacobi eigensolver, boundary
coercivity certificates and discrete linear-independence checks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .domain import MultiIndex, NetworkParams, TRAINABLE_FULL, TRAINABLE_OUTER
from .errors import AdmissibilityError, NonSymmetricError, ZeroNormError
from .geometry import (
    STREAM_BOOTSTRAP,
    AdmissibilityReport,
    Domain,
    QuadratureRule,
    check_admissible,
    sample_flat_segment,
    stream_generator,
)
from .loss import LossEvaluator, LossSpec
from .operators import (
    CutoffSpec,
    NonlinearOperatorSpec,
    RobinSpec,
    ansatz_jet,
    monotone_from_jet,
    monotone_xis,
)

logger = logging.getLogger(__name__)

PROVENANCE_INTERIOR = "interior_outer"
PROVENANCE_BOUNDARY = "boundary_outer"
PROVENANCE_FULL_W = "full_w"
PROVENANCE_FULL_A = "full_a"
PROVENANCE_GAMMA = "boundary_feature_gamma"
PROVENANCES = (PROVENANCE_INTERIOR, PROVENANCE_BOUNDARY, PROVENANCE_FULL_W, PROVENANCE_FULL_A, PROVENANCE_GAMMA)

SYMMETRY_TOL = 1e-12
LAMBDA_FLOOR = 1e-10


# -----------------------------
# Gram matrices
# -----------------------------

def _check_symmetric(M: np.ndarray) -> None:
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonSymmetricError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and float(np.max(np.abs(M - M.T))) > SYMMETRY_TOL * scale:
        raise NonSymmetricError("matrix is not symmetric within 1e-12")


@dataclass
class GramMatrix:
    data: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown Gram provenance '{self.provenance}'")
        M = np.asarray(self.data, dtype=np.float64)
        _check_symmetric(M)
        self.data = 0.5 * (M + M.T)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.data, "fro"))


def _outer_gram(J: np.ndarray, provenance: str) -> GramMatrix:
    return GramMatrix(data=J @ J.T, provenance=provenance)


def _as_evaluator(spec: Union[LossSpec, LossEvaluator]) -> LossEvaluator:
    return spec if isinstance(spec, LossEvaluator) else LossEvaluator(spec)


def gram_outer(spec: Union[LossSpec, LossEvaluator], params: NetworkParams, which: str = "interior") -> GramMatrix:
    """K_ij = <d_a r_i, d_a r_j> over the unscaled residuals of one region."""
    if which not in ("interior", "boundary"):
        raise ValueError("which must be 'interior' or 'boundary'")
    ev = _as_evaluator(spec)
    outer = params if params.trainable == TRAINABLE_OUTER else params.replace(trainable=TRAINABLE_OUTER)
    pr = ev.pointwise(outer, jacobian=True)
    if which == "interior":
        return _outer_gram(pr.interior_jac, PROVENANCE_INTERIOR)
    return _outer_gram(pr.boundary_jac, PROVENANCE_BOUNDARY)


def gram_full(spec: Union[LossSpec, LossEvaluator], params: NetworkParams) -> Tuple[GramMatrix, GramMatrix]:
    """(G, G_tilde) from the stacked s/h jacobians: inner-parameter columns and outer-weight columns."""
    if params.trainable != TRAINABLE_FULL:
        raise ValueError("gram_full requires trainable='full'")
    rj = _as_evaluator(spec).residual_jacobians(params)
    D = np.vstack([rj.Js, rj.Jh])
    m = params.m
    return _outer_gram(D[:, m:], PROVENANCE_FULL_W), _outer_gram(D[:, :m], PROVENANCE_FULL_A)


def relative_drift(K_t: GramMatrix, K_0: GramMatrix) -> float:
    if K_t.data.shape != K_0.data.shape or K_t.provenance != K_0.provenance:
        raise ValueError("drift needs Gram matrices of the same shape and provenance")
    n0 = K_0.frobenius()
    if n0 == 0.0:
        raise ZeroNormError("initial Gram matrix has zero Frobenius norm")
    return float(np.linalg.norm(K_t.data - K_0.data, "fro")) / n0


# -----------------------------
# Cyclic Jacobi eigensolver
# -----------------------------

def jacobi_eigh(M, tol: float = 1e-14, max_sweeps: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """
    Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns). Sweeps stop when
    the off-diagonal Frobenius norm is below tol * |M|_F.
    """
    A = np.array(M.data if isinstance(M, GramMatrix) else M, dtype=np.float64)
    _check_symmetric(A)
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    V = np.eye(n)
    if n <= 1:
        return np.diag(A).copy(), V
    threshold = tol * float(np.linalg.norm(A, "fro"))

    for sweep in range(int(max_sweeps)):
        off = math.sqrt(max(float(np.sum(A * A) - np.sum(np.diag(A) ** 2)), 0.0))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                Ap = A[:, p].copy()
                Aq = A[:, q]
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :]
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Vp = V[:, p].copy()
                Vq = V[:, q]
                V[:, p] = c * Vp - s * Vq
                V[:, q] = s * Vp + c * Vq
    else:
        logger.warning("Jacobi eigensolver stopped after %d sweeps", max_sweeps)

    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def min_eigenvalue(M) -> float:
    vals, _ = jacobi_eigh(M)
    return float(vals[0])


# -----------------------------
# Gram drift tracking
# -----------------------------

@dataclass
class GramRecord:
    iteration: int
    provenance: str
    rel_drift: float
    min_eig: Optional[float]


@dataclass
class GramTracker:
    """Records drift of K_Omega / K_dOmega against the first snapshot."""
    evaluator: LossEvaluator
    which: Sequence[str] = ("interior", "boundary")
    stride: int = 1
    eigenvalues: bool = True
    records: List[GramRecord] = field(default_factory=list)
    _initial: Dict[str, GramMatrix] = field(default_factory=dict)

    def snapshot(self, iteration: int, params: NetworkParams) -> None:
        if iteration % max(1, int(self.stride)) != 0:
            return
        for region in self.which:
            if region == "boundary" and self.evaluator.spec.collocation.n2 == 0:
                continue
            K = gram_outer(self.evaluator, params, region)
            K0 = self._initial.setdefault(region, K)
            drift = 0.0 if K is K0 else relative_drift(K, K0)
            lam = min_eigenvalue(K) if self.eigenvalues else None
            self.records.append(GramRecord(int(iteration), K.provenance, drift, lam))

    def drifts(self, provenance: str) -> np.ndarray:
        return np.array([r.rel_drift for r in self.records if r.provenance == provenance])

    def iterations(self, provenance: str) -> np.ndarray:
        return np.array([r.iteration for r in self.records if r.provenance == provenance])

    def summary(self) -> Dict:
        out: Dict = {}
        for prov in (PROVENANCE_INTERIOR, PROVENANCE_BOUNDARY):
            d = self.drifts(prov)
            if d.size:
                out[prov] = {"final_drift": float(d[-1]), "max_drift": float(d.max()), "snapshots": int(d.size)}
        return out


# -----------------------------
# Boundary coercivity certificate
# -----------------------------

def boundary_features(params: NetworkParams, points: np.ndarray, robin: RobinSpec, normal: np.ndarray) -> np.ndarray:
    """phi_k(x) = alpha tanh(w_k.x + b_k) + beta (w_k.n) tanh'(w_k.x + b_k), plain scaling."""
    X, _ = params.check_points(points)
    Z = X @ params.w.T + params.b[None, :]
    s = np.tanh(Z)
    wn = params.w @ np.asarray(normal, dtype=np.float64)
    return float(robin.alpha) * s + float(robin.beta) * (1.0 - s * s) * wn[None, :]


@dataclass
class CoercivityCertificate:
    lambda_min: float
    C: Optional[float]
    flagged: bool
    bootstrap_se: float
    n_points: int
    gram: GramMatrix
    admissibility: Optional[AdmissibilityReport] = None

    def bound_holds(self, a: np.ndarray, rel_slack: float = 1e-8) -> bool:
        """|a|_2 <= C * sqrt(a^T G a) * (1 + rel_slack)."""
        if self.C is None:
            return False
        q = float(a @ self.gram.data @ a)
        return float(np.linalg.norm(a)) <= self.C * math.sqrt(max(q, 0.0)) * (1.0 + rel_slack)

    def to_dict(self) -> Dict:
        return {
            "lambda_min": self.lambda_min,
            "C": self.C,
            "flagged": self.flagged,
            "bootstrap_se": self.bootstrap_se,
            "n_points": self.n_points,
            "admissibility": self.admissibility.to_dict() if self.admissibility else None,
        }


def _weighted_gram(Phi: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return Phi.T @ (weights[:, None] * Phi)


def boundary_coercivity_certificate(
    params: NetworkParams,
    rule: QuadratureRule,
    robin: RobinSpec,
    normal: Optional[np.ndarray] = None,
    normal_axis: int = -1,
    require_admissible: bool = True,
    n_bootstrap: int = 10,
    seed: int = 0,
) -> CoercivityCertificate:
    """
    m x m Gram of the Robin boundary features over the flat segment.

    lambda_min <= 1e-10 is flagged (quadrature too coarse or features dependent),
    not raised; C is then None.
    """
    axis = int(normal_axis) % params.d
    if normal is None:
        normal = np.zeros(params.d)
        normal[axis] = 1.0
    report = None
    if params.d >= 2:
        report = check_admissible(params, axis)
        if require_admissible and not report.ok:
            raise AdmissibilityError(f"inner parameters are not admissible: {report.violations[:5]}")
    if rule.n < params.m:
        raise ValueError(f"certificate needs >= m={params.m} quadrature points, got {rule.n}")

    Phi = boundary_features(params, rule.points, robin, normal)
    G = GramMatrix(_weighted_gram(Phi, rule.weights), PROVENANCE_GAMMA)
    lam = min_eigenvalue(G)

    se = 0.0
    if n_bootstrap > 1:
        rng = stream_generator(seed, STREAM_BOOTSTRAP)
        boot = []
        for _ in range(int(n_bootstrap)):
            idx = rng.integers(0, rule.n, size=rule.n)
            boot.append(min_eigenvalue(_weighted_gram(Phi[idx], rule.weights[idx])))
        se = float(np.std(boot, ddof=1))

    flagged = not lam > LAMBDA_FLOOR
    if flagged:
        logger.warning("boundary Gram lambda_min=%.3e is not above %.0e", lam, LAMBDA_FLOOR)
    return CoercivityCertificate(
        lambda_min=lam,
        C=None if flagged else 1.0 / math.sqrt(lam),
        flagged=flagged,
        bootstrap_se=se,
        n_points=rule.n,
        gram=G,
        admissibility=report,
    )


def gamma_rule_size(m: int) -> int:
    return max(50 * int(m), 1000)


def domain_coercivity_certificate(
    params: NetworkParams,
    domain: Domain,
    robin: RobinSpec,
    seed: int = 0,
    n_points: Optional[int] = None,
    require_admissible: bool = True,
) -> CoercivityCertificate:
    """Certificate on the domain's flat segment with its outward normal."""
    facet = domain.flat_segment()
    rule = sample_flat_segment(domain, n_points or gamma_rule_size(params.m), seed)
    return boundary_coercivity_certificate(
        params,
        rule,
        robin,
        normal=np.array(facet.normal),
        normal_axis=facet.axis,
        require_admissible=require_admissible,
        seed=seed,
    )


# -----------------------------
# Discrete independence
# -----------------------------

def activation_matrix(params: NetworkParams, points: np.ndarray) -> np.ndarray:
    """sigma(X)[i, k] = tanh(w_k . x_i + b_k)."""
    X, _ = params.check_points(points)
    return np.tanh(X @ params.w.T + params.b[None, :])


def discrete_independence_det(params: NetworkParams, points: np.ndarray) -> float:
    X, _ = params.check_points(points)
    if X.shape[0] != params.m:
        raise ValueError(f"need exactly m={params.m} points, got {X.shape[0]}")
    if np.unique(X, axis=0).shape[0] < X.shape[0]:
        return 0.0
    return float(np.linalg.det(activation_matrix(params, X)))


def discrete_independence_logdet(params: NetworkParams, points: np.ndarray) -> Tuple[float, float]:
    """(sign, log|det|) of sigma(X); sign 0 means singular."""
    X, _ = params.check_points(points)
    if X.shape[0] != params.m:
        raise ValueError(f"need exactly m={params.m} points, got {X.shape[0]}")
    if np.unique(X, axis=0).shape[0] < X.shape[0]:
        return 0.0, -math.inf
    sign, logabs = np.linalg.slogdet(activation_matrix(params, X))
    return float(sign), float(logabs)


def empirical_boundary_gram(params: NetworkParams, points: np.ndarray) -> GramMatrix:
    S = activation_matrix(params, points)
    return GramMatrix(S.T @ S, PROVENANCE_GAMMA)


# -----------------------------
# Interior monotone control
# -----------------------------

@dataclass
class MonotoneControl:
    pairing: float            # quadrature of (L u~) u~
    gradient_power: float     # quadrature of |grad u~|^p
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.pairing >= self.gradient_power - self.tolerance

    def to_dict(self) -> Dict:
        return {
            "pairing": self.pairing,
            "gradient_power": self.gradient_power,
            "tolerance": self.tolerance,
            "ok": self.ok,
        }


def interior_monotone_control(
    op: NonlinearOperatorSpec,
    cutoff: CutoffSpec,
    params: NetworkParams,
    rule: QuadratureRule,
    rel_tol: float = 1e-3,
) -> MonotoneControl:
    """
    Compares <L u~, u~> with int |grad u~|^p on a quadrature rule, where u~ = eta u
    vanishes on the boundary (p = 2 for the quasilinear family).
    """
    X = rule.points
    jet = ansatz_jet(params, X, monotone_xis(params.d), cutoff=cutoff)
    R, _ = monotone_from_jet(op, jet, X)
    d = params.d
    u = jet.values[MultiIndex.zero(d)]
    g = np.stack([jet.values[MultiIndex.unit(d, i)] for i in range(d)], axis=1)
    p = float(op.p) if op.kind == "p_laplace" else 2.0
    grad_p = np.sum(g * g, axis=1) ** (p / 2.0)
    pairing = float(rule.weights @ (R * u))
    power = float(rule.weights @ grad_p)
    return MonotoneControl(pairing=pairing, gradient_power=power, tolerance=rel_tol * max(1.0, abs(power)))
