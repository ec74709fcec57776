# ritzkit/selftest.py
"""
Oracle suites behind `ritzkit selftest`.

Each suite compares the package against an independent oracle (finite
differences, closed forms, quadrature identities) at desk scale and reports
pass/fail with a one-line detail.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import (
    discrete_independence_logdet,
    domain_coercivity_certificate,
    interior_monotone_control,
    min_eigenvalue,
)
from .domain import MultiIndex, NetworkParams, SCALING_PLAIN, TRAINABLE_FULL, TRAINABLE_OUTER, all_indices_up_to
from .dynamics import QuadraticObjective, TraceRecord, TrainingTrace, fit_rate, igd_step
from .geometry import (
    INIT_RANDOM_FEATURE,
    INIT_SMALL_NORMAL,
    Domain,
    InitScheme,
    initialize,
    sample,
    sample_flat_segment,
    tensor_gauss_rule,
    time_slab,
    unit_square,
)
from .loss import LossEvaluator, LossSpec
from .net_core import partial_derivative
from .operators import (
    EnergySpec,
    NonlinearOperatorSpec,
    RobinSpec,
    builtin_field,
    heat_operator,
    reaction_cubic,
    reaction_zero,
)
from .quasi_newton import LbfgsOptions
from .reference_solutions import burgers_crank_nicolson, burgers_reference

logger = logging.getLogger(__name__)


@dataclass
class SelftestResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class SelftestReport:
    results: List[SelftestResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)


# -----------------------------
# Finite-difference oracles
# -----------------------------

def fd_partial(params: NetworkParams, x: np.ndarray, xi: MultiIndex, h: float = 1e-5) -> float:
    """d^xi u by a central difference of the next-lower analytic derivative."""
    i = next(k for k, e in enumerate(xi) if e > 0)
    lower = xi - MultiIndex.unit(xi.dim, i)
    step = np.zeros(xi.dim)
    step[i] = h
    up = partial_derivative(params, x + step, lower)
    down = partial_derivative(params, x - step, lower)
    return (up - down) / (2.0 * h)


def fd_gradient(fun: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (fun(theta + e) - fun(theta - e)) / (2.0 * h)
    return g


def _random_params(rng: np.random.Generator, m: int, d: int, scaling: str, trainable: str) -> NetworkParams:
    return NetworkParams(
        a=rng.standard_normal(m),
        w=rng.standard_normal((m, d)),
        b=rng.standard_normal(m),
        scaling=scaling,
        trainable=trainable,
    )


# -----------------------------
# Suites
# -----------------------------

def suite_derivatives(seed: int) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(100):
        m = int(rng.integers(1, 21))
        d = int(rng.integers(1, 4))
        params = _random_params(rng, m, d, SCALING_PLAIN, TRAINABLE_OUTER)
        x = rng.uniform(-1.0, 1.0, size=d)
        for xi in all_indices_up_to(d, 4):
            if xi.order == 0:
                continue
            exact = partial_derivative(params, x, xi)
            approx = fd_partial(params, x, xi)
            worst = max(worst, abs(exact - approx) / max(1.0, abs(exact)))
    return worst < 1e-5, f"max relative error {worst:.2e}"


def _gradient_cases(rng: np.random.Generator) -> List[Tuple[str, LossSpec]]:
    slab = time_slab()
    sq = unit_square()
    col_slab = sample(slab, 12, 6, int(rng.integers(0, 2**31)))
    col_sq = sample(sq, 12, 6, int(rng.integers(0, 2**31)))
    col_sq_interior = sample(sq, 12, 0, int(rng.integers(0, 2**31)))
    cutoff = sq.cutoff(0.2)
    return [
        ("heat", LossSpec("pinn", col_slab, operator=heat_operator(1.0), robin=RobinSpec(1.0, 0.5), f=0.3, g=0.1)),
        ("burgers", LossSpec("pinn", col_slab, operator=NonlinearOperatorSpec("burgers"),
                             g=builtin_field("neg_sin_pi_x"))),
        ("p_laplace", LossSpec("pinn", col_sq_interior,
                               operator=NonlinearOperatorSpec("p_laplace", p=3.0, q=1.0, reaction=reaction_cubic()),
                               f=1.0, cutoff=cutoff)),
        ("quasilinear", LossSpec("pinn", col_sq, operator=NonlinearOperatorSpec("quasilinear", reaction=reaction_zero()),
                                 robin=RobinSpec(1.0, 1.0), f=1.0)),
        ("ritz_p", LossSpec("ritz", col_sq_interior, energy=EnergySpec("p_laplace", p=3.0, f=1.0), cutoff=cutoff)),
        ("ritz_allen_cahn", LossSpec("ritz", col_sq, energy=EnergySpec("allen_cahn", epsilon=0.1), g=1.0, lam=2.0)),
    ]


def suite_loss_gradients(seed: int) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for name, spec in _gradient_cases(rng):
        ev = LossEvaluator(spec)
        for trainable in (TRAINABLE_OUTER, TRAINABLE_FULL):
            params = _random_params(rng, 5, spec.d, SCALING_PLAIN, trainable)
            params = params.with_outer(0.5 * params.a)
            theta = params.trainable_vector()
            g = ev.gradient(params)
            fd = fd_gradient(lambda v: ev.loss(params.with_trainable_vector(v)), theta)
            err = float(np.linalg.norm(g - fd)) / max(1.0, float(np.linalg.norm(fd)))
            worst = max(worst, err)
            if err >= 1e-6:
                logger.warning("gradient mismatch for %s/%s: %.2e", name, trainable, err)
    return worst < 1e-6, f"max relative gradient error {worst:.2e}"


def ode_decay_trace(eps: float, T: float = 200.0, dt: float = 0.01, stride: int = 10) -> TrainingTrace:
    """
    Trace of z' = -z^(2(1 - eps)), z(0) = 1, integrated by classical RK4.

    This is the loss decay a Lojasiewicz exponent eps produces; eps = 1/2 gives
    z' = -z.
    """
    power = 2.0 * (1.0 - float(eps))

    def rhs(z: float) -> float:
        return -(z ** power)

    tr = TrainingTrace()
    z = 1.0
    n = int(round(T / dt))
    tr.append(TraceRecord(0, 0.0, z, 0.0, 0.0))
    for k in range(1, n + 1):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * dt * k1)
        k3 = rhs(z + 0.5 * dt * k2)
        k4 = rhs(z + dt * k3)
        z += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if k % stride == 0:
            tr.append(TraceRecord(k, k * dt, z, 0.0, 0.0))
    return tr


def suite_rate_fit(seed: int) -> Tuple[bool, str]:
    details = []
    ok = True
    for eps in (0.1, 0.25, 0.4):
        fit = fit_rate(ode_decay_trace(eps), loss_floor=0.0)
        good = fit.regime == "power" and fit.epsilon is not None and abs(fit.epsilon - eps) <= 0.1 * eps
        ok &= good
        details.append(f"eps={eps}: {fit.regime} {fit.epsilon}")
    fit = fit_rate(ode_decay_trace(0.5, T=20.0), loss_floor=0.0)
    ok &= fit.regime == "exponential"
    details.append(f"eps=0.5: {fit.regime}")
    return ok, "; ".join(details)


def suite_coercivity(seed: int, trials: int = 20, m: int = 10) -> Tuple[bool, str]:
    if m < 2:
        raise ValueError("the duplicated-neuron control needs m >= 2")
    sq = Domain(kind="hyperrectangle", lo=(-4.0, 0.0), hi=(4.0, 1.0), gamma_axis=1)
    lam_min = math.inf
    failures = 0
    for trial in range(trials):
        params = initialize(InitScheme(INIT_RANDOM_FEATURE, seed=seed + trial), m, 2)
        rng = np.random.default_rng(seed + trial)
        for robin in (RobinSpec(1.0, 0.0), RobinSpec(0.0, 1.0), RobinSpec(1.0, 1.0)):
            cert = domain_coercivity_certificate(params, sq, robin, seed=seed + trial)
            lam_min = min(lam_min, cert.lambda_min)
            if cert.flagged or not all(cert.bound_holds(a) for a in rng.standard_normal((100, m))):
                failures += 1
    p = initialize(InitScheme(INIT_RANDOM_FEATURE, seed=seed), m, 2)
    w, b = p.w.copy(), p.b.copy()
    w[1], b[1] = w[0], b[0]
    dup = domain_coercivity_certificate(p.replace(w=w, b=b), sq, RobinSpec(1.0, 0.0), seed=seed,
                                        require_admissible=False)
    ok = failures == 0 and dup.flagged
    return ok, f"{failures} failing case(s), min lambda {lam_min:.2e}, duplicate lambda {dup.lambda_min:.2e}"


def suite_independence(seed: int, trials: int = 100, m: int = 20) -> Tuple[bool, str]:
    if m < 2:
        raise ValueError("the duplicate-point control needs m >= 2")
    sq = unit_square()
    axis = sq.flat_segment().axis
    singular = 0
    for trial in range(trials):
        params = initialize(InitScheme(INIT_SMALL_NORMAL, seed=seed + trial, delta=1e-2, normal_axis=axis), m, 2)
        sign, _ = discrete_independence_logdet(params, sample_flat_segment(sq, m, seed + trial).points)
        singular += int(sign == 0.0)
    params = initialize(InitScheme(INIT_SMALL_NORMAL, seed=seed, delta=1e-2, normal_axis=axis), m, 2)
    pts = sample_flat_segment(sq, m, seed).points
    pts[1] = pts[0]
    control, _ = discrete_independence_logdet(params, pts)
    return singular == 0 and control == 0.0, f"{singular} singular trial(s), duplicate-point sign {control}"


def suite_igd(seed: int) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    opts = LbfgsOptions(max_iters=50, grad_tol=1e-13)
    for eta in (0.1, 0.5, 2.0):
        theta = rng.standard_normal(8)
        nxt, step = igd_step(QuadraticObjective(), theta, eta, opts)
        worst = max(worst, float(np.max(np.abs(nxt - theta / (1.0 + eta)))))
    return worst < 1e-10, f"max deviation from theta/(1+eta) {worst:.2e}"


def suite_monotone(seed: int, trials: int = 50) -> Tuple[bool, str]:
    sq = unit_square()
    cutoff = sq.cutoff(0.1)
    rule = tensor_gauss_rule(sq, n_per_panel=8, margin_fraction=0.1)
    ops = [NonlinearOperatorSpec("p_laplace", p=p, q=1.0, reaction=reaction_cubic()) for p in (2.0, 3.0, 4.0)]
    ops.append(NonlinearOperatorSpec("quasilinear", q=1.0, reaction=reaction_zero()))
    rng = np.random.default_rng(seed + 3)
    bad = 0
    for trial in range(trials):
        params = _random_params(rng, 10, 2, SCALING_PLAIN, TRAINABLE_OUTER)
        for op in ops:
            bad += int(not interior_monotone_control(op, cutoff, params, rule).ok)
    return bad == 0, f"{bad} violation(s) over {trials * len(ops)} case(s)"


def _closed_form_min(M: np.ndarray) -> float:
    if M.shape[0] == 2:
        a, b, c = M[0, 0], M[0, 1], M[1, 1]
        return 0.5 * (a + c) - math.hypot(0.5 * (a - c), b)
    # trigonometric roots of the symmetric 3x3 characteristic polynomial
    q = np.trace(M) / 3.0
    p1 = M[0, 1] ** 2 + M[0, 2] ** 2 + M[1, 2] ** 2
    p2 = (M[0, 0] - q) ** 2 + (M[1, 1] - q) ** 2 + (M[2, 2] - q) ** 2 + 2.0 * p1
    p = math.sqrt(p2 / 6.0)
    if p == 0.0:
        return float(q)
    B = (M - q * np.eye(3)) / p
    r = min(1.0, max(-1.0, float(np.linalg.det(B)) / 2.0))
    phi = math.acos(r) / 3.0
    return float(q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0))


def suite_eigen(seed: int, n: int = 1000) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed + 4)
    worst = 0.0
    for k in range(n):
        size = 2 + k % 2
        A = rng.standard_normal((size, size))
        M = A + A.T
        err = abs(min_eigenvalue(M) - _closed_form_min(M)) / max(1.0, float(np.max(np.abs(M))))
        worst = max(worst, err)
    return worst < 1e-10, f"max deviation {worst:.2e}"


def suite_burgers_reference(seed: int) -> Tuple[bool, str]:
    rng = np.random.default_rng(seed + 5)
    ts = rng.uniform(0.05, 1.0, 20)
    xs = rng.uniform(-1.0, 1.0, 20)
    odd = np.max(np.abs(burgers_reference(np.stack([ts, xs], 1)) + burgers_reference(np.stack([ts, -xs], 1))))
    centre = np.max(np.abs(burgers_reference(np.stack([ts, np.zeros_like(ts)], 1))))
    fd = burgers_crank_nicolson(t_final=0.5)
    diff = abs(burgers_reference([0.5, 0.25]) - float(fd.value(0.25)))
    ok = odd < 1e-10 and centre < 1e-10 and diff < 1e-4
    return ok, f"odd symmetry {odd:.1e}, u(t,0) {centre:.1e}, Crank-Nicolson diff {diff:.2e}"


SUITES: Dict[str, Callable[[int], Tuple[bool, str]]] = {
    "derivatives": suite_derivatives,
    "loss_gradients": suite_loss_gradients,
    "rate_fit": suite_rate_fit,
    "coercivity": suite_coercivity,
    "independence": suite_independence,
    "igd": suite_igd,
    "monotone": suite_monotone,
    "eigen": suite_eigen,
    "burgers_reference": suite_burgers_reference,
}


def run_selftest(only: Optional[Sequence[str]] = None, seed: int = 0) -> SelftestReport:
    names = list(only) if only else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown selftest suite(s) {unknown}; available: {sorted(SUITES)}")
    report = SelftestReport()
    for name in names:
        t0 = time.monotonic()
        try:
            passed, detail = SUITES[name](seed)
        except Exception as e:  # a crashing suite is a failed suite
            logger.exception("suite %s raised", name)
            passed, detail = False, f"{type(e).__name__}: {e}"
        report.results.append(SelftestResult(name, bool(passed), detail, time.monotonic() - t0))
        logger.info("%s %s: %s", "PASS" if passed else "FAIL", name, detail)
    return report
