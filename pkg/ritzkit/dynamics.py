# ritzkit/dynamics.py
"""
Training dynamics over the trainable vector theta:

  gradient_flow   theta' = -grad J(theta), classical RK4 with halve-on-increase
  gd_step         theta - eta * grad J(theta)
  igd_step        argmin J(theta) + |theta - theta_k|^2 / (2 eta), solved by L-BFGS
  train           outer loop for gd / igd with trace recording and callbacks
  fit_rate        power-law vs exponential fit of the loss gap on the trace tail
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Tuple, Union

import numpy as np
from tqdm import tqdm

from .domain import NetworkParams
from .errors import InsufficientTraceError, NumericalError, StepUnderflowError
from .loss import LossEvaluator, LossSpec
from .quasi_newton import LbfgsOptions, lbfgs_minimize

logger = logging.getLogger(__name__)

DESCENT_SLACK = 1e-10
UNDERFLOW_FRACTION = 1e-12

SCHEME_GRADIENT_FLOW = "gradient_flow"
SCHEME_GD = "gd"
SCHEME_IGD = "igd"
SCHEMES = (SCHEME_GRADIENT_FLOW, SCHEME_GD, SCHEME_IGD)


# -----------------------------
# Objectives
# -----------------------------

class Objective(Protocol):
    def value_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        ...

    def a_norm(self, theta: np.ndarray) -> float:
        ...


class PdeObjective:
    """LossEvaluator seen as a function of the trainable vector."""

    def __init__(self, evaluator: LossEvaluator, template: NetworkParams):
        self.evaluator = evaluator
        self.template = template

    def params(self, theta: np.ndarray) -> NetworkParams:
        return self.template.with_trainable_vector(theta)

    def value_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        return self.evaluator.value_and_grad(self.params(theta))

    def a_norm(self, theta: np.ndarray) -> float:
        # a always leads the trainable vector
        return float(np.linalg.norm(theta[: self.template.m]))


class QuadraticObjective:
    """J(theta) = 1/2 theta^T A theta - c^T theta (A = I by default)."""

    def __init__(self, A: Optional[np.ndarray] = None, c: Optional[np.ndarray] = None):
        self.A = None if A is None else np.asarray(A, dtype=np.float64)
        self.c = None if c is None else np.asarray(c, dtype=np.float64)

    def value_and_grad(self, theta: np.ndarray) -> Tuple[float, np.ndarray]:
        At = theta if self.A is None else self.A @ theta
        val = 0.5 * float(theta @ At)
        grad = At.copy()
        if self.c is not None:
            val -= float(self.c @ theta)
            grad = grad - self.c
        return val, grad

    def a_norm(self, theta: np.ndarray) -> float:
        return float(np.linalg.norm(theta))


ObjectiveLike = Union[Objective, LossSpec, LossEvaluator]
StateLike = Union[np.ndarray, NetworkParams]


def _bind(objective: ObjectiveLike, state: StateLike):
    """Returns (objective, theta0, finish) where finish maps a vector back to the caller's type."""
    if isinstance(objective, LossSpec):
        objective = LossEvaluator(objective)
    if isinstance(objective, LossEvaluator):
        if not isinstance(state, NetworkParams):
            raise TypeError("a loss needs NetworkParams as the starting point")
        obj = PdeObjective(objective, state)
        return obj, state.trainable_vector(), obj.params
    if isinstance(state, NetworkParams):
        return objective, state.trainable_vector(), state.with_trainable_vector
    theta = np.array(state, dtype=np.float64).reshape(-1)
    return objective, theta, lambda v: v


def _check_finite(value: float, grad: np.ndarray, where: str) -> None:
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite loss or gradient during {where}")


# -----------------------------
# Traces
# -----------------------------

@dataclass
class TraceRecord:
    step: int
    time: float
    loss: float
    grad_norm: float
    a_norm: float
    dist_to_final: Optional[float] = None


@dataclass
class TrainingTrace:
    records: List[TraceRecord] = field(default_factory=list)
    metadata: Dict = field(default_factory=dict)
    iterates: Optional[List[np.ndarray]] = None

    def append(self, rec: TraceRecord, theta: Optional[np.ndarray] = None) -> None:
        self.records.append(rec)
        if self.iterates is not None and theta is not None:
            self.iterates.append(np.array(theta, copy=True))

    def __len__(self) -> int:
        return len(self.records)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def a_norms(self) -> np.ndarray:
        return np.array([r.a_norm for r in self.records])

    def is_monotone(self, slack: float = DESCENT_SLACK) -> bool:
        J = self.losses()
        return bool(np.all(np.diff(J) <= slack)) if J.size > 1 else True

    def backfill_distance(self, theta_final: np.ndarray) -> None:
        if self.iterates is None:
            raise ValueError("trace was recorded without iterates")
        for rec, th in zip(self.records, self.iterates):
            rec.dist_to_final = float(np.linalg.norm(th - theta_final))

    @property
    def has_distance(self) -> bool:
        return bool(self.records) and all(r.dist_to_final is not None for r in self.records)


# -----------------------------
# Gradient flow
# -----------------------------

def _rk4(objective: Objective, theta: np.ndarray, g0: np.ndarray, h: float) -> np.ndarray:
    k1 = -g0
    k2 = -objective.value_and_grad(theta + 0.5 * h * k1)[1]
    k3 = -objective.value_and_grad(theta + 0.5 * h * k2)[1]
    k4 = -objective.value_and_grad(theta + h * k3)[1]
    return theta + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def gradient_flow(
    objective: ObjectiveLike,
    params0: StateLike,
    T: float,
    dt: float,
    record_stride: int = 1,
    loss_drop: Optional[float] = None,
    keep_iterates: bool = False,
    callback: Optional[Callable[[int, float, np.ndarray], None]] = None,
    progress: bool = False,
):
    """
    Integrates theta' = -grad J up to time T.

    A step that raises J by more than 1e-10 is retried with half the step;
    the step doubles back toward dt after each accepted step. With loss_drop
    the run stops once J <= J(0) / loss_drop. A NumericalError carries the
    state reached so far as err.partial.
    """
    if not dt > 0 or not T > 0:
        raise ValueError("gradient flow needs dt > 0 and T > 0")
    obj, theta, finish = _bind(objective, params0)
    stride = max(1, int(record_stride))
    trace = TrainingTrace(
        metadata={"scheme": SCHEME_GRADIENT_FLOW, "dt": float(dt), "T": float(T)},
        iterates=[] if keep_iterates else None,
    )
    J, g = obj.value_and_grad(theta)
    _check_finite(J, g, "gradient flow")
    J0 = J
    trace.append(TraceRecord(0, 0.0, J, float(np.linalg.norm(g)), obj.a_norm(theta)), theta)

    t, k, h = 0.0, 0, float(dt)
    halvings = 0
    bar = tqdm(total=float(T), desc="gradient flow", disable=not progress, leave=False)
    try:
        while t < T * (1.0 - 1e-14):
            step = min(h, T - t)
            while True:
                cand = _rk4(obj, theta, g, step)
                Jc, gc = obj.value_and_grad(cand)
                if math.isfinite(Jc) and Jc <= J + DESCENT_SLACK:
                    break
                step *= 0.5
                halvings += 1
                if step < UNDERFLOW_FRACTION * dt:
                    raise StepUnderflowError(f"gradient flow step fell below {UNDERFLOW_FRACTION:g} * dt at t={t!r}")
            _check_finite(Jc, gc, "gradient flow")
            theta, J, g = cand, Jc, gc
            t += step
            k += 1
            h = min(float(dt), 2.0 * step)
            bar.update(step)
            stop = loss_drop is not None and J <= J0 / float(loss_drop)
            last = stop or t >= T * (1.0 - 1e-14)
            if k % stride == 0 or last:
                trace.append(TraceRecord(k, t, J, float(np.linalg.norm(g)), obj.a_norm(theta)), theta)
            if callback is not None:
                callback(k, t, theta)
            if stop:
                break
    except NumericalError as err:
        trace.metadata["steps"] = k
        err.partial = TrainResult(finish(theta), theta, trace, StepStats())  # type: ignore[attr-defined]
        raise
    finally:
        bar.close()
    if halvings:
        logger.warning("gradient flow halved its step %d time(s)", halvings)
    trace.metadata["steps"] = k
    trace.metadata["halvings"] = halvings
    return finish(theta), trace


# -----------------------------
# Discrete steps
# -----------------------------

@dataclass
class ProximalStep:
    theta: np.ndarray
    loss: float
    grad: np.ndarray
    converged: bool
    failed: bool
    inner_iterations: int
    fixed_point_residual: float


def _prox_step(obj: Objective, theta_k: np.ndarray, J_k: float, g_k: np.ndarray, eta: float, inner: LbfgsOptions) -> ProximalStep:
    inv = 1.0 / eta

    def prox(theta):
        J, g = obj.value_and_grad(theta)
        diff = theta - theta_k
        return J + 0.5 * inv * float(diff @ diff), g + inv * diff

    res = lbfgs_minimize(prox, theta_k, inner, start=(J_k, g_k))
    if not res.improved:
        logger.warning("implicit step found no improving inner step; keeping theta_k")
        return ProximalStep(
            theta=theta_k.copy(),
            loss=J_k,
            grad=g_k,
            converged=False,
            failed=True,
            inner_iterations=res.iterations,
            fixed_point_residual=float(eta * np.linalg.norm(g_k)),
        )
    diff = res.x - theta_k
    J_new = res.f - 0.5 * inv * float(diff @ diff)
    g_new = res.g - inv * diff
    # theta - theta_k + eta grad J(theta) = eta * grad F(theta)
    return ProximalStep(
        theta=res.x,
        loss=J_new,
        grad=g_new,
        converged=res.converged,
        failed=False,
        inner_iterations=res.iterations,
        fixed_point_residual=float(eta * np.linalg.norm(res.g)),
    )


def igd_step(objective: ObjectiveLike, params_k: StateLike, eta: float, inner: Optional[LbfgsOptions] = None):
    """One implicit step; returns (params_{k+1}, ProximalStep)."""
    if not eta > 0:
        raise ValueError("eta must be > 0")
    obj, theta, finish = _bind(objective, params_k)
    J, g = obj.value_and_grad(theta)
    _check_finite(J, g, "implicit step")
    step = _prox_step(obj, theta, J, g, float(eta), inner or LbfgsOptions())
    return finish(step.theta), step


def gd_step(objective: ObjectiveLike, params_k: StateLike, eta: float):
    if not eta > 0:
        raise ValueError("eta must be > 0")
    obj, theta, finish = _bind(objective, params_k)
    J, g = obj.value_and_grad(theta)
    _check_finite(J, g, "gradient step")
    return finish(theta - float(eta) * g)


# -----------------------------
# Outer loop
# -----------------------------

@dataclass
class StepStats:
    converged: int = 0
    failed: int = 0
    inner_iterations: int = 0
    max_fixed_point_residual: float = 0.0
    max_converged_residual: float = 0.0

    def to_dict(self) -> Dict:
        return {
            "converged_steps": self.converged,
            "failed_steps": self.failed,
            "inner_iterations": self.inner_iterations,
            "max_fixed_point_residual": self.max_fixed_point_residual,
            "max_converged_fixed_point_residual": self.max_converged_residual,
        }


@dataclass
class TrainResult:
    params: StateLike
    theta: np.ndarray
    trace: TrainingTrace
    stats: StepStats


def train(
    objective: ObjectiveLike,
    params0: StateLike,
    scheme: str,
    eta: float,
    steps: int,
    inner: Optional[LbfgsOptions] = None,
    record_stride: int = 1,
    keep_iterates: bool = False,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
    progress: bool = False,
) -> TrainResult:
    """
    Runs `steps` gd or igd steps. Trace time is k * eta.

    On a non-finite loss the NumericalError carries the partial result as
    err.partial (a TrainResult).
    """
    if scheme not in (SCHEME_GD, SCHEME_IGD):
        raise ValueError(f"train supports '{SCHEME_GD}' and '{SCHEME_IGD}', got '{scheme}'")
    if not eta > 0:
        raise ValueError("eta must be > 0")
    obj, theta, finish = _bind(objective, params0)
    opts = inner or LbfgsOptions()
    stride = max(1, int(record_stride))
    trace = TrainingTrace(
        metadata={"scheme": scheme, "eta": float(eta), "steps": int(steps)},
        iterates=[] if keep_iterates else None,
    )
    if scheme == SCHEME_IGD:
        trace.metadata["inner"] = opts.to_dict()
    stats = StepStats()

    J, g = obj.value_and_grad(theta)
    _check_finite(J, g, scheme)
    trace.append(TraceRecord(0, 0.0, J, float(np.linalg.norm(g)), obj.a_norm(theta)), theta)
    if callback is not None:
        callback(0, theta)

    for k in tqdm(range(1, int(steps) + 1), desc=scheme, disable=not progress, leave=False):
        try:
            if scheme == SCHEME_GD:
                theta = theta - float(eta) * g
                J, g = obj.value_and_grad(theta)
            else:
                ps = _prox_step(obj, theta, J, g, float(eta), opts)
                theta, J, g = ps.theta, ps.loss, ps.grad
                stats.inner_iterations += ps.inner_iterations
                stats.max_fixed_point_residual = max(stats.max_fixed_point_residual, ps.fixed_point_residual)
                if ps.failed:
                    stats.failed += 1
                elif ps.converged:
                    stats.converged += 1
                    stats.max_converged_residual = max(stats.max_converged_residual, ps.fixed_point_residual)
            _check_finite(J, g, scheme)
        except NumericalError as err:
            err.partial = TrainResult(finish(theta), theta, trace, stats)  # type: ignore[attr-defined]
            raise
        if k % stride == 0 or k == int(steps):
            trace.append(TraceRecord(k, k * float(eta), J, float(np.linalg.norm(g)), obj.a_norm(theta)), theta)
        if callback is not None:
            callback(k, theta)

    if stats.failed:
        logger.warning("%d implicit step(s) failed to improve the proximal objective", stats.failed)
    return TrainResult(params=finish(theta), theta=theta, trace=trace, stats=stats)


# -----------------------------
# Rate fitting
# -----------------------------

REGIME_POWER = "power"
REGIME_EXPONENTIAL = "exponential"
REGIME_UNDETERMINED = "undetermined"

FLAT_GAP = 1e-14


@dataclass
class RateFit:
    regime: str
    epsilon: Optional[float]
    C: Optional[float]
    r2: Optional[float]
    slope: Optional[float] = None
    r2_power: Optional[float] = None
    r2_exponential: Optional[float] = None
    tail_start: Optional[float] = None
    tail_points: int = 0
    loss_floor: Optional[float] = None
    epsilon_distance: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "regime": self.regime,
            "epsilon": self.epsilon,
            "C": self.C,
            "r2": self.r2,
            "slope": self.slope,
            "r2_power": self.r2_power,
            "r2_exponential": self.r2_exponential,
            "tail_start": self.tail_start,
            "tail_points": self.tail_points,
            "loss_floor": self.loss_floor,
            "epsilon_distance": self.epsilon_distance,
        }


def _linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """(slope, intercept, R^2) of the least-squares line."""
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _epsilon_from_loss_slope(slope: float) -> float:
    # J - J* ~ t^{-1/(1 - 2 eps)}
    kappa = -slope
    eps = 0.5 * (1.0 - 1.0 / kappa) if kappa > 0 else 0.0
    return float(min(max(eps, 1e-6), 0.5 - 1e-9))


def fit_rate(
    trace: TrainingTrace,
    theta_final: Optional[np.ndarray] = None,
    loss_floor: Optional[float] = None,
    tail_fraction: float = 0.5,
    min_tail: int = 50,
    exclude_fraction: float = 0.05,
) -> RateFit:
    """
    Fits log(J - J*) against log t and against t on the tail window and keeps
    the better R^2 (ties go to exponential).

    J* is loss_floor when known; otherwise the final loss, in which case the
    last exclude_fraction of the records is dropped. When the trace holds
    iterates (or back-filled distances), the distance-to-final power law gives
    epsilon_distance.
    """
    recs = list(trace.records)
    if len(recs) < min_tail:
        raise InsufficientTraceError(f"rate fit needs >= {min_tail} records, got {len(recs)}")

    if theta_final is not None and trace.iterates is not None and not trace.has_distance:
        trace.backfill_distance(np.asarray(theta_final))

    floor = loss_floor
    if floor is None:
        floor = recs[-1].loss
        keep = len(recs) - int(math.ceil(exclude_fraction * len(recs)))
        recs = recs[:keep]

    n_tail = min(len(recs), max(int(min_tail), int(math.ceil(tail_fraction * len(recs)))))
    if n_tail < min_tail:
        raise InsufficientTraceError(f"tail window has {n_tail} records, need {min_tail}")
    tail = recs[-n_tail:]
    t = np.array([r.time for r in tail])
    z = np.array([r.loss for r in tail]) - float(floor)

    if float(np.max(np.abs(z))) < FLAT_GAP:
        return RateFit(regime=REGIME_UNDETERMINED, epsilon=None, C=None, r2=None,
                       tail_points=n_tail, loss_floor=float(floor))
    ok = (z > 0.0) & (t > 0.0)
    if int(ok.sum()) < 3:
        return RateFit(regime=REGIME_UNDETERMINED, epsilon=None, C=None, r2=None,
                       tail_points=int(ok.sum()), loss_floor=float(floor))
    t, logz = t[ok], np.log(z[ok])

    sp, ip, r2p = _linear_fit(np.log(t), logz)
    se, ie, r2e = _linear_fit(t, logz)

    eps_dist = None
    dist_recs = [r for r in tail if r.dist_to_final is not None and r.dist_to_final > 0 and r.time > 0]
    if len(dist_recs) >= 3:
        sd, _, _ = _linear_fit(
            np.log([r.time for r in dist_recs]), np.log([r.dist_to_final for r in dist_recs])
        )
        kappa = -sd
        if kappa > 0:
            eps_dist = float(min(kappa / (1.0 + 2.0 * kappa), 0.5))

    common = dict(
        r2_power=r2p,
        r2_exponential=r2e,
        tail_start=float(tail[0].time),
        tail_points=int(t.size),
        loss_floor=float(floor),
        epsilon_distance=eps_dist,
    )
    if r2e >= r2p:
        return RateFit(regime=REGIME_EXPONENTIAL, epsilon=0.5, C=float(math.exp(ie)), r2=r2e, slope=se, **common)
    return RateFit(
        regime=REGIME_POWER,
        epsilon=_epsilon_from_loss_slope(sp),
        C=float(math.exp(ip)),
        r2=r2p,
        slope=sp,
        **common,
    )


@dataclass
class DecayFit:
    rate: float
    r2: float
    t_end: float
    points: int

    def to_dict(self) -> Dict:
        return {"rate": self.rate, "r2": self.r2, "t_end": self.t_end, "points": self.points}


def fit_log_linear_decay(trace: TrainingTrace, decades: float = 1.0) -> DecayFit:
    """Linear fit of log J vs t from the start until J has dropped by 10**decades."""
    J = trace.losses()
    t = trace.times()
    if J.size == 0 or not J[0] > 0:
        raise InsufficientTraceError("decay fit needs a positive initial loss")
    target = J[0] * 10.0 ** (-float(decades))
    hit = np.nonzero(J <= target)[0]
    end = int(hit[0]) + 1 if hit.size else J.size
    sel = slice(0, end)
    Js, ts = J[sel], t[sel]
    pos = Js > 0
    if int(pos.sum()) < 3:
        raise InsufficientTraceError("decay fit needs at least 3 records in the first decade")
    slope, _, r2 = _linear_fit(ts[pos], np.log(Js[pos]))
    return DecayFit(rate=-slope, r2=r2, t_end=float(ts[-1]), points=int(pos.sum()))
