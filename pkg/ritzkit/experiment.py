# ritzkit/experiment.py
"""
Experiment configs and the drivers behind the command line.

A config is a JSON document validated against configs/experiment.schema.json.
One epoch of the IGD scheme is one outer proximal step.
"""
from __future__ import annotations

import copy
import logging
import math
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .diagnostics import (
    GramMatrix,
    GramTracker,
    PROVENANCE_FULL_A,
    discrete_independence_logdet,
    domain_coercivity_certificate,
    gamma_rule_size,
    gram_full,
    interior_monotone_control,
    min_eigenvalue,
)
from .domain import MultiIndex, NetworkParams, TRAINABLE_FULL
from .dynamics import (
    SCHEME_GRADIENT_FLOW,
    SCHEME_IGD,
    PdeObjective,
    RateFit,
    REGIME_UNDETERMINED,
    StepStats,
    TrainingTrace,
    fit_log_linear_decay,
    fit_rate,
    gradient_flow,
    train,
)
from .errors import (
    AdmissibilityError,
    ConfigError,
    DimensionMismatchError,
    InsufficientTraceError,
    NumericalError,
    UnknownExpressionError,
)
from .geometry import (
    STREAM_AUDIT,
    CollocationSet,
    Domain,
    InitScheme,
    INIT_RANDOM_FEATURE,
    INIT_SMALL_NORMAL,
    PRNG_IDENTITY,
    check_admissible,
    initialize,
    sample,
    sample_flat_segment,
    stream_generator,
    tensor_gauss_rule,
)
from .loss import LOSS_PINN, LOSS_RITZ, LossEvaluator, LossSpec
from .operators import (
    BURGERS_NU,
    CutoffSpec,
    EnergySpec,
    LinearOperatorSpec,
    NonlinearOperatorSpec,
    RobinSpec,
    ansatz_jet,
    builtin_field,
    operator_from_dict,
)
from .persistence import (
    AUDIT_FILENAME,
    COERCIVITY_FILENAME,
    COMPARE_FILENAME,
    GRAM_DRIFT_FILENAME,
    LOG_FILENAME,
    METADATA_FILENAME,
    PARAMS_FINAL_FILENAME,
    PARAMS_INIT_FILENAME,
    RATE_FIT_FILENAME,
    SUMMARY_FILENAME,
    TRACE_FILENAME,
    load_params,
    load_trace_csv,
    read_json,
    run_path,
    save_collocation_csv,
    save_compare_csv,
    save_gram_drift_csv,
    save_params,
    save_reference_grid_csv,
    save_trace_csv,
    write_json,
)
from .quasi_newton import LbfgsOptions
from .reference_solutions import ManufacturedProblem, ReferenceField, manufactured_linear, reference_grid

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "configs")
SCHEMA_PATH = os.path.join(CONFIG_DIR, "experiment.schema.json")

MANUFACTURED_PREFIX = "manufactured:"
RUN_PREFIX = "run:"
DEFAULT_SLICES = (0.25, 0.5, 0.75)
A_NORM_STABILITY = 1.01

INNER_DEFAULTS = {"max_iters": 10, "grad_tol": 1e-8, "memory": 10}
DYNAMICS_DEFAULTS = {"record_stride": 1, "loss_drop": None}
DIAGNOSTICS_DEFAULTS = {
    "gram_stride": 0,
    "gram_eigenvalues": False,
    "rate_fit": True,
    "loss_floor": None,
    "keep_iterates": False,
    "coercivity_audit": False,
    "init_spectrum": False,
    "decay_fit": False,
    "monotone_control": False,
}
AUDIT_DEFAULTS = {
    "trials": 20,
    "m": 10,
    "robins": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
    "random_vectors": 100,
    "adversarial": True,
    "independence_trials": 100,
    "independence_m": 20,
    "independence_delta": 1e-2,
}


# -----------------------------
# Config loading
# -----------------------------

def resolve_config_path(path: str) -> str:
    """A path on disk, or the name of a bundled config (with or without .json)."""
    if os.path.isfile(path):
        return path
    for cand in (path, path + ".json"):
        bundled = os.path.join(CONFIG_DIR, os.path.basename(cand))
        if os.path.isfile(bundled) and not bundled.endswith(".schema.json"):
            return bundled
    raise ConfigError(f"config not found: {path}")


def bundled_configs() -> List[str]:
    return sorted(
        os.path.splitext(n)[0]
        for n in os.listdir(CONFIG_DIR)
        if n.endswith(".json") and not n.endswith(".schema.json")
    )


def validate_config(raw: Dict) -> None:
    import jsonschema

    try:
        schema = read_json(SCHEMA_PATH)
        jsonschema.validate(instance=raw, schema=schema)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config violates schema at {where}: {e.message}") from e

    problem = raw["problem"]
    method = problem["method"]
    if method == LOSS_PINN and "operator" not in problem:
        raise ConfigError("pinn problems need problem.operator")
    if method == LOSS_RITZ and "energy" not in problem:
        raise ConfigError("ritz problems need problem.energy")
    if int(raw["collocation"]["n_boundary"]) == 0 and not problem.get("cutoff"):
        raise ConfigError("n_boundary = 0 needs a cutoff to enforce the boundary condition")

    dyn = raw["dynamics"]
    if dyn["scheme"] == SCHEME_GRADIENT_FLOW:
        missing = [k for k in ("dt", "horizon") if k not in dyn]
    else:
        missing = [k for k in ("eta", "steps") if k not in dyn]
    if missing:
        raise ConfigError(f"dynamics scheme '{dyn['scheme']}' needs {missing}")

    op = problem.get("operator") or {}
    if op.get("kind") == "linear" and not op.get("terms"):
        raise ConfigError("linear operator needs at least one term")
    uses_manufactured = any(
        isinstance(problem.get(k), str) and problem[k].startswith(MANUFACTURED_PREFIX) for k in ("f", "g")
    )
    if uses_manufactured and (method != LOSS_PINN or op.get("kind") != "linear"):
        raise ConfigError("manufactured fields need a pinn problem with a linear operator")


@dataclass
class ExperimentConfig:
    name: str
    domain: Domain
    n_interior: int
    n_boundary: int
    m: int
    init: Dict
    problem: Dict
    dynamics: Dict
    diagnostics: Dict = field(default_factory=dict)
    audit: Dict = field(default_factory=dict)
    seed: int = 0
    description: str = ""
    output_dir: Optional[str] = None
    source: Optional[str] = None

    @staticmethod
    def from_dict(raw: Dict, seed: Optional[int] = None, source: Optional[str] = None) -> "ExperimentConfig":
        validate_config(raw)
        try:
            domain = Domain.from_dict(raw["domain"])
        except (KeyError, ValueError) as e:
            raise ConfigError(f"invalid domain: {e}") from e

        dyn = dict(DYNAMICS_DEFAULTS)
        dyn.update(copy.deepcopy(raw["dynamics"]))
        inner = dict(INNER_DEFAULTS)
        inner.update(dyn.get("inner") or {})
        dyn["inner"] = inner
        diag = dict(DIAGNOSTICS_DEFAULTS)
        diag.update(raw.get("diagnostics") or {})
        audit = dict(AUDIT_DEFAULTS)
        audit.update(raw.get("audit") or {})

        return ExperimentConfig(
            name=str(raw["name"]),
            domain=domain,
            n_interior=int(raw["collocation"]["n_interior"]),
            n_boundary=int(raw["collocation"]["n_boundary"]),
            m=int(raw["network"]["m"]),
            init=dict(raw["network"]["init"]),
            problem=copy.deepcopy(raw["problem"]),
            dynamics=dyn,
            diagnostics=diag,
            audit=audit,
            seed=int(seed if seed is not None else raw.get("seed", 0)),
            description=str(raw.get("description", "")),
            output_dir=raw.get("output_dir"),
            source=source,
        )

    def to_dict(self) -> Dict:
        """The resolved config (defaults filled in, seed after overrides)."""
        out = {
            "name": self.name,
            "description": self.description,
            "seed": self.seed,
            "domain": self.domain.to_dict(),
            "collocation": {"n_interior": self.n_interior, "n_boundary": self.n_boundary},
            "network": {"m": self.m, "init": dict(self.init)},
            "problem": copy.deepcopy(self.problem),
            "dynamics": copy.deepcopy(self.dynamics),
            "diagnostics": dict(self.diagnostics),
            "audit": copy.deepcopy(self.audit),
        }
        if self.output_dir:
            out["output_dir"] = self.output_dir
        return out


def load_config(path: str, seed: Optional[int] = None) -> ExperimentConfig:
    resolved = resolve_config_path(path)
    try:
        raw = read_json(resolved)
    except ValueError as e:
        raise ConfigError(f"{resolved} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{resolved} must hold a JSON object")
    return ExperimentConfig.from_dict(raw, seed=seed, source=os.path.abspath(resolved))


# -----------------------------
# Problem assembly
# -----------------------------

@dataclass
class Problem:
    config: ExperimentConfig
    collocation: CollocationSet
    params0: NetworkParams
    spec: LossSpec
    evaluator: LossEvaluator
    robin: RobinSpec
    cutoff: Optional[CutoffSpec] = None
    manufactured: Optional[ManufacturedProblem] = None


def _cutoff_from(domain: Domain, cfg: Optional[Dict]) -> Optional[CutoffSpec]:
    if not cfg:
        return None
    return domain.cutoff(float(cfg.get("margin_fraction", 0.1)), int(cfg.get("smoothness", 2)))


def _manufactured_id(problem: Dict) -> Optional[str]:
    ids = {
        problem[k][len(MANUFACTURED_PREFIX):]
        for k in ("f", "g")
        if isinstance(problem.get(k), str) and problem[k].startswith(MANUFACTURED_PREFIX)
    }
    if len(ids) > 1:
        raise ConfigError(f"f and g name different manufactured solutions: {sorted(ids)}")
    return ids.pop() if ids else None


def _field(value, manufactured: Optional[ManufacturedProblem], role: str):
    if isinstance(value, str) and value.startswith(MANUFACTURED_PREFIX):
        return getattr(manufactured, role)
    return builtin_field(value)


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Samples collocation points, initializes the network and assembles the loss."""
    try:
        domain = cfg.domain
        collocation = sample(domain, cfg.n_interior, cfg.n_boundary, cfg.seed)
        params0 = initialize(InitScheme.from_dict(cfg.init, seed=cfg.seed), cfg.m, domain.d)
        prob = cfg.problem
        robin = RobinSpec.from_dict(prob.get("robin") or {})
        cutoff = _cutoff_from(domain, prob.get("cutoff"))

        operator, energy, manufactured = None, None, None
        if prob["method"] == LOSS_PINN:
            operator = operator_from_dict(prob["operator"])
            if isinstance(operator, LinearOperatorSpec) and operator.dim != domain.d:
                raise DimensionMismatchError(f"operator acts in d={operator.dim}, domain has d={domain.d}")
            if isinstance(operator, NonlinearOperatorSpec) and operator.kind == "burgers" and domain.d != 2:
                raise DimensionMismatchError("Burgers problems live on (t, x) with d = 2")
            expr = _manufactured_id(prob)
            if expr is not None:
                manufactured = manufactured_linear(expr, domain, operator, robin)
        else:
            energy = EnergySpec.from_dict(prob["energy"])

        spec = LossSpec(
            kind=prob["method"],
            collocation=collocation,
            operator=operator,
            energy=energy,
            robin=robin,
            f=_field(prob.get("f", 0.0), manufactured, "f"),
            g=_field(prob.get("g", 0.0), manufactured, "g"),
            lam=float(prob.get("lambda", 1.0)),
            cutoff=cutoff,
        )
    except ConfigError:
        raise
    except (KeyError, ValueError) as e:
        raise ConfigError(f"cannot assemble '{cfg.name}': {e}") from e

    return Problem(
        config=cfg,
        collocation=collocation,
        params0=params0,
        spec=spec,
        evaluator=LossEvaluator(spec),
        robin=robin,
        cutoff=cutoff,
        manufactured=manufactured,
    )


# -----------------------------
# run
# -----------------------------

@dataclass
class RunOutcome:
    out_dir: str
    status: str                 # "ok" | "numerical_failure"
    summary: Dict
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _metadata(cfg: ExperimentConfig) -> Dict:
    return {
        "name": cfg.name,
        "config": cfg.to_dict(),
        "config_source": cfg.source,
        "version": __version__,
        "prng": PRNG_IDENTITY,
        "seed": cfg.seed,
        "numpy": np.__version__,
        "epoch_semantics": "one epoch = one outer step",
        "started_at": _now(),
    }


def init_spectrum(problem: Problem) -> Dict:
    """Smallest eigenvalues of the at-init Grams (lambda for G, lambda_tilde for G_tilde)."""
    params = problem.params0
    if params.trainable == TRAINABLE_FULL:
        G, Gt = gram_full(problem.evaluator, params)
        lam = min_eigenvalue(G)
    else:
        rj = problem.evaluator.residual_jacobians(params)
        D = np.vstack([rj.Js, rj.Jh])
        Gt = GramMatrix(D @ D.T, PROVENANCE_FULL_A)
        lam = 0.0
    lam_t = min_eigenvalue(Gt)
    return {"lambda": lam, "lambda_tilde": lam_t, "sum": lam + lam_t, "rows": Gt.n}


def _certificate_payload(problem: Problem) -> Dict:
    cfg = problem.config
    params = problem.params0
    try:
        cert = domain_coercivity_certificate(params, cfg.domain, problem.robin, seed=cfg.seed)
    except AdmissibilityError as e:
        logger.warning("coercivity certificate skipped: %s", e)
        report = check_admissible(params, cfg.domain.flat_segment().axis)
        return {"error": str(e), "admissibility": report.to_dict()}
    return cert.to_dict()


def _a_norm_stats(trace: TrainingTrace) -> Dict:
    a = trace.a_norms()
    if a.size == 0:
        return {"max": None, "last_quartile_max": None, "stable": None}
    tail = a[int(math.floor(0.75 * a.size)):]
    amax, tmax = float(a.max()), float(tail.max())
    return {"max": amax, "last_quartile_max": tmax, "stable": amax <= A_NORM_STABILITY * tmax}


def _rate_fit(trace: TrainingTrace, theta: np.ndarray, diag: Dict) -> Dict:
    if not diag.get("rate_fit", True):
        fit = RateFit(regime=REGIME_UNDETERMINED, epsilon=None, C=None, r2=None)
        return dict(fit.to_dict(), reason="disabled")
    try:
        return fit_rate(trace, theta_final=theta, loss_floor=diag.get("loss_floor")).to_dict()
    except InsufficientTraceError as e:
        fit = RateFit(regime=REGIME_UNDETERMINED, epsilon=None, C=None, r2=None, tail_points=len(trace))
        return dict(fit.to_dict(), reason=str(e))


def _monotone_control(problem: Problem, params: NetworkParams) -> Optional[Dict]:
    op = problem.spec.operator
    if not isinstance(op, NonlinearOperatorSpec) or op.kind == "burgers" or problem.cutoff is None:
        return None
    rule = tensor_gauss_rule(problem.config.domain, margin_fraction=problem.cutoff.margin_fraction)
    return interior_monotone_control(op, problem.cutoff, params, rule).to_dict()


def _write_outputs(
    out: str,
    params: NetworkParams,
    trace: TrainingTrace,
    tracker: Optional[GramTracker],
    rate: Dict,
) -> None:
    save_params(run_path(out, PARAMS_FINAL_FILENAME), params)
    save_trace_csv(run_path(out, TRACE_FILENAME), trace)
    if tracker is not None:
        save_gram_drift_csv(run_path(out, GRAM_DRIFT_FILENAME), tracker.records)
    write_json(run_path(out, RATE_FIT_FILENAME), rate)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None, progress: bool = False) -> RunOutcome:
    out = out_dir or cfg.output_dir or os.path.join("runs", cfg.name)
    os.makedirs(out, exist_ok=True)
    handler = logging.FileHandler(run_path(out, LOG_FILENAME), mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        return _run(cfg, out, progress)
    finally:
        root.removeHandler(handler)
        handler.close()


def _run(cfg: ExperimentConfig, out: str, progress: bool) -> RunOutcome:
    t0 = time.monotonic()
    meta = _metadata(cfg)
    write_json(run_path(out, METADATA_FILENAME), meta)
    logger.info("run '%s' (seed %d) -> %s", cfg.name, cfg.seed, out)

    problem = build_problem(cfg)
    params0 = problem.params0
    save_params(run_path(out, PARAMS_INIT_FILENAME), params0)
    diag, dyn = cfg.diagnostics, cfg.dynamics

    summary: Dict = {
        "name": cfg.name,
        "method": problem.spec.kind,
        "scheme": dyn["scheme"],
        "m": params0.m,
        "n_interior": problem.collocation.n1,
        "n_boundary": problem.collocation.n2,
        "n_trainable": params0.n_trainable,
    }
    if diag["init_spectrum"]:
        summary["init_spectrum"] = init_spectrum(problem)
        logger.info("init spectrum: %s", summary["init_spectrum"])
    if diag["coercivity_audit"]:
        cert = _certificate_payload(problem)
        write_json(run_path(out, COERCIVITY_FILENAME), cert)
        summary["coercivity"] = {k: cert.get(k) for k in ("lambda_min", "C", "flagged", "error") if k in cert}

    tracker = None
    if int(diag["gram_stride"]) > 0 and problem.spec.kind == LOSS_PINN:
        tracker = GramTracker(
            problem.evaluator, stride=int(diag["gram_stride"]), eigenvalues=bool(diag["gram_eigenvalues"])
        )

    objective = PdeObjective(problem.evaluator, params0)
    stats: Optional[StepStats] = None
    try:
        if dyn["scheme"] == SCHEME_GRADIENT_FLOW:
            if tracker is not None:
                tracker.snapshot(0, params0)
            params, trace = gradient_flow(
                objective,
                params0,
                T=float(dyn["horizon"]),
                dt=float(dyn["dt"]),
                record_stride=int(dyn["record_stride"]),
                loss_drop=dyn.get("loss_drop"),
                keep_iterates=bool(diag["keep_iterates"]),
                callback=(lambda k, t, th: tracker.snapshot(k, objective.params(th))) if tracker else None,
                progress=progress,
            )
            theta = params.trainable_vector()
        else:
            inner = dyn["inner"]
            res = train(
                objective,
                params0,
                scheme=dyn["scheme"],
                eta=float(dyn["eta"]),
                steps=int(dyn["steps"]),
                inner=LbfgsOptions(
                    max_iters=int(inner["max_iters"]),
                    grad_tol=float(inner["grad_tol"]),
                    memory=int(inner["memory"]),
                ),
                record_stride=int(dyn["record_stride"]),
                keep_iterates=bool(diag["keep_iterates"]),
                callback=(lambda k, th: tracker.snapshot(k, objective.params(th))) if tracker else None,
                progress=progress,
            )
            params, theta, trace, stats = res.params, res.theta, res.trace, res.stats
    except NumericalError as err:
        logger.error("numerical failure: %s", err)
        partial = getattr(err, "partial", None)
        summary.update({"status": "numerical_failure", "error": str(err)})
        if partial is not None:
            rate = dict(RateFit(REGIME_UNDETERMINED, None, None, None).to_dict(), reason="numerical failure")
            _write_outputs(out, partial.params, partial.trace, tracker, rate)
            summary["records"] = len(partial.trace)
        write_json(run_path(out, SUMMARY_FILENAME), summary)
        meta.update({"finished_at": _now(), "elapsed_seconds": time.monotonic() - t0})
        write_json(run_path(out, METADATA_FILENAME), meta)
        return RunOutcome(out_dir=out, status="numerical_failure", summary=summary, error=str(err))

    rate = _rate_fit(trace, theta, diag)
    _write_outputs(out, params, trace, tracker, rate)

    first, last = trace.records[0], trace.records[-1]
    summary.update({
        "status": "ok",
        "records": len(trace),
        "initial_loss": first.loss,
        "final_loss": last.loss,
        "final_grad_norm": last.grad_norm,
        "final_time": last.time,
        "monotone": trace.is_monotone(),
        "a_norm": _a_norm_stats(trace),
        "quadrature_loss": problem.evaluator.quadrature_loss(params),
        "rate_regime": rate.get("regime"),
    })
    if stats is not None:
        summary["step_stats"] = stats.to_dict()
        if dyn["scheme"] == SCHEME_IGD:
            bound = float(dyn["eta"]) * float(dyn["inner"]["grad_tol"])
            summary["step_stats"]["fixed_point_within_tolerance"] = stats.max_converged_residual <= bound
    else:
        summary["flow"] = {k: trace.metadata.get(k) for k in ("steps", "halvings")}
    if tracker is not None:
        summary["gram"] = tracker.summary()
    if diag["decay_fit"]:
        try:
            decay = fit_log_linear_decay(trace)
            summary["decay_fit"] = decay.to_dict()
            spec = summary.get("init_spectrum")
            if spec is not None:
                summary["decay_fit"]["rate_vs_spectrum"] = decay.rate >= 0.5 * spec["sum"]
        except InsufficientTraceError as e:
            summary["decay_fit"] = {"error": str(e)}
    if diag["monotone_control"]:
        summary["monotone_control"] = _monotone_control(problem, params)

    write_json(run_path(out, SUMMARY_FILENAME), summary)
    meta.update({"finished_at": _now(), "elapsed_seconds": time.monotonic() - t0})
    write_json(run_path(out, METADATA_FILENAME), meta)
    logger.info("final loss %.6e after %d record(s)", last.loss, len(trace))
    return RunOutcome(out_dir=out, status="ok", summary=summary)


# -----------------------------
# compare
# -----------------------------

@dataclass
class TrainedField:
    """The network stored in a run directory, with the cutoff the run trained under."""
    params: NetworkParams
    domain: Domain
    cutoff: Optional[CutoffSpec] = None
    nu: float = BURGERS_NU

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        zero = MultiIndex.zero(self.params.d)
        return ansatz_jet(self.params, X, [zero], cutoff=self.cutoff).values[zero]


def load_trained_field(run_dir: str) -> TrainedField:
    params_path = run_path(run_dir, PARAMS_FINAL_FILENAME)
    if not os.path.exists(params_path):
        raise FileNotFoundError(f"{run_dir} has no {PARAMS_FINAL_FILENAME}")
    params = load_params(params_path)
    meta_path = run_path(run_dir, METADATA_FILENAME)
    if not os.path.exists(meta_path):
        # bare parameter dump: assume the Burgers slab
        d = {"kind": "time_slab", "t": [0.0, 1.0], "x": [[-1.0, 1.0]]}
        return TrainedField(params=params, domain=Domain.from_dict(d))
    config = read_json(meta_path).get("config") or {}
    domain = Domain.from_dict(config["domain"])
    problem = config.get("problem") or {}
    op = problem.get("operator") or {}
    nu = float(op.get("nu", BURGERS_NU)) if op.get("kind") == "burgers" else BURGERS_NU
    return TrainedField(params=params, domain=domain, cutoff=_cutoff_from(domain, problem.get("cutoff")), nu=nu)


def _reference_evaluator(reference: str, trained: TrainedField):
    ref = reference.strip()
    if ref.startswith(RUN_PREFIX):
        return load_trained_field(ref[len(RUN_PREFIX):]).evaluate
    try:
        return ReferenceField.parse(ref, d=trained.domain.d, nu=trained.nu).evaluate
    except UnknownExpressionError as e:
        raise ConfigError(str(e)) from e


def compare_run(
    run_dir: str,
    reference: str,
    slices: Optional[Sequence[float]] = None,
    points: int = 201,
    out_path: Optional[str] = None,
) -> List[Tuple[float, int, float, float, float]]:
    """
    Error table of the trained network against a reference on slices of the
    first coordinate: rows (slice, points, l2_error, linf_error, ref_linf).

    l2_error is the trapezoid-free estimate sqrt(mean(e^2) * length).
    """
    trained = load_trained_field(run_dir)
    dom = trained.domain
    if dom.d != 2:
        raise DimensionMismatchError("compare works on two-dimensional domains")
    if int(points) < 2:
        raise ValueError("compare needs at least two points per slice")
    evaluate_ref = _reference_evaluator(reference, trained)
    xs = np.linspace(dom.lo[1], dom.hi[1], int(points))
    length = dom.hi[1] - dom.lo[1]

    rows = []
    for s in (DEFAULT_SLICES if slices is None else slices):
        s = float(s)
        if not dom.lo[0] <= s <= dom.hi[0]:
            raise ValueError(f"slice {s!r} lies outside [{dom.lo[0]}, {dom.hi[0]}]")
        X = np.stack([np.full(xs.size, s), xs], axis=1)
        ref = np.asarray(evaluate_ref(X), dtype=np.float64).reshape(-1)
        err = trained.evaluate(X) - ref
        rows.append((
            s,
            int(xs.size),
            float(math.sqrt(float(np.mean(err ** 2)) * length)),
            float(np.max(np.abs(err))),
            float(np.max(np.abs(ref))),
        ))
    save_compare_csv(out_path or run_path(run_dir, COMPARE_FILENAME), rows)
    return rows


# -----------------------------
# audit-coercivity
# -----------------------------

@dataclass
class AuditReport:
    passed: bool
    payload: Dict


def _robin_key(r: RobinSpec) -> str:
    return f"{r.alpha!r},{r.beta!r}"


def audit_coercivity(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> AuditReport:
    """
    Boundary coercivity sweep on the flat segment of the config domain:
    seeded Gaussian initializations (admissible almost surely), each Robin pair, random
    outer vectors against the certified bound, the duplicated-neuron control
    and the discrete independence determinant.
    """
    audit = cfg.audit
    domain = cfg.domain
    if domain.d < 2:
        raise ConfigError("coercivity audit needs d >= 2")
    facet = domain.flat_segment()
    robins = [RobinSpec(float(a), float(b)) for a, b in audit["robins"]]
    m = int(audit["m"])
    n_vec = int(audit["random_vectors"])
    mi = int(audit["independence_m"])
    # the duplicated-neuron and duplicate-point controls copy row 0 into row 1
    if audit["adversarial"] and m < 2:
        raise ConfigError(f"audit.m = {m}: the duplicated-neuron control needs m >= 2")
    if int(audit["independence_trials"]) > 0 and mi < 2:
        raise ConfigError(f"audit.independence_m = {mi}: the duplicate-point control needs m >= 2")

    cases: List[Dict] = []
    for trial in range(int(audit["trials"])):
        seed = cfg.seed + trial
        params = initialize(InitScheme(kind=INIT_RANDOM_FEATURE, seed=seed), m, domain.d)
        rng = stream_generator(seed, STREAM_AUDIT)
        for robin in robins:
            cert = domain_coercivity_certificate(params, domain, robin, seed=seed)
            A = rng.standard_normal((n_vec, m))
            holds = bool(cert.C is not None and all(cert.bound_holds(a) for a in A))
            cases.append({
                "trial": trial,
                "robin": _robin_key(robin),
                "lambda_min": cert.lambda_min,
                "bootstrap_se": cert.bootstrap_se,
                "flagged": cert.flagged,
                "bound_holds": holds,
            })
    coercive_ok = all(not c["flagged"] and c["bound_holds"] for c in cases)

    adversarial = None
    if audit["adversarial"]:
        p = initialize(InitScheme(kind=INIT_RANDOM_FEATURE, seed=cfg.seed), m, domain.d)
        w, b = p.w.copy(), p.b.copy()
        w[1], b[1] = w[0], b[0]
        dup = p.replace(w=w, b=b)
        cert = domain_coercivity_certificate(dup, domain, robins[0], seed=cfg.seed, require_admissible=False)
        adversarial = {"lambda_min": cert.lambda_min, "flagged": cert.flagged}

    independence: List[Dict] = []
    for trial in range(int(audit["independence_trials"])):
        seed = cfg.seed + trial
        scheme = InitScheme(
            kind=INIT_SMALL_NORMAL, seed=seed, delta=float(audit["independence_delta"]), normal_axis=facet.axis
        )
        params = initialize(scheme, mi, domain.d)
        pts = sample_flat_segment(domain, mi, seed).points
        sign, logabs = discrete_independence_logdet(params, pts)
        independence.append({"trial": trial, "sign": sign, "log_abs_det": logabs})
    control = None
    if independence:
        params = initialize(
            InitScheme(INIT_SMALL_NORMAL, seed=cfg.seed, delta=float(audit["independence_delta"]),
                       normal_axis=facet.axis),
            mi,
            domain.d,
        )
        pts = sample_flat_segment(domain, mi, cfg.seed).points
        pts[1] = pts[0]
        sign, _ = discrete_independence_logdet(params, pts)
        control = {"sign": sign}
    independent_ok = all(r["sign"] != 0.0 for r in independence)

    passed = (
        coercive_ok
        and independent_ok
        and (adversarial is None or adversarial["flagged"])
        and (control is None or control["sign"] == 0.0)
    )
    payload = {
        "name": cfg.name,
        "seed": cfg.seed,
        "m": m,
        "flat_segment": {"axis": facet.axis, "side": facet.side},
        "quadrature_points": gamma_rule_size(m),
        "cases": cases,
        "coercive": coercive_ok,
        "adversarial": adversarial,
        "independence": {
            "trials": independence,
            "all_nonsingular": independent_ok,
            "duplicate_point_control": control,
        },
        "passed": passed,
    }
    out = out_dir or cfg.output_dir or os.path.join("runs", cfg.name)
    write_json(run_path(out, AUDIT_FILENAME), payload)
    if passed:
        logger.info("coercivity audit passed (%d case(s))", len(cases))
    else:
        logger.warning("coercivity audit failed; see %s", run_path(out, AUDIT_FILENAME))
    return AuditReport(passed=passed, payload=payload)


# -----------------------------
# Exporters
# -----------------------------

def fit_rate_file(trace_path: str, loss_floor: Optional[float] = None, out_path: Optional[str] = None) -> RateFit:
    if not os.path.exists(trace_path):
        raise FileNotFoundError(trace_path)
    fit = fit_rate(load_trace_csv(trace_path), loss_floor=loss_floor)
    if out_path:
        write_json(out_path, fit.to_dict())
    return fit


def export_collocation(cfg: ExperimentConfig, out_path: str) -> CollocationSet:
    col = sample(cfg.domain, cfg.n_interior, cfg.n_boundary, cfg.seed)
    save_collocation_csv(out_path, col)
    return col


def write_reference_grid(
    out_path: str,
    ts: Sequence[float],
    xs: Sequence[float],
    nu: float = BURGERS_NU,
) -> int:
    rows = reference_grid(ts, xs, nu)
    save_reference_grid_csv(out_path, rows)
    return len(rows)
