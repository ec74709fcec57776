# tests/test_experiment.py
"""Config validation, run directories, compare / audit / exporters and the CLI."""
from __future__ import annotations

import copy
import json
import os

import numpy as np
import pytest

from ritzkit.app import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, run_app
from ritzkit.domain import NetworkParams
from ritzkit.dynamics import TraceRecord, TrainingTrace
from ritzkit.errors import ConfigError
from ritzkit.experiment import (
    ExperimentConfig,
    audit_coercivity,
    build_problem,
    bundled_configs,
    compare_run,
    fit_rate_file,
    load_config,
    run_experiment,
)
from ritzkit.persistence import (
    AUDIT_FILENAME,
    GRAM_DRIFT_FILENAME,
    LOG_FILENAME,
    METADATA_FILENAME,
    PARAMS_FINAL_FILENAME,
    PARAMS_INIT_FILENAME,
    RATE_FIT_FILENAME,
    SUMMARY_FILENAME,
    TRACE_FILENAME,
    load_compare_csv,
    load_gram_drift_csv,
    load_trace_csv,
    read_json,
    save_params,
    save_trace_csv,
)

TINY_HEAT = {
    "name": "tiny_heat",
    "seed": 3,
    "domain": {"kind": "time_slab", "t": [0.0, 1.0], "x": [[-1.0, 1.0]]},
    "collocation": {"n_interior": 30, "n_boundary": 12},
    "network": {"m": 8, "init": {"kind": "random_feature"}},
    "problem": {
        "method": "pinn",
        "operator": {"kind": "linear", "terms": [{"xi": [1, 0], "coeff": 1.0}, {"xi": [0, 2], "coeff": -1.0}]},
        "f": "manufactured:heat_mode",
        "g": "manufactured:heat_mode",
    },
    "dynamics": {"scheme": "igd", "eta": 0.5, "steps": 5, "inner": {"max_iters": 5}},
    "diagnostics": {"rate_fit": False},
}


def tiny(**overrides):
    raw = copy.deepcopy(TINY_HEAT)
    for key, value in overrides.items():
        raw[key] = value
    return raw


def write_config(path, raw):
    path.write_text(json.dumps(raw), encoding="utf-8")
    return str(path)


def zero_network(m=4):
    return NetworkParams(a=np.zeros(m), w=np.ones((m, 2)), b=np.linspace(-1.0, 1.0, m))


class TestConfig:
    """Schema and semantic checks."""

    @pytest.mark.parametrize("name", bundled_configs())
    def test_bundled_configs_assemble(self, name):
        cfg = load_config(name)
        problem = build_problem(cfg)
        assert problem.params0.m == cfg.m
        assert problem.collocation.n1 == cfg.n_interior

    def test_bundled_names(self):
        assert "rf_burgers" in bundled_configs()
        assert "experiment.schema" not in bundled_configs()

    def test_defaults_filled(self):
        cfg = ExperimentConfig.from_dict(tiny())
        assert cfg.dynamics["inner"]["grad_tol"] == 1e-8
        assert cfg.dynamics["inner"]["max_iters"] == 5
        assert cfg.diagnostics["gram_stride"] == 0
        assert cfg.audit["trials"] == 20

    def test_seed_override(self, tmp_path):
        path = write_config(tmp_path / "c.json", tiny())
        assert load_config(path).seed == 3
        cfg = load_config(path, seed=7)
        assert cfg.seed == 7
        a = build_problem(load_config(path)).collocation.interior
        b = build_problem(cfg).collocation.interior
        assert not np.array_equal(a, b)

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda r: r["collocation"].update(n_interior=0),
            lambda r: r["collocation"].update(n_boundary=0),
            lambda r: r["dynamics"].pop("eta"),
            lambda r: r["dynamics"].update(scheme="gradient_flow"),
            lambda r: r.update(extras=1),
            lambda r: r["problem"].update(method="ritz", energy={"kind": "p_laplace"}),
            lambda r: r["problem"]["operator"].update(kind="burgers"),
            lambda r: r["network"]["init"].update(kind="xavier"),
        ],
        ids=["no_interior", "no_boundary_no_cutoff", "no_eta", "flow_no_dt", "unknown_key",
             "manufactured_ritz", "manufactured_nonlinear", "unknown_init"],
    )
    def test_rejected(self, mutate):
        raw = tiny()
        mutate(raw)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_cutoff_allows_empty_boundary(self):
        raw = tiny()
        raw["collocation"]["n_boundary"] = 0
        raw["problem"].update(f=1.0, g=0.0, cutoff={"margin_fraction": 0.1})
        cfg = ExperimentConfig.from_dict(raw)
        assert build_problem(cfg).cutoff is not None

    def test_missing_config(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.json"))


class TestRun:
    """run_experiment writes a complete, reproducible run directory."""

    def test_artifacts(self, tmp_path):
        out = str(tmp_path / "run")
        outcome = run_experiment(ExperimentConfig.from_dict(tiny()), out_dir=out)
        assert outcome.ok
        for name in (METADATA_FILENAME, PARAMS_INIT_FILENAME, PARAMS_FINAL_FILENAME, TRACE_FILENAME,
                     RATE_FIT_FILENAME, SUMMARY_FILENAME, LOG_FILENAME):
            assert os.path.exists(os.path.join(out, name)), name
        assert not os.path.exists(os.path.join(out, GRAM_DRIFT_FILENAME))

        trace = load_trace_csv(os.path.join(out, TRACE_FILENAME))
        assert [r.step for r in trace.records] == list(range(6))
        assert trace.is_monotone()
        summary = read_json(os.path.join(out, SUMMARY_FILENAME))
        assert summary["status"] == "ok"
        assert summary["final_loss"] <= summary["initial_loss"]
        rate = read_json(os.path.join(out, RATE_FIT_FILENAME))
        assert rate["regime"] == "undetermined"
        assert rate["reason"] == "disabled"
        meta = read_json(os.path.join(out, METADATA_FILENAME))
        assert meta["seed"] == 3
        assert "elapsed_seconds" in meta

    def test_reproducible(self, tmp_path):
        cfg = ExperimentConfig.from_dict(tiny())
        a = run_experiment(cfg, out_dir=str(tmp_path / "a"))
        b = run_experiment(cfg, out_dir=str(tmp_path / "b"))
        for name in (TRACE_FILENAME, PARAMS_FINAL_FILENAME, SUMMARY_FILENAME):
            with open(os.path.join(a.out_dir, name), "rb") as fa, open(os.path.join(b.out_dir, name), "rb") as fb:
                assert fa.read() == fb.read(), name

    def test_gradient_flow_with_gram_drift(self, tmp_path):
        raw = tiny(
            dynamics={"scheme": "gradient_flow", "dt": 0.01, "horizon": 0.1},
            diagnostics={"gram_stride": 2, "gram_eigenvalues": True, "rate_fit": False},
        )
        outcome = run_experiment(ExperimentConfig.from_dict(raw), out_dir=str(tmp_path))
        assert outcome.ok
        records = load_gram_drift_csv(str(tmp_path / GRAM_DRIFT_FILENAME))
        assert {r["provenance"] for r in records} == {"interior_outer", "boundary_outer"}
        assert records[0]["iteration"] == 0
        # random features keep (w, b) fixed, so the outer Grams never move
        assert all(r["rel_drift"] == 0.0 for r in records)
        assert all(r["min_eig"] is not None for r in records)
        assert outcome.summary["final_time"] == pytest.approx(0.1)

    def test_numerical_failure(self, tmp_path):
        raw = tiny(dynamics={"scheme": "gd", "eta": 1e12, "steps": 100})
        with np.errstate(all="ignore"):
            outcome = run_experiment(ExperimentConfig.from_dict(raw), out_dir=str(tmp_path))
        assert outcome.status == "numerical_failure"
        summary = read_json(str(tmp_path / SUMMARY_FILENAME))
        assert summary["status"] == "numerical_failure"
        trace = load_trace_csv(str(tmp_path / TRACE_FILENAME))
        assert np.all(np.isfinite(trace.losses()))


class TestCompare:
    """Error tables against the Burgers reference and other runs."""

    def test_zero_network_against_cole_hopf(self, tmp_path):
        save_params(str(tmp_path / PARAMS_FINAL_FILENAME), zero_network())
        rows = compare_run(str(tmp_path), "cole_hopf", slices=[0.25, 0.5], points=41)
        assert [r[0] for r in rows] == [0.25, 0.5]
        for s, n, l2, linf, ref_linf in rows:
            assert n == 41
            assert linf == pytest.approx(ref_linf, rel=1e-12)
            assert 0.0 < l2 <= linf * np.sqrt(2.0) + 1e-12
        assert len(load_compare_csv(str(tmp_path / "compare.csv"))) == 2

    def test_run_against_itself(self, tmp_path):
        rng = np.random.default_rng(0)
        p = NetworkParams(a=rng.standard_normal(4), w=rng.standard_normal((4, 2)), b=rng.standard_normal(4))
        save_params(str(tmp_path / PARAMS_FINAL_FILENAME), p)
        rows = compare_run(str(tmp_path), f"run:{tmp_path}", points=11, out_path=str(tmp_path / "self.csv"))
        assert len(rows) == 3
        assert all(r[2] == 0.0 and r[3] == 0.0 for r in rows)

    def test_manufactured_reference(self, tmp_path):
        out = str(tmp_path / "run")
        run_experiment(ExperimentConfig.from_dict(tiny()), out_dir=out)
        rows = compare_run(out, "manufactured:heat_mode", slices=[0.0], points=21)
        # u(0, x) = sin(pi x)
        assert rows[0][4] == pytest.approx(np.sin(np.pi * 0.5), rel=1e-12)

    def test_slice_outside_domain(self, tmp_path):
        save_params(str(tmp_path / PARAMS_FINAL_FILENAME), zero_network())
        with pytest.raises(ValueError):
            compare_run(str(tmp_path), "cole_hopf", slices=[1.5])

    def test_missing_params(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            compare_run(str(tmp_path), "cole_hopf")

    def test_unknown_reference(self, tmp_path):
        save_params(str(tmp_path / PARAMS_FINAL_FILENAME), zero_network())
        with pytest.raises(ConfigError):
            compare_run(str(tmp_path), "exact")


class TestAudit:
    def test_small_sweep_passes(self, tmp_path):
        cfg = load_config("coercivity_audit")
        cfg.audit.update(trials=2, random_vectors=20, independence_trials=5)
        report = audit_coercivity(cfg, out_dir=str(tmp_path))
        assert report.passed
        assert len(report.payload["cases"]) == 2 * 3
        assert report.payload["adversarial"]["flagged"]
        assert report.payload["independence"]["duplicate_point_control"]["sign"] == 0.0
        assert read_json(str(tmp_path / AUDIT_FILENAME))["passed"] is True

    @pytest.mark.parametrize(
        "overrides",
        [{"m": 1}, {"independence_m": 1}],
        ids=["single_neuron", "single_independence_point"],
    )
    def test_single_row_sizes_rejected(self, tmp_path, overrides):
        cfg = load_config("coercivity_audit")
        cfg.audit.update(trials=1, random_vectors=5, independence_trials=1, **overrides)
        with pytest.raises(ConfigError):
            audit_coercivity(cfg, out_dir=str(tmp_path))

    @pytest.mark.parametrize("key", ["m", "independence_m"])
    def test_schema_requires_two_rows(self, key):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(tiny(audit={key: 1}))

    def test_single_neuron_exit_code(self, tmp_path):
        path = write_config(tmp_path / "c.json", tiny(audit={"m": 1}))
        assert run_app(["audit-coercivity", path, "--out", str(tmp_path / "out")]) == EXIT_CONFIG


class TestFitRateFile:
    def test_power_law_trace(self, tmp_path):
        trace = TrainingTrace()
        for k, t in enumerate(np.linspace(1.0, 500.0, 300)):
            trace.append(TraceRecord(k, float(t), float(t ** -2.0), 0.0, 1.0))
        path = str(tmp_path / "trace.csv")
        save_trace_csv(path, trace)
        fit = fit_rate_file(path, loss_floor=0.0, out_path=str(tmp_path / "fit.json"))
        assert fit.regime == "power"
        assert fit.epsilon == pytest.approx(0.25, rel=0.1)
        assert read_json(str(tmp_path / "fit.json"))["regime"] == "power"

    def test_missing_trace(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            fit_rate_file(str(tmp_path / "trace.csv"))


class TestCli:
    """Exit codes of the command-line surface."""

    def test_run(self, tmp_path):
        path = write_config(tmp_path / "c.json", tiny())
        out = tmp_path / "out"
        assert run_app(["--quiet", "run", path, "--out", str(out)]) == EXIT_OK
        assert (out / TRACE_FILENAME).exists()

    def test_bad_config(self, tmp_path):
        path = write_config(tmp_path / "c.json", tiny(extras=True))
        assert run_app(["run", path, "--out", str(tmp_path / "out")]) == EXIT_CONFIG

    def test_numerical_failure(self, tmp_path):
        path = write_config(tmp_path / "c.json", tiny(dynamics={"scheme": "gd", "eta": 1e12, "steps": 100}))
        with np.errstate(all="ignore"):
            assert run_app(["run", path, "--out", str(tmp_path / "out")]) == EXIT_NUMERIC

    def test_compare_without_params(self, tmp_path):
        assert run_app(["compare", str(tmp_path), "--ref", "cole_hopf"]) == EXIT_CONFIG

    def test_export_collocation(self, tmp_path):
        out = tmp_path / "col.csv"
        assert run_app(["export-collocation", "rf_heat_gd", "--out", str(out)]) == EXIT_OK
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "x0,x1,region,weight"
        assert len(lines) == 1 + 400 + 80

    def test_reference_grid(self, tmp_path):
        out = tmp_path / "grid.csv"
        assert run_app(["reference-grid", "--out", str(out), "--ts", "0.25,0.5", "--nx", "11"]) == EXIT_OK
        lines = out.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "t,x,u"
        assert len(lines) == 1 + 22

    def test_fit_rate_short_trace(self, tmp_path):
        trace = TrainingTrace()
        for k in range(5):
            trace.append(TraceRecord(k, float(k), 1.0 / (k + 1), 0.0, 1.0))
        path = str(tmp_path / "trace.csv")
        save_trace_csv(path, trace)
        assert run_app(["fit-rate", path]) == EXIT_CONFIG

    def test_unknown_selftest_suite(self):
        assert run_app(["selftest", "--only", "nope"]) == EXIT_CONFIG


@pytest.mark.slow
class TestAcceptanceRuns:
    """Full-size bundled experiments against their acceptance thresholds."""

    def test_ntk_drift(self, tmp_path):
        outcome = run_experiment(load_config("ntk_drift"), out_dir=str(tmp_path))
        assert outcome.status == "ok"
        rows = load_gram_drift_csv(str(tmp_path / GRAM_DRIFT_FILENAME))
        interior = {r["iteration"]: r["rel_drift"] for r in rows if r["provenance"] == "interior_outer"}
        boundary = {r["iteration"]: r["rel_drift"] for r in rows if r["provenance"] == "boundary_outer"}
        assert {0, 20, 100} <= set(interior) & set(boundary)
        assert max(boundary.values()) < 0.02
        assert max(v for k, v in interior.items() if k <= 20) > 0.05
        assert interior[100] > 10.0 * boundary[100]

    def test_heat_ntk_decay_matches_spectrum(self, tmp_path):
        outcome = run_experiment(load_config("heat_ntk"), out_dir=str(tmp_path))
        assert outcome.status == "ok"
        fit = outcome.summary["decay_fit"]
        assert fit["r2"] > 0.95
        assert fit["rate"] >= 0.5 * outcome.summary["init_spectrum"]["sum"]
        assert fit["rate_vs_spectrum"] is True

    def test_rf_burgers_igd(self, tmp_path):
        outcome = run_experiment(load_config("rf_burgers"), out_dir=str(tmp_path))
        assert outcome.status == "ok"
        summary = outcome.summary
        assert summary["monotone"] is True
        trace = load_trace_csv(str(tmp_path / TRACE_FILENAME))
        losses = [r.loss for r in trace.records]
        assert all(b <= a + 1e-10 for a, b in zip(losses, losses[1:]))
        assert summary["final_grad_norm"] < 1e-4
        assert summary["a_norm"]["stable"] is True
