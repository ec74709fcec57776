# ritzkit/__init__.py
'''
ritzkit/
    __init__.py            # RITZKIT_THREADS -> BLAS thread caps, version
    __main__.py

    app.py                 # argparse surface: run / compare / audit-coercivity / fit-rate / selftest / exporters
    experiment.py          # JSON configs (jsonschema), problem assembly, run / compare / audit drivers
    selftest.py            # oracle suites runnable without pytest

    domain.py              # MultiIndex, NetworkParams (hex-float JSON)
    net_core.py            # tanh derivative polynomials, mixed partials, feature matrices, jets
    operators.py           # linear / nonlinear operators, Robin boundary, energies, cutoff ansatz
    geometry.py            # domains, collocation sampling, quadrature, initialization, admissibility
    loss.py                # PINN / Deep Ritz empirical losses, residuals, jacobians, gradients
    quasi_newton.py        # L-BFGS inner solver with Armijo backtracking
    dynamics.py            # gradient flow (RK4), GD, IGD, traces, convergence-rate fits
    diagnostics.py         # NTK Grams, drift, Jacobi eigensolver, coercivity certificates
    reference_solutions.py # Cole-Hopf Burgers, Crank-Nicolson cross-check, manufactured solutions
    persistence.py         # atomic JSON / CSV writers and loaders
    errors.py              # exception hierarchy

    configs/
      experiment.schema.json
      *.json               # bundled experiments
'''

from __future__ import annotations

import os

_threads = os.environ.get("RITZKIT_THREADS")
if _threads:
    # must happen before numpy is first imported
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__all__ = ["__version__", "run_app"]

__version__ = "0.1.0"

from .app import run_app  # noqa: E402
