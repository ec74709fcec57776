# ritzkit/errors.py
from __future__ import annotations


# -----------------------------
# Input / data errors
# -----------------------------

class DerivativeOrderError(ValueError):
    """Requested derivative order exceeds the supported maximum."""


class DimensionMismatchError(ValueError):
    pass


class NonUnitNormalError(ValueError):
    pass


class ReactionAuditError(ValueError):
    """h(u)*u < 0 was observed on an evaluated value."""


class AdmissibilityError(ValueError):
    pass


class ConfigError(ValueError):
    """Experiment config failed schema or semantic validation."""


class InsufficientTraceError(ValueError):
    pass


class ZeroNormError(ValueError):
    pass


class NonSymmetricError(ValueError):
    pass


class UnknownExpressionError(ValueError):
    pass


# -----------------------------
# Numerical failures
# -----------------------------

class NumericalError(RuntimeError):
    """Non-finite values or a breakdown of an integrator/solver."""


class StepUnderflowError(NumericalError):
    pass
