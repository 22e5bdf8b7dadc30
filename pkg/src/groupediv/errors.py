"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for malformed
inputs (bad files, shape mismatches, unsupported layouts) and
:class:`NumericalError` for failures that arise during computation
(singular systems, non-convergence). The CLI maps them to exit codes 2
and 3 respectively.
"""

from __future__ import annotations


class GroupedIVError(Exception):
    """Base class for all package errors."""


class ValidationError(GroupedIVError):
    """Input data or configuration is malformed."""


class NumericalError(GroupedIVError):
    """A numerical procedure failed on otherwise valid input."""


# --- panel construction -------------------------------------------------

class MissingColumn(ValidationError):
    """A required column is absent from the input file."""


class DuplicateObservation(ValidationError):
    """A (unit, period) pair appears more than once."""


class UnbalancedPanel(ValidationError):
    """A (unit, period) cell is missing; only balanced panels are accepted."""


class NonFiniteValue(ValidationError):
    """A value is NaN or infinite (or not numeric at all)."""


class TooFewPeriods(ValidationError):
    """The requested transform needs at least two periods per unit."""


class LengthMismatch(ValidationError):
    """Two sequences that must align have different lengths."""


class OddN(ValidationError):
    """The simulation designs split units in half and need an even N."""


# --- estimation ---------------------------------------------------------

class SingularDesign(NumericalError):
    """A normal/moment matrix is singular or numerically rank deficient."""


class EmptyGroup(NumericalError):
    """A group has no members where a fit requires at least one."""


class NoConvergence(NumericalError):
    """An iterative procedure exhausted its iteration budget."""


class NotJustIdentified(ValidationError):
    """An operation requires as many instruments as regressors (m == d)."""


class DegenerateAssignment(ValidationError):
    """A pseudo-true value denominator is zero for the given fractions."""


class GroupTooSmall(NumericalError):
    """A group has too few units for the requested computation."""


class InsufficientClusters(NumericalError):
    """Cluster-robust inference needs at least two clusters."""


class MonotonicityViolation(NumericalError):
    """The alternating-minimization objective increased (debug check)."""
