"""Exception taxonomy for drlab.

Two families matter operationally:

* :class:`UsageError` and subclasses — bad inputs, infeasible parameters,
  violated preconditions.  The CLI maps these to exit code 1.
* :class:`NumericGuard` and subclasses — the computation itself became
  numerically untrustworthy (overflow, excessive round-off, runaway
  support).  The CLI maps these to exit code 3.

Verification *failures* (a check ran fine but the bound did not hold) are
not exceptions: they are reported in result objects and mapped to exit
code 2 by the CLI.
"""

from __future__ import annotations


class DrlabError(Exception):
    """Base class for all drlab errors."""


class UsageError(DrlabError):
    """Invalid input, configuration, or violated precondition."""


class ConfigError(UsageError):
    """Malformed or incomplete run configuration."""


class NonNormalized(UsageError):
    """Raw probabilities do not sum to one within tolerance."""


class NegativeMass(UsageError):
    """A probability weight is negative."""


class InfeasibleFamily(UsageError):
    """Family parameters admit no valid probability law."""


class BadTiltPoint(UsageError):
    """Auxiliary tilt point must exceed the branching base."""


class TiltOutOfRange(UsageError):
    """Evaluation point outside the open interval (base/2, base)."""


class NotSubcritical(UsageError):
    """Operation requires a strictly subcritical initial law."""


class DegenerateDelta(UsageError):
    """Gap functional vanished; the bound it feeds is undefined."""


class MissingDerivatives(UsageError):
    """Trace does not carry derivatives of the requested order."""


class HypothesisViolated(UsageError):
    """Inputs do not satisfy the hypothesis of the inequality being checked."""


class WindowTooSmall(UsageError):
    """Fit window contains too few dyadic points."""


class TreeTooDeep(UsageError):
    """Monte-Carlo tree depth exceeds the leaf-count guard."""


class NumericGuard(DrlabError):
    """Computation aborted because float results became untrustworthy.

    Parameters
    ----------
    message:
        Human-readable description of what tripped the guard.
    generation:
        Index of the evolution step during which the guard fired, when
        known.  ``None`` for guards outside an evolution loop.
    """

    def __init__(self, message: str, generation: int | None = None):
        super().__init__(message)
        self.generation = generation

    def __str__(self) -> str:
        base = super().__str__()
        if self.generation is not None:
            return f"{base} (generation {self.generation})"
        return base


class SupportOverflow(NumericGuard):
    """Support size exceeded the configured cap during evolution."""
