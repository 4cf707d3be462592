from typing import Any, Dict, Optional


class OccupationError(Exception):
    """Base exception for all estimator errors.

    Every error raised by the package inherits from this class, so catching
    ``OccupationError`` catches them all (pydantic ``ValidationError`` raised
    while building a configuration model is the one exception).

    Attributes:
        message: Human-readable description of the error.
        details: Extra context (offending values, limits) useful for
            diagnosing the failure programmatically.
    """

    kind = "Estimator"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        return f"{self.kind} Error: {self.message}"


class InputError(OccupationError):
    """Raised when an argument violates an operation's preconditions.

    Common causes:

    - Points or densities that belong to a different manifold than the one
      passed to the operation.
    - Malformed spec strings such as ``"torus:d=0"`` or ``"trig:a1=1.2"``.
    - Tangent vectors that are not tangent at the base point.

    Example::

        from occupation_estimator.exceptions import InputError

        try:
            density = make_density(manifold, "trig:a1=1.5")
        except InputError as e:
            print(f"Bad density: {e.message}")
    """

    kind = "Input"

    def __init__(
        self,
        message: str = "Invalid input",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, details)


class BandwidthError(InputError):
    """Raised when the kernel normaliser is not positive.

    A signed kernel integrated over a small manifold can have a non-positive
    normaliser once the bandwidth exceeds the critical value ``h_c``. Reduce
    ``h`` or switch to a nonnegative profile.
    """

    kind = "Bandwidth"

    def __init__(
        self,
        message: str = "Bandwidth too large: kernel normaliser is not positive",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, details)


class ConstructionError(OccupationError):
    """Raised when a numerical object cannot be built.

    Examples are a singular kernel moment system or a bump radius too large
    to place two bumps on the manifold.
    """

    kind = "Construction"

    def __init__(
        self,
        message: str = "Construction failed",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, details)


class SolverSizeError(OccupationError):
    """Raised when an exact transport problem exceeds the dense cost budget.

    Example::

        from occupation_estimator.exceptions import SolverSizeError

        try:
            result = w2_exact(a, b)
        except SolverSizeError:
            result = w2_entropic(a, b)
    """

    kind = "Solver size"

    def __init__(
        self,
        message: str = "Problem too large for the exact solver; use w2_entropic",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, details)


class SimulationError(OccupationError):
    """Raised when the SDE integrator keeps rejecting a step.

    A step is rejected when the proposed tangent move reaches the injectivity
    radius. The integrator halves the step a bounded number of times before
    giving up, which usually means ``dt`` is far too large for the drift.
    """

    kind = "Simulation"

    def __init__(
        self,
        message: str = "Step rejected repeatedly; reduce dt",
        details: Optional[Dict[str, Any]] = None,
    ) -> None:
        super().__init__(message, details)


class NumericalWarning(UserWarning):
    """Recoverable numerical issue (non-convergence, reconstruction residual)."""
