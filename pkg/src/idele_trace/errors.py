"""Exception types shared across the package."""


class IdeleTraceError(Exception):
    """Base class for all errors raised by this package."""


class IllFormedHom(IdeleTraceError):
    """A matrix does not define a homomorphism between the given groups."""


class NotFinite(IdeleTraceError):
    """An operation that needs a finite group received an infinite one."""


class InvalidModule(IdeleTraceError):
    """A sigma-module violates one of its structural invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IdentityViolation(IdeleTraceError):
    """The three sides of the trace formula disagree (always a bug)."""

    def __init__(self, spectral, geometric, kernel_trace):
        self.spectral = spectral
        self.geometric = geometric
        self.kernel_trace = kernel_trace
        super().__init__(
            f"spectral={spectral!r}, geometric={geometric!r}, kernel={kernel_trace!r}"
        )


class HypothesisNotMet(IdeleTraceError):
    """A conditional identity was requested on a module failing Hilbert 90."""

    def __init__(self, message, raw=None):
        self.raw = raw
        super().__init__(message)


class SupportViolation(IdeleTraceError):
    """A test function has mass outside the required support."""


class WellDefinednessError(IdeleTraceError):
    """Orbital sums disagree along one norm fiber."""

    def __init__(self, delta, other, values=None):
        self.delta = delta
        self.other = other
        self.values = values
        super().__init__(f"orbital sums differ at {delta} and {other}: {values}")


class PlaceMismatch(IdeleTraceError):
    """Local data does not assemble into a consistent place system."""


class BadInput(IdeleTraceError, ValueError):
    """Arithmetic input outside the supported domain."""


class RamifiedPlace(IdeleTraceError):
    """An unramified-only operation was called at a ramified place."""


class PrecisionUnstable(IdeleTraceError):
    """Results at precision k and k+1 disagree."""


class NotCoprime(IdeleTraceError, ValueError):
    """A rational is not coprime to the modulus."""


class GeneratorSearchFailed(IdeleTraceError):
    """No generator of a principal ideal was found within the height bound."""

    def __init__(self, prime, bound):
        self.prime = prime
        self.bound = bound
        super().__init__(f"no generator found for the ideal above {prime} (bound {bound})")


class H90Defect(IdeleTraceError):
    """An arithmetic module fails Hilbert 90 at the working precision."""

    def __init__(self, level, defect):
        self.level = level
        self.defect = defect
        super().__init__(f"Hilbert 90 fails at {level}-level with defect {defect}")
