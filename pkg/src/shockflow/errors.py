"""Exception hierarchy shared by all shockflow modules."""


class ShockflowError(Exception):
    """Base class for numerical failures raised by the library."""


class DomainError(ShockflowError, ValueError):
    """Argument lies outside the effective domain of the Lagrangian."""


class DomainBoundary(ShockflowError):
    """Minimizer is pushed to the boundary of dom L."""


class NonConvergence(ShockflowError):
    """An iterative solver stalled before reaching its tolerance."""


class WindowTooSmall(ShockflowError):
    """An isolated minimizer touches the search window boundary."""


class PreshockError(ShockflowError):
    """Branch momenta are undefined at a conjugate point."""


class StabilityError(ShockflowError):
    """Time step violates the explicit scheme's stability bound."""


class BlowUp(ShockflowError):
    """Non-finite values appeared in a field solve."""


class QuadratureError(ShockflowError):
    """Quadrature failed to reach the requested accuracy."""


class LeftDomain(ShockflowError):
    """A trajectory left the computational window."""


class FieldError(ShockflowError):
    """A scalar field callback could not be evaluated."""


class ValidationError(ShockflowError):
    """Input data fails a required structural inequality."""


class SupportUnstable(ShockflowError):
    """Bregman-ball support sets oscillate across step sizes."""


class SchemaError(ShockflowError, ValueError):
    """Scenario file does not match the expected schema."""
