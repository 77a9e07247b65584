"""Exception types shared across the package."""

import numpy as np


class CQMError(Exception):
    """Base class for all package errors."""


class ValidationError(CQMError, ValueError):
    """An input object violates one of its invariants."""


class GeometryError(CQMError):
    """Simulation grid is too small or badly placed for the requested run."""


class NumericalError(CQMError):
    """A numerical routine failed to converge or produced garbage."""


class StepSizeUnderflow(NumericalError):
    """Adaptive integrator step shrank below the representable minimum."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.array(y, copy=True)


class NonSymplecticError(CQMError):
    """The restricted two-form is degenerate, so the equations of motion are undefined.

    The kernel of the form is attached so that callers can project onto the
    reduced (coadjoint-orbit) description instead.
    """

    def __init__(self, message, kernel=None, z=None):
        super().__init__(message)
        self.kernel = None if kernel is None else np.asarray(kernel)
        self.z = None if z is None else np.asarray(z)
