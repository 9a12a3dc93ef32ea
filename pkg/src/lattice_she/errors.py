"""Exception hierarchy shared by all modules.

The CLI maps :class:`PreconditionError` to exit code 2 and
:class:`NumericalGuardError` to exit code 3.
"""


class PreconditionError(ValueError):
    """Inputs violate a documented precondition."""


class WindowTooSmallError(PreconditionError):
    def __init__(self, message, escaped):
        super().__init__(f"{message} (escaped mass {escaped:.3e})")
        self.escaped = escaped


class AperiodicityError(PreconditionError):
    def __init__(self, detail, worst_z, worst_modulus):
        super().__init__(f"kernel is not strongly aperiodic: {detail}")
        self.worst_z = worst_z
        self.worst_modulus = worst_modulus


class NumericalGuardError(RuntimeError):
    """A numerical safeguard tripped (overflow, non-convergence)."""


class QuadratureError(NumericalGuardError):
    pass
