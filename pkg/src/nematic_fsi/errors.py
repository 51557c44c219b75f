"""Exception hierarchy shared by the solver modules.

Each class carries an ``exit_code`` used by the command line entry point.
"""


class NematicFSIError(Exception):
    exit_code = 1


class ConfigError(NematicFSIError):
    exit_code = 2


class InvariantViolation(NematicFSIError):
    """A checked physical invariant failed (energy, admissibility, max principle)."""

    exit_code = 3


class GeometryError(InvariantViolation):
    pass


class AdmissibilityError(GeometryError):
    pass


class InversionError(GeometryError):
    pass


class DomainError(GeometryError):
    pass


class AssemblyError(InvariantViolation):
    pass


class EnergyViolation(InvariantViolation):
    def __init__(self, message, step=None, slack=None):
        super().__init__(message)
        self.step = step
        self.slack = slack


class BoundViolation(InvariantViolation):
    pass


class SolverError(NematicFSIError):
    exit_code = 4

    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = info


class DivergenceError(SolverError):
    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class NonConvergenceError(SolverError):
    def __init__(self, message, distances=None, state=None):
        super().__init__(message)
        self.distances = distances
        self.state = state


class CheckpointError(NematicFSIError):
    exit_code = 5


class OutputError(NematicFSIError):
    exit_code = 5
