"""Exception hierarchy shared by all eigopt modules."""


class EigoptError(Exception):
    """Base class for every error raised by eigopt."""


class GeometryError(EigoptError, ValueError):
    """Invalid mesh geometry, inverted element, or empty support."""


class SymmetryError(EigoptError, ValueError):
    """Requested symmetry is incompatible with the mesh."""


class MaterialError(EigoptError, ValueError):
    """Bad interpolation parameters or density outside its admissible range."""


class FilterError(EigoptError, ValueError):
    pass


class AssemblyError(EigoptError, ValueError):
    pass


class SolverError(EigoptError, RuntimeError):
    """Factorization failure (stiffness not SPD) or eigensolver breakdown."""


class ConvergenceError(SolverError):
    """Eigensolver did not converge; ``residuals`` holds what was achieved."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ClusterError(EigoptError, ValueError):
    """Contract violation in clustering or cluster sensitivities."""


class DegeneracyError(EigoptError, RuntimeError):
    """Required clusters stayed incomplete after the extension budget ran out."""


class ConfigError(EigoptError, ValueError):
    """Invalid job configuration; the message names the offending key path."""
