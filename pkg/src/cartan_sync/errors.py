"""Named error types.

Every failure the CLI can report maps to one of these; the class name is the
machine-readable token printed on stderr.
"""


class CartanSyncError(Exception):
    """Base class for all package errors."""

    @property
    def token(self) -> str:
        return type(self).__name__


class DimensionMismatch(CartanSyncError, ValueError):
    pass


class AngleAtPi(CartanSyncError, ValueError):
    """Rotation lies on the cut locus; its principal logarithm is not unique."""


class RankDeficient(CartanSyncError, ValueError):
    pass


class BoundaryOfInjectivity(CartanSyncError, ValueError):
    """Cartan decomposition requested at the antipode of the identity."""


class NoConvergence(CartanSyncError, RuntimeError):
    pass


class NotInImage(CartanSyncError, ValueError):
    pass


class RadiusViolated(CartanSyncError, ValueError):
    pass


class GraphDisconnected(CartanSyncError, ValueError):
    pass


class EigSolverFailure(CartanSyncError, RuntimeError):
    pass


class DegenerateNullSpace(CartanSyncError, RuntimeError):
    pass


class LambdaTooSmall(CartanSyncError, ValueError):
    pass


class ConnectivityFailure(CartanSyncError, RuntimeError):
    pass


class AllNoiseFree(CartanSyncError, ValueError):
    pass


class UnsupportedDensity(CartanSyncError, ValueError):
    pass


class ConfigInvalid(CartanSyncError, ValueError):
    pass
