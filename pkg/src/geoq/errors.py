"""Exception types shared across the package."""


class GeoqError(Exception):
    """Base class for all geoq errors."""


class DegenerateInput(GeoqError):
    """Input is geometrically degenerate (coincident/antipodal points, bad polygon, ...)."""


class OutOfRange(GeoqError):
    """A numeric parameter is outside its documented domain."""


class DegenerateMesh(GeoqError):
    """Mesh contains zero-area triangles or is otherwise unusable."""


class NotFound(GeoqError):
    """Point location failed (should not happen on a valid embedding)."""


class ConfigError(GeoqError):
    """Experiment configuration is invalid."""


class NoConvergence(GeoqError):
    """Iterative solve did not reach the requested tolerance.

    Carries the best iterate so callers can inspect or accept it.
    """

    def __init__(self, message, residual=None, best=None):
        super().__init__(message)
        self.residual = residual
        self.best = best
