"""Exception types shared across the package."""


class SipmSimError(Exception):
    """Base class for package-specific failures."""


class ConfigError(SipmSimError):
    """Raised when a configuration file or parameter set is invalid.

    The message always names the offending key(s) so CLI users can fix
    the file without reading source code.
    """


class FitError(SipmSimError):
    """Raised when a least-squares fit cannot produce a usable answer."""

    def __init__(self, message, *, iterations=None, best_params=None, best_cost=None):
        super().__init__(message)
        self.iterations = iterations
        self.best_params = best_params
        self.best_cost = best_cost


class EstimationError(SipmSimError):
    """Raised when a statistical estimator is handed inconsistent inputs."""


class ClassificationError(SipmSimError):
    """Raised when amplitude classification preconditions are not met."""


class SizeError(SipmSimError):
    """Raised when a requested computation exceeds the configured size budget."""


class NegativeCrosstalkWarning(UserWarning):
    """Emitted when a cross-talk estimate comes out slightly negative and is clamped."""
