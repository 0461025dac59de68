"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes (see cli.EXIT_CODES):
configuration and argument problems exit 2, data-content problems exit 3,
numeric failures exit 4.
"""


class PricefieldError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PricefieldError):
    """Bad configuration file, schema declaration, or CLI arguments."""


class InputError(ConfigError):
    """An operation was called with inconsistent arguments (dimension
    mismatch, out-of-range tuning parameter, and the like)."""


class DataError(PricefieldError):
    """The data content is unusable: no rows survive loading, coordinates
    out of range, points falling outside the domain, and so on."""


class GeometryError(DataError):
    """Degenerate or invalid geometry derived from the data (collinear
    point sets, self-intersecting rings, zero-area triangles)."""


class NumericError(PricefieldError):
    """A numeric computation failed."""


class CollinearityError(NumericError):
    """Covariate matrix is rank deficient; names the offending columns."""

    def __init__(self, columns, message=None):
        self.columns = list(columns)
        super().__init__(
            message or "covariate columns are collinear: %s" % ", ".join(self.columns)
        )


class ConditioningError(NumericError):
    """A linear system was singular or too ill-conditioned to solve."""


class ResourceError(NumericError):
    """A hard resource cap was exceeded (mesh vertex budget, pair-matrix
    size, rejection-sampling retries)."""


def exit_code_for(exc: BaseException) -> int:
    """Process exit code for an exception: config problems 2, data
    problems 3, numeric failures 4, anything else 1."""
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, DataError):
        return 3
    if isinstance(exc, NumericError):
        return 4
    return 1
