"""Exception types shared across the package."""


class PathidError(Exception):
    """Base class for all package errors."""


class ValidationError(PathidError, ValueError):
    """A parameter or matrix failed its construction-time checks."""


class SettingsError(PathidError, ValueError):
    """An operation was invoked at interferometer settings it is not valid for."""


class UnderdeterminedFitError(PathidError, ValueError):
    """Too few distinct phases to fit a sinusoid."""


class UndefinedQuantityError(PathidError, ValueError):
    """The requested quantity is undefined for these inputs (degenerate case)."""


class InconsistentDataError(PathidError, ValueError):
    """No sign branch of the transmission system reproduces the measured data."""


class UnidentifiableError(PathidError, ValueError):
    """The transmissions cannot be identified from these observables (eta = 1)."""


class AmbiguousBranchError(PathidError, ValueError):
    """Two distinct transmission solutions fit the data equally well."""


class ScanPlanError(PathidError, ValueError):
    """A required scan-plan entry is missing or malformed."""
