"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid physical or experiment parameters."""


class DomainError(ValueError):
    """Arguments outside the domain of an analytic formula."""
