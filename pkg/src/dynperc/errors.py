"""Exception types raised across the package."""


class DynpercError(Exception):
    pass


class InvalidWindow(DynpercError, ValueError):
    pass


class UnknownComponent(DynpercError, KeyError):
    pass


class NoKernel(DynpercError, ValueError):
    pass


class EmptyCore(DynpercError, ValueError):
    pass


class RootRequired(DynpercError, ValueError):
    """Trimming a tree component needs an explicit root."""


class InvalidSpec(DynpercError, ValueError):
    pass


class DomainError(DynpercError, ValueError):
    pass


class BadPartition(DynpercError, ValueError):
    pass


class Unsatisfiable(DynpercError, ValueError):
    pass


class InstanceTooLarge(DynpercError, ValueError):
    pass


class NotACorrespondence(DynpercError, ValueError):
    pass


class TooLarge(DynpercError, ValueError):
    pass


class TooLargeForExact(DynpercError, ValueError):
    pass


class MissingSurplus(DynpercError, ValueError):
    pass


class ConfigError(DynpercError, ValueError):
    pass
