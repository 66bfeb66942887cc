"""Exception hierarchy. CLI exit codes are keyed off these classes."""


class MDHGError(Exception):
    exit_code = 3


class ConfigError(MDHGError):
    """Bad or inconsistent configuration (exit code 1)."""

    exit_code = 1


class InputError(MDHGError):
    """Input data that cannot be used as given (exit code 2)."""

    exit_code = 2


class GeometryError(InputError):
    pass


class OutOfBoundsError(GeometryError):
    pass


class PopulationError(InputError):
    pass


class InvariantError(MDHGError):
    """An internal consistency check failed (exit code 3)."""

    exit_code = 3
