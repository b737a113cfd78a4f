"""Exception types shared across the library and mapped to CLI exit codes."""


class ConfigError(Exception):
    """Invalid or inconsistent configuration (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed hard: ill-conditioning, fatal non-convergence (exit code 3)."""


class CapacityError(RuntimeError):
    """A bounded resource was exhausted: rejection-sampling cap, problem-size ceiling (exit code 4)."""
