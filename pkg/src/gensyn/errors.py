"""Exception hierarchy shared across the toolkit."""


class GensynError(Exception):
    """Base class for all errors raised by gensyn."""


class ConfigError(GensynError, ValueError):
    """Malformed or inconsistent configuration / input tables."""


class CycleError(ConfigError):
    """The declared conditioning graph cannot be made acyclic."""

    def __init__(self, variables):
        self.variables = tuple(variables)
        super().__init__("conditioning graph has a cycle through: " + ", ".join(self.variables))


class NumericalError(GensynError, ArithmeticError):
    """A numerical stage could not produce a valid result."""
