"""Exception types shared across the package."""


class WaverlError(Exception):
    """Base class for all package errors."""


class DimensionError(WaverlError, ValueError):
    """Operand shapes are incompatible."""


class ParameterError(WaverlError, ValueError):
    """An argument is outside its allowed range."""


class DomainError(WaverlError, ValueError):
    """A value is outside the mathematical domain of an operation."""


class ContractError(WaverlError, ValueError):
    """An operation was called in a way its contract forbids."""


class DecompositionError(WaverlError, ValueError):
    """A signal cannot be decomposed as requested."""


class ReconstructionError(WaverlError, ValueError):
    """A coefficient stack cannot be inverted as requested."""


class ConfigError(WaverlError, ValueError):
    """An experiment configuration failed validation."""


class SchemaError(WaverlError, ValueError):
    """A serialized artifact carries an unexpected schema version."""
