"""
errors.py - Exception hierarchy shared by every cls2det module
"""


class Cls2DetError(Exception):
    """Base class for all cls2det errors."""


class ShapeError(Cls2DetError, ValueError):
    """Operand shapes, dimensions or temperatures do not agree."""


class DomainError(Cls2DetError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class NumericalError(Cls2DetError, ArithmeticError):
    """A computation produced a non-finite value."""


class KindError(Cls2DetError, ValueError):
    """A softened distribution has the wrong head kind for the operation."""


class DegenerateBoxError(Cls2DetError, ValueError):
    """Box with x1 >= x2 or y1 >= y2."""


class ConfigError(Cls2DetError, ValueError):
    """Invalid or inconsistent configuration."""


class DatasetFormatError(Cls2DetError, IOError):
    """Dataset file is corrupt or of an unknown format."""


class CheckpointError(Cls2DetError, IOError):
    """Checkpoint file is corrupt or of an unknown format."""
