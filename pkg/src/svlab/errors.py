"""Exception types shared across the package.

The CLI maps these onto exit codes (see ``svlab.cli``).
"""


class ShapeError(ValueError):
    """Tensor dimensions do not satisfy an operation's contract."""


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """Invalid, unknown or inconsistent configuration."""


class LabelError(ValueError):
    """Class label outside the configured range."""


class CapacityError(ValueError):
    """A sampling request exceeds what the corpus can provide."""


class ContractError(ValueError):
    """An input violates a documented call contract (e.g. non-unit norm)."""


class MetricUndefinedError(ValueError):
    """EER/minDCF requested on a degenerate score set."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


class GradientMissingError(RuntimeError):
    """A trainable tensor reached the optimizer without a gradient."""
