"""Exception types shared across the engine."""


class ConfigurationError(ValueError):
    """Invalid hyperparameter, config field or call argument."""


class ShapeError(ValueError):
    pass


class DegenerateParameterError(ValueError):
    """A parameter reached a state the math cannot handle (e.g. zero-norm direction)."""


class ContractError(RuntimeError):
    """A caller broke an operation's precondition (non-scalar loss, mismatched maps, ...)."""


class InputError(ValueError):
    pass


class FormatError(ValueError):
    """Malformed container or checkpoint file."""


class NumericalError(ArithmeticError):
    """NaN/Inf encountered during training; the run must abort."""
