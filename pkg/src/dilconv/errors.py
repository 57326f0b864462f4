"""Exception types raised by the kernels and drivers."""


class ShapeMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


class OddDims(ValueError):
    """BF16 paths need even channel, filter and width counts."""


class OddChannels(OddDims):
    pass


class OddReduction(OddDims):
    pass


class TooNarrow(ValueError):
    pass


class NonFinite(ArithmeticError):
    pass


class NonFiniteLoss(NonFinite):
    pass


class NonPositiveTime(ValueError):
    pass


class ConfigError(ValueError):
    pass
