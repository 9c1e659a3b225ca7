"""Exception hierarchy shared by every gatelab module."""


class GatelabError(Exception):
    """Base class for all library errors."""


class ShapeError(GatelabError, ValueError):
    pass


class NotSymmetricError(GatelabError, ValueError):
    pass


class ConvergenceError(GatelabError, RuntimeError):
    pass


class IndefiniteMatrixError(GatelabError, ValueError):
    pass


class ConfigError(GatelabError, ValueError):
    pass


class UnregisteredInputError(GatelabError, KeyError):
    """An FRG network was asked for gates of an input it was not built with."""


class BudgetExceededError(GatelabError, ValueError):
    pass


class VariantError(GatelabError, ValueError):
    """Operation is undefined for the gating variant it was given."""


class NetFormatError(GatelabError, ValueError):
    pass


class NetVersionError(NetFormatError):
    pass


class DivergenceError(GatelabError, RuntimeError):
    pass


class DeadLayerError(GatelabError, ValueError):
    pass


class DataFormatError(GatelabError, ValueError):
    pass
