"""Exception hierarchy shared by all modules."""


class SchwarzLabError(Exception):
    """Base class for every error raised by the package."""


class DimensionMismatch(SchwarzLabError, ValueError):
    pass


class NotSymmetric(SchwarzLabError, ValueError):
    pass


class NotSPD(SchwarzLabError, ValueError):
    pass


class RankDeficient(SchwarzLabError, ValueError):
    pass


class NotComplementary(SchwarzLabError, ValueError):
    pass


class TooCoarse(SchwarzLabError, ValueError):
    pass


class EmptyElementSet(SchwarzLabError, ValueError):
    pass


class DofOutOfRange(SchwarzLabError, IndexError):
    pass


class NotOnBoundary(SchwarzLabError, ValueError):
    pass


class IndivisibleBlocks(SchwarzLabError, ValueError):
    pass


class OverlapTooLarge(SchwarzLabError, ValueError):
    pass


class NotInG(SchwarzLabError, ValueError):
    """A product-space vector has nonzero values on subdomain boundary dofs."""


class DenseCapExceeded(SchwarzLabError, RuntimeError):
    pass


class MissingConstant(SchwarzLabError, KeyError):
    pass


class ConfigError(SchwarzLabError, ValueError):
    pass
