"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line front end can map
failures to the documented process exit status without a lookup table.
"""


class SparseTomoError(Exception):
    exit_code = 1


class ConfigError(SparseTomoError):
    exit_code = 2


class DataError(SparseTomoError):
    exit_code = 3


class NumericalError(SparseTomoError):
    exit_code = 4


# geometry
class NotLowRank(NumericalError):
    pass


class IndefiniteGram(NumericalError):
    pass


class NotUnit(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NotOrthogonal(DataError):
    pass


# imaging / estimation
class EmptyMask(ConfigError):
    pass


class EmptySupport(DataError):
    pass


class ZeroWeightCluster(DataError):
    pass


class GridMismatch(DataError):
    pass


class ComponentMismatch(DataError):
    pass


# solvers
class NumericalBreakdown(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class TooManyComponents(DataError):
    pass


class UnsupportedDeficit(DataError):
    pass
