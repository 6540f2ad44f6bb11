"""Exception types raised by pbcover."""


class PbcoverError(Exception):
    """Base class for all pbcover errors."""


class InvalidConfig(PbcoverError, ValueError):
    pass


class DegenerateGeometry(PbcoverError, ValueError):
    """A node sits on the reader or inside the minimum PB-BD separation."""


class UnsupportedShape(PbcoverError, ValueError):
    """Closed-form CDF requested for non-integer gamma shapes."""


class SingularParameterization(PbcoverError, ValueError):
    """Shape difference too close to an integer for the hypergeometric CDF."""


class NotApplicable(PbcoverError, ValueError):
    pass


class NumericalInstability(PbcoverError, ArithmeticError):
    pass


class FlatProfile(PbcoverError):
    """The SNR does not depend on the BD angle (PBs collocated with the reader)."""


class GridTooSmall(PbcoverError):
    """Covered cells reach the boundary of the evaluation grid."""
