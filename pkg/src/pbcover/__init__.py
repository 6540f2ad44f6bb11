"""Power-beacon placement for bistatic backscatter coverage."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateGeometry,
    FlatProfile,
    GridTooSmall,
    InvalidConfig,
    NotApplicable,
    NumericalInstability,
    PbcoverError,
    SingularParameterization,
    UnsupportedShape,
)
