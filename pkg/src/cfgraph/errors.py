"""Exception hierarchy.

``ValidationError`` subclasses map to CLI exit code 2, ``NumericalError``
subclasses to exit code 3.
"""


class CfgraphError(Exception):
    pass


class ValidationError(CfgraphError, ValueError):
    pass


class NumericalError(CfgraphError, ArithmeticError):
    pass


class DimensionMismatch(ValidationError):
    pass


class WidthMismatch(DimensionMismatch):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NoTrainEdges(ValidationError):
    """The train-induced subgraph has no edges, so h_adj is undefined."""


class TargetMissing(ValidationError):
    pass


class NotLocalityEligible(ValidationError):
    """The model has a non-local component; use the full re-solve."""


class KindMismatch(ValidationError):
    pass


class DegenerateSets(ValidationError):
    pass


class SingleClassAuc(ValidationError):
    pass


class MissingFile(ValidationError):
    pass


class MaskOverlap(ValidationError):
    pass


class NotPositiveDefinite(NumericalError):
    pass
