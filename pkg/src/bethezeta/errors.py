"""Exception hierarchy shared by all modules."""


class BetheZetaError(Exception):
    """Base class for all package errors."""


class GraphError(BetheZetaError, ValueError):
    """Invalid factor-graph description or construction."""


class EnumerationBoundError(BetheZetaError):
    """An exhaustive enumeration would exceed its configured bound."""


class NotSingleCycleError(GraphError):
    """The transfer-matrix oracle was given a graph that is not one cycle."""


class NotIsingError(GraphError):
    """A factor does not have the zero-field Ising form."""


class NumericalError(BetheZetaError, ArithmeticError):
    """A quantity is undefined or diverges numerically."""


class DegenerateMessageError(NumericalError):
    """A message or belief cannot be normalized (incompatible supports)."""


class SingularVarianceError(NumericalError):
    """A sufficient-statistic variance matrix is singular."""


class ZetaDivergenceError(NumericalError):
    """det(I - M(u)) vanishes: the edge zeta function diverges."""


class ZetaUndefinedError(NumericalError):
    """zeta(u) <= 0 at a Bethe minimum, so sqrt(zeta) is undefined."""
