"""Exception hierarchy.

Validation problems (bad polytope data, bad weights, malformed spec files)
derive from :class:`ValidationError`; failures of a numerical procedure on
otherwise valid input derive from :class:`NumericalError`.  The CLI maps the
two families to distinct exit codes.
"""


class ToricStabError(Exception):
    """Base class for all package errors."""


class ValidationError(ToricStabError):
    pass


class NumericalError(ToricStabError):
    pass


# -- polytope ---------------------------------------------------------------

class PolytopeError(ValidationError):
    pass


class Unbounded(PolytopeError):
    pass


class EmptyInterior(PolytopeError):
    pass


class NotSimple(PolytopeError):
    pass


class RedundantLabel(PolytopeError):
    pass


class NonPositiveWeight(ValidationError):
    def __init__(self, message, vertex=None):
        super().__init__(message)
        self.vertex = vertex


class SpecFormatError(ValidationError):
    pass


# -- quadrature -------------------------------------------------------------

class DegenerateSimplex(NumericalError):
    pass


class NodeEvaluationFailure(NumericalError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


# -- potentials / curvature -------------------------------------------------

class BoundaryEvaluation(NumericalError):
    pass


class NotConvexAt(NumericalError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NotNormalized(ValidationError):
    pass


class BoundaryConditionFailure(ValidationError):
    """A potential fails the facet conditions that an identity relies on."""


# -- stability / energy -----------------------------------------------------

class IllConditionedGram(NumericalError):
    pass


class NotConvex(NumericalError):
    pass


class LostConvexity(NumericalError):
    pass


class MaxItersExceeded(NumericalError):
    """Raised only on request; by default the minimizer flags the result."""
