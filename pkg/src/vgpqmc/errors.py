"""Exception types shared across the package."""


class ParseError(ValueError):
    """Input document is malformed or violates the schema."""


class HermiticityError(ValueError):
    """Matrix entries violate the Hermiticity tolerance."""


class DimensionError(ValueError):
    """Dimension or index outside the supported range."""


class MissingEdge(LookupError):
    """A requested vertex pair carries no edge."""


class NotVgp(ValueError):
    """Curing requested for a graph with a non-vanishing cycle phase."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = tuple(violations)


class NearDegenerate(ValueError):
    """Inputs too close for the naive divided-difference formula."""


class NotClosed(ValueError):
    """Operator sequence does not return the walk to its initial state."""


class Undefined(ValueError):
    """Walk stepped through a state where a partial permutation has no image."""


class BudgetExceeded(RuntimeError):
    """Enumeration or chain work surpassed the configured budget."""


class ZeroWeightTrap(RuntimeError):
    """Sampler cannot leave a region of vanishing scheme weight."""
