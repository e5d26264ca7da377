"""Exception types shared across the laboratory."""


class ToruslabError(Exception):
    """Base class for all laboratory errors."""


class NonHyperbolic(ToruslabError):
    """An integer matrix has an eigenvalue of modulus one (or a complex pair)."""


class Expanding(ToruslabError):
    """Both eigenvalues have modulus above one; no stable direction exists."""


class Degenerate(ToruslabError):
    """det(A^n - I) = 0, so the periodic-point count is undefined."""


class ConeFailure(ToruslabError):
    """Cone-field parameter validation failed.

    ``which`` names the first violated inequality.
    """

    def __init__(self, which, detail=""):
        self.which = which
        super().__init__(f"cone inequality {which} violated{': ' + detail if detail else ''}")


class SupportOverlap(ToruslabError):
    """Lattice translates of the perturbation support intersect on the plane."""


class RegionIntersectsLambda(ToruslabError):
    """Requested shear region meets the estimated injectivity set."""


class ConeBroken(ToruslabError):
    """A perturbation destroyed the verified cone certificate."""


class NewtonDivergence(ToruslabError):
    """Newton inversion of a lift failed to converge."""


class NotConverged(ToruslabError):
    """An invariant-direction computation missed its Cauchy criterion."""


class BudgetTooSmall(ToruslabError):
    """A deck-class budget produced a solution at the budget boundary."""


class IntegrationFailure(ToruslabError):
    """The implicit slope equation for the conservative circle pair broke down."""


class LeafIntegrationFailure(ToruslabError):
    """Leaf integration could not evaluate its direction field."""


class FailNoDomination(ToruslabError):
    """Neither domination inequality holds on the grid."""


class VersionMismatch(ToruslabError):
    """Reports produced by different artifact versions cannot be merged."""
