"""Exception hierarchy.

Every failure the library signals on purpose derives from :class:`EPBError`,
so callers (and the CLI) can separate numerical/validation failures from bugs.
"""


class EPBError(Exception):
    """Base class for all library errors."""


class SelfOrthogonal(EPBError):
    """Right eigenvector is (numerically) orthogonal to its own transpose.

    Raised near an exceptional point, where biorthogonal normalization
    diverges.
    """


class DegenerateLoop(EPBError, ValueError):
    """Loop has fewer than three anchors or repeats consecutive anchors."""


class UnknownLoop(EPBError, KeyError):
    """No built-in loop with the requested name."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown loop"


class RefinementDiverged(EPBError):
    """Adaptive refinement hit its depth limit (loop runs through an EP)."""


class AssociationAmbiguous(EPBError):
    """Continuity association of states along a loop is under-resolved."""


class NotQuantized(EPBError):
    """A topological invariant did not round to an integer within tolerance."""


class ZeroOverlap(EPBError):
    """Consecutive states have vanishing biorthogonal overlap."""


class SingularOverlapMatrix(EPBError):
    """Multiband overlap matrix is singular."""


class NotConverged(EPBError):
    """Least-squares fit failed to converge."""


class BadInitialization(EPBError):
    """Initial guess of a fit produced a non-finite residual."""


class RankDeficient(EPBError):
    """Linear design matrix is too ill-conditioned to solve."""


class PipelineFailure(EPBError):
    """Too many per-point fits failed in the retrieval pipeline."""

    def __init__(self, message, failed=()):
        super().__init__(message)
        self.failed = list(failed)
