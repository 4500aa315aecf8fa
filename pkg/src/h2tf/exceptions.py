"""Exception and warning classes used across h2tf."""


class H2tfError(Exception):
    """Base class for all errors raised by h2tf."""


class DimensionMismatch(H2tfError, ValueError):
    pass


class NonDiagonalizable(H2tfError):
    """The state matrix has (numerically) repeated eigenvalues."""


class SingularShift(H2tfError):
    """``sI - A`` is numerically singular at the requested shift."""


class PoleHit(H2tfError):
    """Evaluation point coincides with a pole."""


class ConjugateClosureViolation(H2tfError):
    """A pole-residue model does not produce a real impulse response."""


class HorizonOverflow(H2tfError, OverflowError):
    """``exp(x * tf)`` would overflow double precision."""


class NegativeError(H2tfError):
    """The squared error came out negative beyond round-off."""


class NotConverged(H2tfError):
    """An iterative refinement did not reach its tolerance."""


class SingularM(H2tfError):
    """The residue Gram matrix cannot be factorized."""


class DegeneratePoles(SingularM):
    """Reduced poles are not pairwise distinct (so the residue Gram matrix is singular)."""


class PoleCollision(H2tfError):
    """Reduced poles merged during optimization."""


class RankDeficientSnapshots(H2tfError):
    pass


class GramianFailure(H2tfError):
    pass


class TieAtTruncation(H2tfError):
    """Singular values tie at the truncation index.

    Attributes
    ----------
    suggestion
        The nearest order with a strict gap, or ``None``.
    """

    def __init__(self, message, suggestion=None):
        super().__init__(message)
        self.suggestion = suggestion


class ParseError(H2tfError, ValueError):
    """Malformed input file.

    Attributes
    ----------
    path, line, column
        Location of the offending token (``line``/``column`` are 1-based and may
        be ``None`` when the problem is not tied to a position).
    """

    def __init__(self, message, path=None, line=None, column=None):
        loc = str(path) if path is not None else "<input>"
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}")
        self.path = path
        self.line = line
        self.column = column


class H2tfWarning(UserWarning):
    """Base class of the package's warnings."""


class LyapunovIllPosed(H2tfWarning):
    """The Lyapunov route was skipped; a quadrature Gramian is used instead."""


class IllConditioned(H2tfWarning):
    pass


class LineSearchFailed(H2tfWarning):
    pass
