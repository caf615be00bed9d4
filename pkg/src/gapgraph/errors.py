"""Exception types shared across the package."""


class GapGraphError(Exception):
    """Base class for all package errors."""


class NonPositiveLength(GapGraphError):
    """An edge (or pendant) length is zero or negative."""


class Disconnected(GapGraphError):
    """The graph is not connected."""


class DanglingEndpoint(GapGraphError):
    """An edge references a vertex that does not exist."""


class NotATree(GapGraphError):
    """A tree-only operation was requested on a graph with cycles."""


class PointAtVertex(GapGraphError):
    """A point expected in the interior of an edge lies at a vertex."""


class NotDisconnecting(GapGraphError):
    """Removing the given point does not disconnect the graph."""


class UnknownEdge(GapGraphError):
    """An edge id is not present in the graph."""


class UnknownVertex(GapGraphError):
    """A vertex id is not present in the graph."""


class DegenerateRange(GapGraphError):
    """No nonzero perturbation amplitude keeps the potential in its class."""


class MeshMisaligned(GapGraphError):
    """A potential breakpoint does not coincide with a mesh node."""


class SolverFailure(GapGraphError):
    """The eigenvalue solve did not converge; carries the residual if known."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketingFailure(GapGraphError):
    """Root bracketing for the secular equation failed."""


class DegenerateSecond(GapGraphError):
    """The second eigenvalue is degenerate; the scalar first-order formula
    does not apply and the matrix form must be used instead."""


class NotInClass(GapGraphError):
    """The candidate potential fails its declared class membership check."""


class BadFlags(GapGraphError):
    """Command-line flags are inconsistent or incomplete."""


class ParseError(GapGraphError):
    """An input file failed to parse; carries line/column when available."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column
