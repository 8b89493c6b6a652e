"""Exception hierarchy shared across the package.

Every failure mode the library reports deliberately has its own class so
callers (and the CLI exit-code mapping) can distinguish them without string
matching.
"""

from __future__ import annotations


class AssortgenError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AssortgenError):
    """Invalid configuration: bad value, unknown key, missing file."""


class SelfLoopError(AssortgenError, ValueError):
    """An edge (u, u) was supplied or would be created."""


class MultiEdgeError(AssortgenError, ValueError):
    """A duplicate undirected edge was supplied or would be created."""


class NodeIndexError(AssortgenError, ValueError):
    """A node index outside [0, n) was supplied."""


class DegenerateDegreeError(AssortgenError):
    """Degree sequence has zero endpoint-degree variance (e.g. regular graph);
    assortativity is undefined."""


class FrozenGraphError(AssortgenError):
    """No valid degree-preserving rewiring exists (or none was found)."""


class ExhaustedProposalsError(FrozenGraphError):
    """A proposal loop hit its resampling cap without finding a valid move."""


class InvalidActionError(AssortgenError, ValueError):
    """A rewiring action failed its validity check."""


class NotConvergedError(AssortgenError):
    """An iterative procedure did not converge within its budget.

    Carries ``best`` so callers can inspect the last/best iterate.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class InfeasibleTargetError(AssortgenError):
    """Requested target assortativity lies outside the feasible range."""


class CheckpointFormatError(AssortgenError):
    """Checkpoint file has an unknown format version or is malformed."""
