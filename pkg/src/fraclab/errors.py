"""Exception taxonomy for fraclab.

Every error raised by the public API derives from :class:`FraclabError`,
so callers can catch the package's failures with a single except clause
while still distinguishing the precise failure mode.
"""


class FraclabError(Exception):
    """Base class for all fraclab errors."""


class OverlapError(FraclabError):
    """Index sets that must be separated touch or overlap."""


class DomainError(FraclabError):
    """A set leaves the computational box or is too small to resolve."""


class SupportError(FraclabError):
    """A field is nonzero outside its declared support region."""


class ParamError(FraclabError):
    """A scalar parameter is outside its admissible range."""


class ShapeError(FraclabError):
    """An array argument has the wrong shape for the target grid."""


class ConvergenceError(FraclabError):
    """An iterative routine failed to converge."""


class SingularSystemError(FraclabError):
    """A linear system factorization failed (singular matrix)."""


class BarrierError(FraclabError):
    """A constructed barrier failed its pointwise verification."""


class SmallnessError(FraclabError):
    """Data exceed the smallness radius on which the solver is certified."""


class DivergenceError(FraclabError):
    """A fixed-point iteration is diverging (growing updates)."""


class MissingBlockError(FraclabError):
    """A linearized-solution family lacks a required member."""


class StencilError(FraclabError):
    """A finite-difference stencil's step is inadmissible."""


class IllConditionedError(FraclabError):
    """An unregularized system is too ill-conditioned to solve reliably."""


class RankDeficientError(FraclabError):
    """A least-squares system has numerically deficient column rank."""


class ConfigError(FraclabError):
    """A run configuration is malformed or inconsistent."""
