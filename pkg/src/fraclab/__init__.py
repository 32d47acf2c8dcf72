"""fraclab: a numerical laboratory for semilinear fractional heat and
wave equations in one dimension.

The package provides, on a shared uniform lattice:

* a dense collocation discretization of the fractional Laplacian with
  exterior (nonlocal Dirichlet) conditions,
* implicit-Euler and spectral-Galerkin solvers for linear and semilinear
  fractional heat equations, and a Newmark solver for the fractional
  wave equation,
* exterior measurement (Dirichlet-to-Neumann type) maps, higher-order
  linearizations with mixed finite-difference stencils,
* Runge-type approximation in the interior by exterior controls, and
* a jet-recovery pipeline reconstructing Taylor coefficients of the
  nonlinearity from exterior measurements.
"""

__version__ = "0.1.0"

from . import (
    errors,
    fracop,
    grid,
    heat,
    inverse,
    linearize,
    nonlinearity,
    runge,
    serialize,
    wave,
)

__all__ = [
    "cli",
    "errors",
    "fracop",
    "grid",
    "heat",
    "inverse",
    "linearize",
    "nonlinearity",
    "runge",
    "serialize",
    "verify",
    "wave",
    "__version__",
]


def __getattr__(name):
    # cli (argparse, matplotlib probe) and verify (the full acceptance
    # battery) are import-heavy; load them on first use only.
    if name in ("cli", "verify"):
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
