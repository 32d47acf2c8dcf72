"""Semilinear reaction terms q(t, x, z) and their admissibility checks.

A reaction term enters the equations through its value and z-derivatives
on lattice profiles.  Admissible terms vanish to second order at z = 0
(no constant or linear part), stay smooth in z on a neighborhood
``|z| <= delta``, and carry finite derivative bounds there — these are
the structural conditions under which the nonlinear solvers contract and
the jet-recovery pipeline is meaningful.  The workhorse instance is a
polynomial in z with lattice-field coefficients,

    q(t, x, z) = sum_k c_k(t, x) z^k / k!,   k >= 2,

whose derivatives, slope modulus, and bounds are all exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .errors import ParamError
from .grid import _frozen

#: Shrink factor per step of the slope-modulus decay probe.
_PHI_SHRINK = 4.0
#: Number of shrink steps.
_PHI_STEPS = 3
#: Required decay of the slope modulus across the probe (linear decay
#: over three 4x shrinks would give 64; demand at least a quarter of it).
_PHI_DECAY = 16.0
#: Absolute tolerance for "vanishes at z = 0" checks.
_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class Nonlinearity:
    """Polynomial-in-z reaction term with lattice-field coefficients.

    Attributes
    ----------
    order : int
        Highest jet order the term is certified for; derivatives are
        available (exactly) to every order.
    delta : float
        Radius of the certified z-neighborhood.
    terms : tuple of (int, ndarray)
        Monomial degrees k >= 2 with their coefficient arrays, each
        stored 2-d: shape (1, 1) for constants, (1, n_points) for
        spatial fields, (n_steps + 1, n_points) for space-time fields.
    time_independent : bool
        True when no coefficient varies in time.
    """

    order: int
    delta: float
    terms: tuple[tuple[int, np.ndarray], ...]
    time_independent: bool

    def eval(self, k: int, t_index: int, z):
        """The k-th z-derivative at time node ``t_index`` and state ``z``.

        ``z`` may be a scalar or an array over the lattice; the result
        broadcasts coefficients against it.
        """
        if k < 0:
            raise ParamError(f"derivative order must be nonnegative, got {k}")
        z = np.asarray(z, dtype=float)
        total = np.zeros(np.broadcast_shapes(z.shape, (1,)))
        for degree, coeff in self.terms:
            if degree < k:
                continue
            row = coeff[0] if coeff.shape[0] == 1 else coeff[t_index]
            total = total + row * z ** (degree - k) / factorial(degree - k)
        return total

    def phi(self, eps: float) -> float:
        """Exact bound on ``sup |d_z q|`` over ``|z| <= eps``."""
        return float(
            sum(
                np.max(np.abs(coeff)) * eps ** (degree - 1) / factorial(degree - 1)
                for degree, coeff in self.terms
            )
        )

    def derivative_bound(self, k: int) -> float:
        """Exact bound M_k on ``sup |d_z^k q|`` over ``|z| <= delta``."""
        return float(
            sum(
                np.max(np.abs(coeff)) * self.delta ** (degree - k) / factorial(degree - k)
                for degree, coeff in self.terms
                if degree >= k
            )
        )


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the admissibility checks on a reaction term.

    Attributes
    ----------
    zero_at_origin_ok, flat_slope_ok, bounded_derivatives_ok : bool
        Pass/fail of the three sampled conditions: q(., 0) = 0, slope
        modulus decaying to zero at the origin, and finite derivative
        bounds on the certified neighborhood.
    value_at_origin : float
        Measured sup of |q(t, x, 0)|.
    slope_at_origin : float
        Measured sup of |d_z q(t, x, 0)|.
    slope_modulus : tuple of float
        Measured sup of |d_z q| over shrinking neighborhoods
        ``|z| <= delta / 4^j``.
    derivative_sups : dict of int to float
        Measured sup of |d_z^k q| over the sampled neighborhood,
        k = 2..order+1.
    """

    zero_at_origin_ok: bool
    flat_slope_ok: bool
    bounded_derivatives_ok: bool
    value_at_origin: float
    slope_at_origin: float
    slope_modulus: tuple[float, ...]
    derivative_sups: dict[int, float]

    @property
    def passed(self) -> bool:
        return (
            self.zero_at_origin_ok
            and self.flat_slope_ok
            and self.bounded_derivatives_ok
        )


def make_polynomial_q(coefficients, delta: float, m: int) -> Nonlinearity:
    """Build a polynomial reaction term ``sum_k c_k(t, x) z^k / k!``.

    Parameters
    ----------
    coefficients : iterable of (int, array_like)
        Pairs of monomial degree k and coefficient c_k; scalars, spatial
        profiles, and space-time arrays are all accepted.
    delta : float
        Radius of the certified z-neighborhood, positive.
    m : int
        Jet order the term is certified for, at least 2.

    Raises
    ------
    ParamError
        If any degree is below 2 (a constant or linear part would break
        the vanishing conditions at z = 0), degrees repeat, delta is not
        positive, or m < 2.
    """
    if not np.isfinite(delta) or delta <= 0.0:
        raise ParamError(f"delta must be positive, got {delta}")
    if m < 2:
        raise ParamError(f"jet order must be at least 2, got {m}")
    terms = []
    seen = set()
    for degree, coeff in coefficients:
        degree = int(degree)
        if degree < 2:
            raise ParamError(
                f"monomial degrees must be >= 2 (got {degree}); constant and "
                "linear parts are inadmissible"
            )
        if degree in seen:
            raise ParamError(f"duplicate monomial degree {degree}")
        seen.add(degree)
        arr = np.atleast_2d(np.asarray(coeff, dtype=float))
        if not np.all(np.isfinite(arr)):
            raise ParamError(f"coefficient for degree {degree} must be finite")
        terms.append((degree, _frozen(arr)))
    terms.sort(key=lambda item: item[0])
    time_independent = all(coeff.shape[0] == 1 for _, coeff in terms)
    return Nonlinearity(
        order=int(m),
        delta=float(delta),
        terms=tuple(terms),
        time_independent=time_independent,
    )


def check_assumptions(q, grid, timegrid, z_samples) -> AssumptionReport:
    """Sample the admissibility conditions of a reaction term.

    Checks, over all time nodes and the supplied z-samples:

    * the value vanishes at z = 0;
    * the slope vanishes at z = 0 and its modulus over ``|z| <= eps``
      decays as eps shrinks (three 4x shrinks must reduce it at least
      16-fold, unless it is already zero);
    * every derivative up to ``order + 1`` has a finite sup on
      ``|z| <= delta`` (compared against the term's own bound when it
      declares one).

    Failures are reported, not raised.

    Raises
    ------
    ParamError
        If any z-sample leaves ``[-delta, delta]``.
    """
    z_samples = np.asarray(z_samples, dtype=float)
    if np.any(np.abs(z_samples) > q.delta):
        raise ParamError("z-samples must lie inside [-delta, delta]")
    t_indices = range(timegrid.n_steps + 1)
    zeros = np.zeros(grid.n_points)

    value_sup = max(
        float(np.max(np.abs(q.eval(0, t, zeros)))) for t in t_indices
    )
    slope_sup = max(
        float(np.max(np.abs(q.eval(1, t, zeros)))) for t in t_indices
    )

    modulus = []
    eps = q.delta
    for _ in range(_PHI_STEPS + 1):
        z_probe = np.linspace(-eps, eps, 9)
        modulus.append(
            max(
                float(np.max(np.abs(q.eval(1, t, z))))
                for t in t_indices
                for z in z_probe
            )
        )
        eps /= _PHI_SHRINK
    flat_slope = slope_sup <= _ZERO_TOL and (
        modulus[0] <= _ZERO_TOL or modulus[-1] <= modulus[0] / _PHI_DECAY
    )

    derivative_sups = {}
    bounded = True
    for k in range(2, q.order + 2):
        sup_k = max(
            float(np.max(np.abs(q.eval(k, t, z))))
            for t in t_indices
            for z in z_samples
        )
        derivative_sups[k] = sup_k
        if not np.isfinite(sup_k):
            bounded = False
        bound = getattr(q, "derivative_bound", None)
        if bound is not None and sup_k > bound(k) * (1.0 + 1e-12):
            bounded = False

    return AssumptionReport(
        zero_at_origin_ok=value_sup <= _ZERO_TOL,
        flat_slope_ok=flat_slope,
        bounded_derivatives_ok=bounded,
        value_at_origin=value_sup,
        slope_at_origin=slope_sup,
        slope_modulus=tuple(modulus),
        derivative_sups=derivative_sups,
    )
