"""Constructive interior approximation by exterior controls.

The interior traces of free diffusion solves driven by exterior bumps
are dense in the interior space-time square norm; this module makes
that density constructive at desk scale: assemble a nested family of
control bumps, compute their interior traces once, and solve a
regularized least-squares problem for the combination closest to a
prescribed target.

Density comes without stability, and the Gram matrices of a smoothing
forward map are severely ill-conditioned, so the normal equations are
shifted by a small multiple of the identity by default and refuse to
run unregularized once the condition estimate is hopeless.  The norm of
the synthesized coefficient vector is reported alongside the residual:
chasing smaller residuals costs rapidly growing controls, and the
caller should see that trade, not have it hidden.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh

from .errors import IllConditionedError, ParamError, ShapeError
from .fracop import FracOperator, spacetime_inner
from .grid import Grid, SpaceTimeField, TimeGrid, make_bump
from .heat import HeatProblem, solve_linear

#: Condition-number estimate beyond which unregularized normal
#: equations are refused.
MAX_GRAM_CONDITION = 1e14

#: Default ridge: this multiple of the mean Gram diagonal.
DEFAULT_RIDGE_FACTOR = 1e-8

#: Largest control family the master sequence provides (8 centers x 8
#: windows).
MAX_BASIS_SIZE = 64


@dataclass(frozen=True)
class ControlBasis:
    """Nested family of exterior controls with precomputed traces.

    Attributes
    ----------
    elements : tuple of SpaceTimeField
        Exterior bumps supported in the control region.
    traces : ndarray
        Interior traces, shape (K, n_steps + 1, n_points); rows vanish
        off the interior set.
    gram : ndarray
        K x K matrix of space-time inner products of the traces.
    """

    elements: tuple[SpaceTimeField, ...]
    traces: np.ndarray
    gram: np.ndarray


@dataclass(frozen=True)
class Approximation:
    """Result of one least-squares control synthesis.

    Attributes
    ----------
    coefficients : ndarray
        Combination weights for the basis elements.
    residual : float
        Achieved interior distance to the target.
    control_norm : float
        Euclidean norm of the coefficients — the cost of the control,
        reported because it grows as residual targets shrink.
    """

    coefficients: np.ndarray
    residual: float
    control_norm: float


def forward_map(
    op: FracOperator,
    potential: SpaceTimeField | None,
    f: SpaceTimeField,
    timegrid: TimeGrid,
) -> SpaceTimeField:
    """Interior trace of the free linear solve driven by exterior f."""
    problem = HeatProblem(op=op, potential=potential, exterior=f)
    u = solve_linear(problem, timegrid)
    grid = op.grid
    values = np.zeros_like(u.values)
    values[:, grid.omega] = u.values[:, grid.omega]
    return SpaceTimeField(values=values, support_mask=grid.omega)


def _bit_reverse3(k: int) -> int:
    return ((k & 1) << 2) | (k & 2) | ((k & 4) >> 2)


def _master_controls(grid: Grid, timegrid: TimeGrid, count: int):
    """First ``count`` elements of the deterministic control sequence.

    An 8 x 8 tensor family (spatial centers across the control region,
    time windows across the horizon) walked in a bit-reversed order so
    every prefix spreads over both coordinates; prefixes are nested by
    construction.
    """
    if not 1 <= count <= MAX_BASIS_SIZE:
        raise ParamError(
            f"basis size must lie in [1, {MAX_BASIS_SIZE}], got {count}"
        )
    w_lo, w_hi = grid.w_interval
    horizon = timegrid.horizon
    radii = np.linspace(0.06, 0.10, 8) * (w_hi - w_lo) / 0.6
    margin = radii.max() + 2.0 * grid.h
    centers = np.linspace(w_lo + margin, w_hi - margin, 8)
    onsets = np.linspace(0.05, 0.55, 8) * horizon
    duration = 0.35 * horizon
    out = []
    for k in range(count):
        r, q = k % 8, k // 8
        i = _bit_reverse3(r)
        j = _bit_reverse3(r ^ q)
        out.append(
            make_bump(
                grid,
                timegrid,
                center=float(centers[i]),
                radius=float(radii[j]),
                t_on=float(onsets[j]),
                t_off=float(onsets[j] + duration),
            )
        )
    return out


def build_basis(
    op: FracOperator,
    potential: SpaceTimeField | None,
    timegrid: TimeGrid,
    count: int,
) -> ControlBasis:
    """Assemble the first ``count`` master controls and their Gram data."""
    grid = op.grid
    elements = tuple(_master_controls(grid, timegrid, count))
    traces = np.stack(
        [forward_map(op, potential, f, timegrid).values for f in elements]
    )
    gram = np.empty((count, count))
    for i in range(count):
        for j in range(i, count):
            value = spacetime_inner(
                traces[i], traces[j], grid, timegrid, grid.omega
            )
            gram[i, j] = value
            gram[j, i] = value
    return ControlBasis(elements=elements, traces=traces, gram=gram)


def approximate(
    target,
    basis: ControlBasis,
    op: FracOperator,
    timegrid: TimeGrid,
    reg: float | None = None,
) -> Approximation:
    """Least-squares combination of basis traces closest to the target.

    Solves ``(Gram + reg I) c = moments`` by symmetric factorization;
    ``reg=None`` selects the default ridge, ``reg=0.0`` is exact normal
    equations and is refused when the Gram condition estimate exceeds
    MAX_GRAM_CONDITION.

    Raises
    ------
    IllConditionedError
        If ``reg=0`` and the Gram matrix is numerically singular.
    """
    grid = op.grid
    values = target.values if isinstance(target, SpaceTimeField) else np.asarray(
        target, dtype=float
    )
    expected = (timegrid.n_steps + 1, grid.n_points)
    if values.shape != expected:
        raise ShapeError(f"target shape {values.shape}, expected {expected}")
    count = len(basis.elements)
    gram = basis.gram
    if reg is None:
        reg = DEFAULT_RIDGE_FACTOR * float(np.trace(gram)) / count
    if reg < 0.0 or not np.isfinite(reg):
        raise ParamError(f"regularization must be nonnegative, got {reg}")
    if reg == 0.0:
        spectrum = eigh(gram, eigvals_only=True)
        floor = spectrum[-1] / MAX_GRAM_CONDITION
        if spectrum[0] <= floor:
            raise IllConditionedError(
                f"Gram condition estimate exceeds {MAX_GRAM_CONDITION:.0e}; "
                "pass reg > 0"
            )
    moments = np.array(
        [
            spacetime_inner(trace, values, grid, timegrid, grid.omega)
            for trace in basis.traces
        ]
    )
    try:
        coeff = cho_solve(cho_factor(gram + reg * np.eye(count)), moments)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(
            "normal equations could not be factorized; pass a larger reg"
        ) from exc
    combined = np.tensordot(coeff, basis.traces, axes=1)
    residual = np.sqrt(
        spacetime_inner(
            combined - values, combined - values, grid, timegrid, grid.omega
        )
    )
    return Approximation(
        coefficients=coeff,
        residual=float(residual),
        control_norm=float(np.linalg.norm(coeff)),
    )
