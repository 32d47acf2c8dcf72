"""Linear and semilinear fractional wave solvers.

The wave problem

    (d_t^2 + (-Delta)^s + a) u = F   on the interior set, t in (0, T],
    u = f on the exterior,  u(0) = phi,  d_t u(0) = psi,

is only treated for orders s > 1/2: that is the regime in which the
one-dimensional theory controls solutions pointwise, and computing
outside it would silently leave the supported territory, so lower orders
are a hard error.

Time stepping is the implicit Newmark rule with the constant-average
acceleration parameters (beta = 1/4, gamma = 1/2): unconditionally
stable, second-order accurate, and free of algorithmic damping, so the
discrete energy of free evolutions is preserved up to bounded
oscillation.  The initial acceleration is taken from the equation at
t = 0, which keeps the two-field initial data second-order consistent.
The exterior reduction mirrors the diffusion solver: v = u - f vanishes
outside the interior set and feels the source F - (-Delta)^s f.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParamError, ShapeError, SupportError
from .fracop import FracOperator
from .grid import SpaceTimeField, TimeGrid, _frozen
from .heat import _field_rows, _step_solver, picard_iterate

#: Orders at or below this value are outside the supported wave regime.
MIN_WAVE_ORDER = 0.5


def _require_wave_order(s: float) -> None:
    if s <= MIN_WAVE_ORDER:
        raise ParamError(
            f"wave solves require order s > {MIN_WAVE_ORDER}, got s = {s}; "
            "below that threshold solutions are not controlled pointwise"
        )


@dataclass(frozen=True)
class WaveProblem:
    """Data of one linear wave problem.

    Attributes
    ----------
    op : FracOperator
        Spatial operator with order s > 1/2.
    potential : SpaceTimeField or None
        Zeroth-order coefficient a(t, x).
    source : SpaceTimeField or None
        Interior forcing F(t, x).
    exterior : SpaceTimeField or None
        Exterior data f(t, x), supported in the control region.
    initial : ndarray or None
        Initial position phi, supported on the interior set.
    velocity : ndarray or None
        Initial velocity psi, supported on the interior set.
    """

    op: FracOperator
    potential: SpaceTimeField | None = None
    source: SpaceTimeField | None = None
    exterior: SpaceTimeField | None = None
    initial: np.ndarray | None = None
    velocity: np.ndarray | None = None

    def __post_init__(self) -> None:
        _require_wave_order(self.op.s)
        grid = self.op.grid
        if self.exterior is not None:
            cols = np.nonzero(np.any(self.exterior.values != 0.0, axis=0))[0]
            if not np.isin(cols, grid.w_set).all():
                raise SupportError(
                    "exterior data must be supported in the control region"
                )
        off = np.setdiff1d(np.arange(grid.n_points), grid.omega)
        for name in ("initial", "velocity"):
            profile = getattr(self, name)
            if profile is None:
                continue
            profile = np.asarray(profile, dtype=float)
            if profile.shape != (grid.n_points,):
                raise ShapeError(
                    f"{name} profile has shape {profile.shape}, grid has "
                    f"{grid.n_points} nodes"
                )
            if not np.all(np.isfinite(profile)):
                raise ParamError(f"{name} profile must be finite")
            if np.any(profile[off] != 0.0):
                raise SupportError(
                    f"{name} profile must vanish outside the interior set"
                )
            object.__setattr__(self, name, _frozen(profile))


def _newmark_interior(
    op: FracOperator,
    timegrid: TimeGrid,
    a_rows: np.ndarray | None,
    rhs_rows: np.ndarray | None,
    v0: np.ndarray,
    vdot0: np.ndarray,
) -> np.ndarray:
    """Average-acceleration Newmark march on the interior nodes.

    ``a_rows``/``rhs_rows`` are interior slices per time node (or None
    for zero).  Returns positions of shape (n_steps + 1, n_omega).
    """
    grid = op.grid
    omega = grid.omega
    dt = timegrid.dt
    sub = op.matrix[np.ix_(omega, omega)]
    eye = np.eye(omega.size)

    def stiffness(k: int) -> np.ndarray:
        return sub if a_rows is None else sub + np.diag(a_rows[k])

    def forcing(k: int) -> np.ndarray:
        return np.zeros(omega.size) if rhs_rows is None else rhs_rows[k]

    static = a_rows is None or np.all(a_rows == a_rows[0])
    if static:
        solve_step = _step_solver(eye + 0.25 * dt * dt * stiffness(0))

    v = np.empty((timegrid.n_steps + 1, omega.size))
    v[0] = v0
    vdot = vdot0.copy()
    accel = forcing(0) - stiffness(0) @ v0
    for k in range(timegrid.n_steps):
        rhs = v[k] + dt * vdot + 0.25 * dt * dt * (accel + forcing(k + 1))
        if not static:
            solve_step = _step_solver(eye + 0.25 * dt * dt * stiffness(k + 1))
        v[k + 1] = solve_step(rhs)
        accel_next = forcing(k + 1) - stiffness(k + 1) @ v[k + 1]
        vdot = vdot + 0.5 * dt * (accel + accel_next)
        accel = accel_next
    return v


def solve_linear_wave(problem: WaveProblem, timegrid: TimeGrid) -> SpaceTimeField:
    """March the linear wave problem; returns the full-lattice field.

    Raises
    ------
    ParamError
        If the operator order is at or below 1/2.
    ShapeError
        If a field does not match the lattices.
    SingularSystemError
        If a step matrix cannot be factorized.
    """
    op = problem.op
    grid = op.grid
    omega = grid.omega

    a_rows = _field_rows(problem.potential, timegrid, grid)
    f_rows = _field_rows(problem.exterior, timegrid, grid)
    src_rows = _field_rows(problem.source, timegrid, grid)

    rhs_rows = None
    if src_rows is not None:
        rhs_rows = src_rows[:, omega].copy()
    if f_rows is not None:
        lifted = (f_rows @ op.matrix)[:, omega]
        rhs_rows = -lifted if rhs_rows is None else rhs_rows - lifted

    v0 = np.zeros(omega.size)
    if problem.initial is not None:
        v0 = problem.initial[omega]
    vdot0 = np.zeros(omega.size)
    if problem.velocity is not None:
        vdot0 = problem.velocity[omega]

    a_interior = None if a_rows is None else a_rows[:, omega]
    v = _newmark_interior(op, timegrid, a_interior, rhs_rows, v0, vdot0)

    values = np.zeros((timegrid.n_steps + 1, grid.n_points))
    if f_rows is not None:
        values += f_rows
    values[:, omega] = v
    return SpaceTimeField(values=values)


def time_derivative(values: np.ndarray, timegrid: TimeGrid) -> np.ndarray:
    """Second-order time derivative of a sampled field (central inside,
    one-sided at the ends)."""
    dt = timegrid.dt
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dt)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dt)
    return out


def energy_series(
    u: SpaceTimeField, op: FracOperator, grid, timegrid: TimeGrid
) -> np.ndarray:
    """Mechanical energy of a free evolution at each time node.

    ``E(t) = 1/2 ||d_t u||^2_{L2(omega)} + 1/2 (op u, u)_{L2}``; the
    velocity is reconstructed from the position samples at second order.
    Meaningful for fields from free evolutions (no forcing, no exterior
    data, no potential).
    """
    values = u.values
    if values.shape != (timegrid.n_steps + 1, grid.n_points):
        raise ShapeError(
            f"field shape {values.shape} does not match "
            f"({timegrid.n_steps + 1}, {grid.n_points})"
        )
    velocity = time_derivative(values, timegrid)
    kinetic = 0.5 * grid.h * np.sum(velocity[:, grid.omega] ** 2, axis=1)
    images = values @ op.matrix
    potential = 0.5 * grid.h * np.sum(images * values, axis=1)
    return kinetic + potential


def solve_nonlinear_wave(
    op: FracOperator, q, f: SpaceTimeField | None, timegrid: TimeGrid
):
    """Semilinear wave solve driven by exterior data.

    Runs the same fixed-point iteration as the diffusion solver with the
    wave propagator; returns the solution field and the trace.

    Raises
    ------
    ParamError
        If the operator order is at or below 1/2.
    SmallnessError, DivergenceError
        From the fixed-point driver.
    """
    _require_wave_order(op.s)
    grid = op.grid
    free = solve_linear_wave(WaveProblem(op=op, exterior=f), timegrid)

    def propagate(source: np.ndarray) -> np.ndarray:
        rows = source[:, grid.omega]
        zeros = np.zeros(grid.omega.size)
        v = _newmark_interior(op, timegrid, None, rows, zeros, zeros)
        values = np.zeros_like(source)
        values[:, grid.omega] = v
        return values

    v, trace = picard_iterate(propagate, q, free.values, timegrid)
    return SpaceTimeField(values=free.values + v), trace
