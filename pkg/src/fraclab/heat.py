"""Linear and semilinear fractional diffusion solvers.

The linear problem

    (d_t + (-Delta)^s + a) u = F   on the interior set, t in (0, T],
    u = f                          on the exterior, u(0) = phi,

is reduced to a zero-exterior unknown v = u - f with modified source
F - (-Delta)^s f and marched by implicit Euler on the interior nodes:
the exterior coupling of v vanishes, so each step is a dense solve with
the interior principal submatrix.  The scheme is unconditionally stable
(the submatrix is positive semidefinite and the potential is absorbed at
the new time level).

The semilinear solver runs the fixed-point iteration

    v_{j+1} = S(-q(t, x, u_0 + v_j)),    u_0 = free solve of f,

which contracts in the sup norm while the iterates stay inside the
certified neighborhood |z| <= delta of the reaction term; leaving the
neighborhood or growing updates abort the iteration with a typed error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import (
    BarrierError,
    DivergenceError,
    ParamError,
    ShapeError,
    SingularSystemError,
    SmallnessError,
    SupportError,
)
from .fracop import FracOperator, apply, dirichlet_eigenpairs
from .grid import Grid, SpaceTimeField, TimeGrid, _frozen, _snap_open_interval

#: Fixed-point iteration cap.
MAX_PICARD_ITER = 100
#: Consecutive growing updates that count as divergence.
DIVERGENCE_RUN = 5
#: Relative fixed-point tolerance (scaled by max(1, sup of the free solution)).
TOL_FIX_FACTOR = 1e-10
#: Barrier enlargement: the stationary problem is posed on the interior
#: interval grown by this fraction of its radius on each side.
BARRIER_MARGIN = 0.5


@dataclass(frozen=True)
class HeatProblem:
    """Data of one linear diffusion problem.

    Attributes
    ----------
    op : FracOperator
        Spatial operator (fixes the grid).
    potential : SpaceTimeField or None
        Zeroth-order coefficient a(t, x); only its interior values act.
    source : SpaceTimeField or None
        Interior forcing F(t, x).
    exterior : SpaceTimeField or None
        Exterior data f(t, x), supported in the control region.
    initial : ndarray or None
        Initial profile phi, supported on the interior set.
    """

    op: FracOperator
    potential: SpaceTimeField | None = None
    source: SpaceTimeField | None = None
    exterior: SpaceTimeField | None = None
    initial: np.ndarray | None = None

    def __post_init__(self) -> None:
        grid = self.op.grid
        if self.exterior is not None:
            cols = np.nonzero(np.any(self.exterior.values != 0.0, axis=0))[0]
            if not np.isin(cols, grid.w_set).all():
                raise SupportError(
                    "exterior data must be supported in the control region"
                )
        if self.initial is not None:
            phi = np.asarray(self.initial, dtype=float)
            if phi.shape != (grid.n_points,):
                raise ShapeError(
                    f"initial profile has shape {phi.shape}, grid has "
                    f"{grid.n_points} nodes"
                )
            if not np.all(np.isfinite(phi)):
                raise ParamError("initial profile must be finite")
            off = np.setdiff1d(np.arange(grid.n_points), grid.omega)
            if np.any(phi[off] != 0.0):
                raise SupportError(
                    "initial profile must vanish outside the interior set"
                )
            object.__setattr__(self, "initial", _frozen(phi))


@dataclass(frozen=True)
class FixedPointTrace:
    """Record of one fixed-point iteration.

    Attributes
    ----------
    update_norms : tuple of float
        Sup norm of each iterate update.
    iterations : int
        Number of iterations performed.
    converged : bool
        Whether the final update met the tolerance.
    tolerance : float
        The absolute sup-norm tolerance used.
    """

    update_norms: tuple[float, ...]
    iterations: int
    converged: bool
    tolerance: float


@dataclass(frozen=True)
class Barrier:
    """Stationary barrier profile with its verified margin.

    The profile is nonnegative, vanishes outside the enlarged interior
    interval, and its operator image is >= 1 on the interior set; the
    growing-in-time field ``exp(t) * phi`` then dominates unit forcing.

    Attributes
    ----------
    phi : ndarray
        Barrier profile on the lattice.
    enlarged_interval : tuple of float
        The interval the stationary problem was posed on.
    image_min : float
        Minimum of the operator image over the interior set (>= 1).
    """

    phi: np.ndarray
    enlarged_interval: tuple[float, float]
    image_min: float

    def parabolic(self, timegrid: TimeGrid) -> SpaceTimeField:
        """The space-time barrier ``exp(t) * phi`` on the time lattice."""
        return SpaceTimeField(values=np.outer(np.exp(timegrid.times), self.phi))


def _field_rows(field: SpaceTimeField | None, timegrid: TimeGrid, grid: Grid):
    """Values of an optional field, validated against the lattices."""
    if field is None:
        return None
    expected = (timegrid.n_steps + 1, grid.n_points)
    if field.values.shape != expected:
        raise ShapeError(
            f"field shape {field.values.shape} does not match {expected}"
        )
    return field.values


def _step_solver(base: np.ndarray):
    """LU solve closure for one implicit step matrix."""
    try:
        lu = lu_factor(base)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"step matrix factorization failed: {exc}") from exc
    pivots = np.abs(np.diag(lu[0]))
    if not np.all(np.isfinite(lu[0])) or np.min(pivots) == 0.0:
        raise SingularSystemError(
            "step matrix is numerically singular; the operator data are corrupted"
        )
    return lambda rhs: lu_solve(lu, rhs)


def _march_interior(
    op: FracOperator,
    timegrid: TimeGrid,
    a_rows: np.ndarray | None,
    rhs_rows: np.ndarray | None,
    v0: np.ndarray,
) -> np.ndarray:
    """Implicit Euler on the interior nodes; returns (n_steps + 1, n_omega).

    ``a_rows`` and ``rhs_rows`` are interior slices per time node (or
    None for zero); the potential and right side are taken at the new
    time level.  The step matrix is factorized once when the potential
    is time-independent.
    """
    grid = op.grid
    omega = grid.omega
    n_omega = omega.size
    dt = timegrid.dt
    sub = op.matrix[np.ix_(omega, omega)]
    base = np.eye(n_omega) / dt + sub

    static = a_rows is None or np.all(a_rows == a_rows[0])
    if static:
        matrix = base if a_rows is None else base + np.diag(a_rows[0])
        solve_step = _step_solver(matrix)

    v = np.empty((timegrid.n_steps + 1, n_omega))
    v[0] = v0
    for k in range(timegrid.n_steps):
        rhs = v[k] / dt
        if rhs_rows is not None:
            rhs = rhs + rhs_rows[k + 1]
        if not static:
            solve_step = _step_solver(base + np.diag(a_rows[k + 1]))
        v[k + 1] = solve_step(rhs)
    return v


def _march_interior_batch(
    op: FracOperator, timegrid: TimeGrid, sources: np.ndarray
) -> np.ndarray:
    """Zero-data implicit Euler for a batch of interior sources.

    ``sources`` has shape (batch, n_steps + 1, n_omega); the potential is
    zero and all runs share one factorization, so each step is a single
    multi-column solve.  Returns the same shape.
    """
    omega = op.grid.omega
    dt = timegrid.dt
    base = np.eye(omega.size) / dt + op.matrix[np.ix_(omega, omega)]
    solve_step = _step_solver(base)

    batch = sources.shape[0]
    v = np.zeros((batch, timegrid.n_steps + 1, omega.size))
    for k in range(timegrid.n_steps):
        rhs = v[:, k] / dt + sources[:, k + 1]
        v[:, k + 1] = solve_step(rhs.T).T
    return v


def solve_linear(problem: HeatProblem, timegrid: TimeGrid) -> SpaceTimeField:
    """March the linear diffusion problem; returns the full-lattice field.

    The solution equals the exterior data off the interior set and the
    marched zero-exterior unknown on it.

    Raises
    ------
    ShapeError
        If a field does not match the lattices.
    SingularSystemError
        If a step matrix cannot be factorized (corrupted operator).
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

    a_interior = None if a_rows is None else a_rows[:, omega]
    v = _march_interior(op, timegrid, a_interior, rhs_rows, v0)

    values = np.zeros((timegrid.n_steps + 1, grid.n_points))
    if f_rows is not None:
        values += f_rows
    values[:, omega] = v
    return SpaceTimeField(values=values)


def solve_linear_galerkin(
    problem: HeatProblem, timegrid: TimeGrid, m_modes: int
) -> SpaceTimeField:
    """Spectral-Galerkin march of the zero-exterior diffusion problem.

    The unknown is expanded in the leading interior eigenmodes; the modal
    coefficients solve the coupled linear ODE system

        d' + (Lambda + A(t)) d = b(t),   A_kl(t) = (a(t) w_l, w_k),

    integrated by the same implicit Euler rule as the nodal solver, so
    at full mode count the two agree to roundoff.

    Raises
    ------
    ParamError
        If exterior data is present (reduce to zero exterior first).
    """
    op = problem.op
    grid = op.grid
    if problem.exterior is not None and np.any(problem.exterior.values != 0.0):
        raise ParamError(
            "spectral march requires zero exterior data; reduce the problem first"
        )
    basis = dirichlet_eigenpairs(op, grid, m_modes)
    modes = basis.modes[:, grid.omega]  # (m, n_omega)
    dt = timegrid.dt
    h = grid.h

    a_rows = _field_rows(problem.potential, timegrid, grid)
    src_rows = _field_rows(problem.source, timegrid, grid)

    d = np.zeros((timegrid.n_steps + 1, m_modes))
    if problem.initial is not None:
        d[0] = h * modes @ problem.initial[grid.omega]

    def coupling(k: int) -> np.ndarray:
        e = np.diag(basis.eigenvalues)
        if a_rows is not None:
            e = e + h * (modes * a_rows[k, grid.omega]) @ modes.T
        return e

    static = a_rows is None or np.all(a_rows == a_rows[0])
    if static:
        solve_step = _step_solver(np.eye(m_modes) / dt + coupling(0))

    for k in range(timegrid.n_steps):
        rhs = d[k] / dt
        if src_rows is not None:
            rhs = rhs + h * modes @ src_rows[k + 1, grid.omega]
        if not static:
            solve_step = _step_solver(np.eye(m_modes) / dt + coupling(k + 1))
        d[k + 1] = solve_step(rhs)

    values = np.zeros((timegrid.n_steps + 1, grid.n_points))
    values[:, grid.omega] = d @ modes
    return SpaceTimeField(values=values, support_mask=grid.omega)


def build_barrier(op: FracOperator, grid: Grid) -> Barrier:
    """Construct and verify the stationary barrier profile.

    The profile is twice the solution of the unit-source Dirichlet
    problem on the interior interval enlarged by half its radius, so its
    operator image is 2 on the enlarged set — comfortably above the
    required 1 on the interior set.

    Raises
    ------
    BarrierError
        If the enlarged interval does not fit inside the box, or the
        verification (profile >= 0, image >= 1 on the interior set)
        fails.
    """
    lo, hi = grid.omega_interval
    center, radius = 0.5 * (lo + hi), 0.5 * (hi - lo)
    enlarged = (center - (1.0 + BARRIER_MARGIN) * radius,
                center + (1.0 + BARRIER_MARGIN) * radius)
    if enlarged[0] <= -grid.box_halfwidth or enlarged[1] >= grid.box_halfwidth:
        raise BarrierError(
            f"enlarged interval {enlarged} leaves the box; grow the box or "
            "shrink the interior set"
        )
    indices = _snap_open_interval(grid.x, grid.h, *enlarged)
    sub = op.matrix[np.ix_(indices, indices)]
    try:
        w = np.linalg.solve(sub, np.ones(indices.size))
    except np.linalg.LinAlgError as exc:
        raise BarrierError(f"stationary barrier solve failed: {exc}") from exc

    phi = np.zeros(grid.n_points)
    phi[indices] = 2.0 * w
    image_min = float(np.min(apply(op, phi)[grid.omega]))
    if np.any(phi < 0.0) or image_min < 1.0:
        raise BarrierError(
            f"barrier verification failed: min profile {phi.min():.3e}, "
            f"interior image minimum {image_min:.3e}"
        )
    return Barrier(
        phi=_frozen(phi),
        enlarged_interval=enlarged,
        image_min=image_min,
    )


def picard_iterate(propagate, q, free_values: np.ndarray, timegrid: TimeGrid):
    """Shared fixed-point driver for the semilinear solvers.

    Parameters
    ----------
    propagate : callable
        Maps a full-lattice source array (n_steps + 1, n_points) to the
        zero-data solution array of the linear equation.
    q : Nonlinearity
        Certified reaction term.
    free_values : ndarray
        The free (reaction-less) solution driven by the exterior data.
    timegrid : TimeGrid

    Returns
    -------
    (ndarray, FixedPointTrace)
        Final iterate correction v and the iteration record.

    Raises
    ------
    SmallnessError
        If an iterate leaves the certified neighborhood |z| <= delta.
    DivergenceError
        If update norms grow for ``DIVERGENCE_RUN`` consecutive steps.
    """
    tol = TOL_FIX_FACTOR * max(1.0, float(np.max(np.abs(free_values))))
    v = np.zeros_like(free_values)
    updates: list[float] = []
    growth_run = 0
    converged = False

    for _ in range(MAX_PICARD_ITER):
        state = free_values + v
        reach = float(np.max(np.abs(state)))
        if reach > q.delta:
            raise SmallnessError(
                f"iterate reaches |z| = {reach:.3e} beyond the certified "
                f"neighborhood delta = {q.delta:.3e}; shrink the exterior data"
            )
        source = np.stack(
            [-np.broadcast_to(q.eval(0, k, state[k]), state[k].shape)
             for k in range(timegrid.n_steps + 1)]
        )
        v_next = propagate(source)
        update = float(np.max(np.abs(v_next - v)))
        updates.append(update)
        v = v_next
        if update <= tol:
            converged = True
            break
        if len(updates) >= 2 and update > updates[-2]:
            growth_run += 1
            if growth_run >= DIVERGENCE_RUN:
                raise DivergenceError(
                    f"fixed-point updates grew for {DIVERGENCE_RUN} consecutive "
                    f"iterations (last {update:.3e})"
                )
        else:
            growth_run = 0

    trace = FixedPointTrace(
        update_norms=tuple(updates),
        iterations=len(updates),
        converged=converged,
        tolerance=tol,
    )
    return v, trace


def solve_nonlinear(
    op: FracOperator, q, f: SpaceTimeField | None, timegrid: TimeGrid
):
    """Semilinear diffusion solve driven by exterior data.

    Returns the solution field and the fixed-point trace.

    Raises
    ------
    SmallnessError, DivergenceError
        From the fixed-point driver.
    """
    grid = op.grid
    free = solve_linear(HeatProblem(op=op, exterior=f), timegrid)

    def propagate(source: np.ndarray) -> np.ndarray:
        rows = source[:, grid.omega]
        v = _march_interior(op, timegrid, None, rows, np.zeros(grid.omega.size))
        values = np.zeros_like(source)
        values[:, grid.omega] = v
        return values

    v, trace = picard_iterate(propagate, q, free.values, timegrid)
    return SpaceTimeField(values=free.values + v), trace
