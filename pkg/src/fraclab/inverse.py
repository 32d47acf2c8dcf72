"""Jet recovery from exterior measurements.

The pipeline reconstructs the Taylor coefficients of the reaction term
at state zero, one order at a time.  For order k it measures the k-th
mixed central difference of the (possibly black-box) measurement map
over tuples of exterior inputs, subtracts the contribution of the jets
already recovered, and poses what is left as a linear source inversion:
the unknown coefficient multiplies the product of the tuple's first
linearized fields, and the stacked, Tikhonov-regularized least-squares
problem over all tuples is solved for the coefficient on the interior
lattice.

Division by the product field — the textbook shortcut — is deliberately
avoided: products of diffused bumps are tiny over much of the interior,
and pointwise division amplifies exactly where the data say least.  The
regularized least squares aggregates all tuples instead, and the
diagnostics report the combined product magnitude as a sensitivity
field: outside the region it covers, the recovered coefficient is
extrapolation, not measurement.

A synthetic oracle factory supports an inverse-crime-free mode in which
the hidden ground-truth model lives on a spatial lattice twice as fine
as the one the inversion runs on, plus optional additive Gaussian
noise, applied deterministically per input so the oracle stays a
function.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_factor, cho_solve, eigh, lu_factor, lu_solve

from . import heat, wave
from .errors import (
    DivergenceError,
    ParamError,
    RankDeficientError,
    ShapeError,
    SmallnessError,
    SupportError,
)
from .fracop import FracOperator, assemble, ext_norm
from .grid import Grid, SpaceTimeField, TimeGrid, build_grid, make_bump
from .linearize import (
    EQUATIONS,
    DNData,
    Model,
    dn_map,
    first_linearized,
    linearized_solution,
    make_family,
    stencil_difference,
)
from .nonlinearity import make_polynomial_q

#: Spatial refinement of the hidden model in decoupled mode.
DECOUPLE_FACTOR = 2

#: Condition-estimate ceiling for unregularized source inversion.
MAX_STACK_CONDITION = 1e14

#: Base mixed-difference step at order 2 when the config leaves it open;
#: each further order doubles it (the stencil quotient divides solver
#: noise by eps^k, so higher orders need coarser steps), capped below.
DEFAULT_RECOVERY_STEP = 0.05

#: Largest default mixed-difference step.
MAX_RECOVERY_STEP = 0.2


def default_recovery_step(k: int) -> float:
    """Default stencil step for order ``k``: doubled per order above 2."""
    return min(DEFAULT_RECOVERY_STEP * 2.0 ** (k - 2), MAX_RECOVERY_STEP)

#: Default Tikhonov weight, relative to the mean normal-matrix diagonal.
DEFAULT_INVERSION_RIDGE = 1e-10


@dataclass(frozen=True)
class DNOracle:
    """Measurement source: a deterministic map from exterior data to
    DNData, plus the largest exterior norm it accepts.

    Attributes
    ----------
    evaluate : callable
        SpaceTimeField -> DNData; identical inputs must yield identical
        outputs.
    budget : float
        Maximum admissible exterior norm; larger inputs raise
        SmallnessError.
    """

    evaluate: object
    budget: float


@dataclass(frozen=True)
class RecoveryConfig:
    """Everything the recovery loop needs besides the oracle.

    Attributes
    ----------
    op : FracOperator
        Inversion-side operator (fixes the lattice).
    timegrid : TimeGrid
        Inversion-side time lattice.
    order : int
        Highest jet order to recover (>= 2).
    tuples : dict
        Per order k: a sequence of k-tuples of exterior inputs.
    steps : dict
        Per order k: mixed-difference step (missing -> default).
    regularization : dict
        Per order k: Tikhonov weight (missing -> scaled default).
    time_independent : bool
        Recover coefficients c_k(x) instead of c_k(t, x).
    equation : str
        "heat" or "wave".
    """

    op: FracOperator
    timegrid: TimeGrid
    order: int
    tuples: dict
    steps: dict = field(default_factory=dict)
    regularization: dict = field(default_factory=dict)
    time_independent: bool = True
    equation: str = "heat"

    def __post_init__(self) -> None:
        if self.steps is None:
            object.__setattr__(self, "steps", {})
        if self.regularization is None:
            object.__setattr__(self, "regularization", {})
        if self.order < 2:
            raise ParamError(f"recovery order must be >= 2, got {self.order}")
        if self.equation not in EQUATIONS:
            raise ParamError(
                f"equation must be one of {EQUATIONS}, got {self.equation!r}"
            )
        grid = self.op.grid
        off_w = np.setdiff1d(np.arange(grid.n_points), grid.w_set)
        for k in range(2, self.order + 1):
            group = self.tuples.get(k)
            if not group:
                raise ParamError(f"no input tuples supplied for order {k}")
            for bundle in group:
                if len(bundle) != k:
                    raise ParamError(
                        f"order-{k} tuples must have {k} inputs, got "
                        f"{len(bundle)}"
                    )
                for g in bundle:
                    if np.any(g.values[:, off_w] != 0.0):
                        raise SupportError(
                            "recovery inputs must be supported in the "
                            "control region"
                        )
                if self.time_independent:
                    shared = None
                    for g in bundle:
                        active = np.any(g.values != 0.0, axis=1)
                        rows = set(np.nonzero(active)[0].tolist())
                        shared = rows if shared is None else shared & rows
                    if not shared:
                        raise ParamError(
                            "time-independent recovery needs a time node "
                            "where every input in a tuple is active"
                        )


@dataclass(frozen=True)
class InversionDiagnostics:
    """Report attached to one recovered coefficient.

    Attributes
    ----------
    regularization : float
        Tikhonov weight actually used.
    condition : float
        Condition estimate of the stacked forward map (squared system).
    residual : float
        Euclidean residual of the stacked system at the minimizer.
    data_norm : float
        Euclidean norm of the stacked data.
    sensitivity : ndarray
        Combined product magnitude: where it is small, the recovered
        coefficient is unconstrained by the data.
    step : float
        Mixed-difference step used for the measurements (0 when the data
        were supplied directly).
    retried : bool
        Whether the step was halved after a budget refusal.
    method : str
        Linear-algebra route, for the record.
    data_provenance : str
        Provenance labels found on the data blocks, echoed so reports of
        self-tests against same-lattice data identify themselves.
    """

    regularization: float
    condition: float
    residual: float
    data_norm: float
    sensitivity: np.ndarray
    step: float = 0.0
    retried: bool = False
    method: str = "dense-normal-equations"
    data_provenance: str = ""


@dataclass(frozen=True)
class JetEstimate:
    """Aggregated recovery result.

    ``jets[k]`` is the coefficient of z^k/k! at state zero: orders 0 and
    1 are identically zero by the certified-model assumptions; orders
    2..m are recovered.  ``status`` is "complete" or a failure tag naming
    the first order that failed.
    """

    jets: dict
    residuals: dict
    diagnostics: dict
    status: str


def refine_grid(grid: Grid) -> Grid:
    """Same geometry, lattice spacing halved (shared nodes preserved)."""
    return build_grid(
        grid.box_halfwidth,
        DECOUPLE_FACTOR * (grid.n_points - 1) + 1,
        grid.omega_interval,
        grid.w_interval,
        grid.v_interval,
    )


def _inject_rows(values: np.ndarray, coarse: Grid, fine: Grid) -> np.ndarray:
    """Spline coarse spatial rows onto the fine lattice.

    Coarse nodes are fine nodes, so the coarse samples are reproduced;
    the spline fills the midpoints smoothly (linear filling would
    perturb the effective input at second order in the coarse spacing,
    which the inversion would then see as data error).
    """
    return CubicSpline(coarse.x, values, axis=1)(fine.x)


def _restrict_dn(values: np.ndarray, fine: Grid, coarse: Grid) -> np.ndarray:
    """Sample fine-lattice measurement rows at the coarse nodes."""
    fine_index = {round(float(x) / fine.h): i for i, x in enumerate(fine.x)}
    cols = [fine_index[round(float(coarse.x[i]) / fine.h)] for i in coarse.v_set]
    col_of_v = [fine.v_set.tolist().index(c) for c in cols]
    return values[:, col_of_v]


def make_synthetic_oracle(
    model: Model,
    timegrid: TimeGrid,
    budget: float = np.inf,
    noise: float = 0.0,
    seed: int = 0,
    decoupled: bool = False,
) -> DNOracle:
    """Package a ground-truth model as a black-box measurement oracle.

    ``decoupled=True`` rebuilds the model on a spatial lattice twice as
    fine, interpolating the reaction coefficients, so the data are not
    generated by the inversion's spatial discretization — the lattice
    the unknown coefficient lives on (no inverse crime).  ``noise > 0``
    adds Gaussian perturbations of that standard deviation to every
    measurement, drawn deterministically from the seed and the input
    bytes.
    """
    grid = model.op.grid
    if decoupled:
        fine_grid = refine_grid(grid)
        fine_op = assemble(fine_grid, model.op.s)
        terms = []
        for degree, coeff in model.q.terms:
            if coeff.shape == (1, 1):
                resampled = coeff
            else:
                resampled = np.stack(
                    [np.interp(fine_grid.x, grid.x, row) for row in coeff]
                )
            terms.append((degree, resampled))
        fine_q = make_polynomial_q(
            terms, delta=model.q.delta, m=model.q.order
        )
        hidden = Model(op=fine_op, q=fine_q, equation=model.equation)
    else:
        fine_grid, hidden = grid, model

    off_w = np.setdiff1d(np.arange(fine_grid.n_points), fine_grid.w_set)

    def evaluate(f: SpaceTimeField) -> DNData:
        size = ext_norm(f, model.op, grid, timegrid)
        if size > budget:
            raise SmallnessError(
                f"oracle refuses input with exterior norm {size:.3e} above "
                f"budget {budget:.3e}"
            )
        if decoupled:
            rows = _inject_rows(f.values, grid, fine_grid)
            rows[:, off_w] = 0.0
            f_fine = SpaceTimeField(values=rows, support_mask=fine_grid.w_set)
        else:
            f_fine = f
        if hidden.equation == "heat":
            u, _ = heat.solve_nonlinear(hidden.op, hidden.q, f_fine, timegrid)
        else:
            u, _ = wave.solve_nonlinear_wave(hidden.op, hidden.q, f_fine, timegrid)
        data = dn_map(u, hidden.op, fine_grid).values
        if decoupled:
            data = _restrict_dn(data, fine_grid, grid)
        if noise > 0.0:
            digest = hashlib.blake2b(
                f.values.tobytes(), digest_size=8
            ).digest()
            rng = np.random.default_rng(
                [seed, int.from_bytes(digest, "little")]
            )
            data = data + noise * rng.standard_normal(data.shape)
        return DNData(values=data, provenance="synthetic oracle")

    return DNOracle(evaluate=evaluate, budget=budget)


def make_recovery_tuples(
    grid: Grid, timegrid: TimeGrid, order: int, count: int
):
    """Staggered input tuples for orders 2..order.

    Each tuple holds k bumps whose centers, radii, time onsets, and
    window lengths all cycle through staggered values, so the product
    fields of their linear responses differ genuinely from tuple to
    tuple — temporal diversity is what keeps the stacked forward map
    from collapsing onto a handful of directions.  Within a tuple the
    time windows are offset but always overlap, so the shared-activity
    requirement of time-independent recovery holds by construction.
    """
    w_lo, w_hi = grid.w_interval
    width = w_hi - w_lo
    horizon = timegrid.horizon
    tuples: dict[int, tuple] = {}
    for k in range(2, order + 1):
        group = []
        for j in range(count):
            bundle = []
            onset = (0.05 + 0.40 * j / max(count - 1, 1)) * horizon
            for l in range(k):
                slot = (2 * j + 3 * l) % (2 * count)
                pos = (slot + 0.5) / (2 * count)
                radius = max((0.15 + 0.025 * ((j + l) % 3)) * width,
                             2.5 * grid.h)
                margin = radius + 2.0 * grid.h
                center = w_lo + margin + pos * (width - 2.0 * margin)
                t_on = min(onset + 0.10 * l * horizon, 0.60 * horizon)
                duration = (0.35 + 0.15 * ((j + 2 * l) % 3)) * horizon
                t_off = min(t_on + duration, 0.97 * horizon)
                bundle.append(
                    make_bump(
                        grid,
                        timegrid,
                        center=float(center),
                        radius=float(radius),
                        t_on=float(t_on),
                        t_off=float(t_off),
                    )
                )
            group.append(tuple(bundle))
        tuples[k] = tuple(group)
    return tuples


def _trace_operator(op: FracOperator) -> np.ndarray:
    grid = op.grid
    return op.matrix[np.ix_(grid.v_set, grid.omega)]


def _forward_trace_columns_heat(
    op: FracOperator,
    product_rows: np.ndarray,
    timegrid: TimeGrid,
    time_independent: bool,
) -> np.ndarray:
    """Measurement traces of the unit-coefficient source solves.

    Returns (n_unknowns, n_steps + 1, n_v): entry b is the measurement
    of the zero-data solve with source -(basis_b * product), where
    basis_b ranges over interior sites (time-independent) or interior
    space-time nodes at rows 1..n_steps.
    """
    grid = op.grid
    omega = grid.omega
    n_omega = omega.size
    dt = timegrid.dt
    n_steps = timegrid.n_steps
    trace_of = _trace_operator(op)
    base = np.eye(n_omega) / dt + op.matrix[np.ix_(omega, omega)]
    lu = lu_factor(base)
    p_interior = product_rows[:, omega]

    if time_independent:
        n_unknowns = n_omega
        state = np.zeros((n_omega, n_unknowns))
        traces = np.zeros((n_steps + 1, grid.v_set.size, n_unknowns))
        for k in range(1, n_steps + 1):
            rhs = state / dt
            rhs[np.arange(n_omega), np.arange(n_omega)] -= p_interior[k]
            state = lu_solve(lu, rhs)
            traces[k] = trace_of @ state
        return np.ascontiguousarray(np.moveaxis(traces, 2, 0))

    n_unknowns = n_steps * n_omega
    state = np.zeros((n_omega, n_unknowns))
    traces = np.zeros((n_steps + 1, grid.v_set.size, n_unknowns))
    for k in range(1, n_steps + 1):
        rhs = state / dt
        rhs[np.arange(n_omega), np.arange((k - 1) * n_omega, k * n_omega)] -= (
            p_interior[k]
        )
        state = lu_solve(lu, rhs)
        traces[k] = trace_of @ state
    return np.ascontiguousarray(np.moveaxis(traces, 2, 0))


def _forward_trace_columns_wave(
    op: FracOperator,
    product_rows: np.ndarray,
    timegrid: TimeGrid,
    time_independent: bool,
) -> np.ndarray:
    """Wave counterpart of the heat column builder (Newmark march)."""
    grid = op.grid
    omega = grid.omega
    n_omega = omega.size
    dt = timegrid.dt
    n_steps = timegrid.n_steps
    trace_of = _trace_operator(op)
    sub = op.matrix[np.ix_(omega, omega)]
    lu = lu_factor(np.eye(n_omega) + 0.25 * dt * dt * sub)
    p_interior = product_rows[:, omega]

    n_unknowns = n_omega if time_independent else n_steps * n_omega
    state = np.zeros((n_omega, n_unknowns))
    vdot = np.zeros_like(state)
    traces = np.zeros((n_steps + 1, grid.v_set.size, n_unknowns))

    def forcing(k: int) -> np.ndarray:
        out = np.zeros((n_omega, n_unknowns))
        if time_independent:
            out[np.arange(n_omega), np.arange(n_omega)] = -p_interior[k]
        elif k >= 1:
            cols = np.arange((k - 1) * n_omega, k * n_omega)
            out[np.arange(n_omega), cols] = -p_interior[k]
        return out

    accel = forcing(0)

    for k in range(n_steps):
        f_next = forcing(k + 1)
        rhs = state + dt * vdot + 0.25 * dt * dt * (accel + f_next)
        state = lu_solve(lu, rhs)
        accel_next = f_next - sub @ state
        vdot = vdot + 0.5 * dt * (accel + accel_next)
        accel = accel_next
        traces[k + 1] = trace_of @ state
    return np.ascontiguousarray(np.moveaxis(traces, 2, 0))


def source_inversion(
    products,
    data,
    op: FracOperator,
    reg: float | None,
    time_independent: bool,
    timegrid: TimeGrid,
    equation: str = "heat",
):
    """Recover the coefficient multiplying known product fields.

    Minimizes ``sum_j ||trace(solve(source=-c*P_j)) - D_j||^2 +
    reg*||c||^2`` over the interior coefficient c, assembling the
    forward map column by column with one batched march per tuple.
    ``reg=None`` scales the default ridge by the mean diagonal of the
    normal matrix.

    Returns the coefficient on the full lattice and the diagnostics.

    Raises
    ------
    RankDeficientError
        With reg=0 when the stacked map cannot determine every unknown.
    """
    if len(products) != len(data) or not products:
        raise ParamError("need equally many products and data blocks")
    if reg is not None and (reg < 0.0 or not np.isfinite(reg)):
        raise ParamError(f"regularization must be nonnegative, got {reg}")
    if equation not in EQUATIONS:
        raise ParamError(f"equation must be one of {EQUATIONS}, got {equation!r}")
    grid = op.grid
    omega = grid.omega
    expected_rows = (timegrid.n_steps + 1, grid.n_points)
    build = (
        _forward_trace_columns_heat
        if equation == "heat"
        else _forward_trace_columns_wave
    )

    blocks = []
    rhs_parts = []
    for product, block_data in zip(products, data):
        rows = product.values
        if rows.shape != expected_rows:
            raise ShapeError(
                f"product shape {rows.shape}, expected {expected_rows}"
            )
        columns = build(op, rows, timegrid, time_independent)
        blocks.append(columns.reshape(columns.shape[0], -1).T)
        values = block_data.values
        if values.shape != (timegrid.n_steps + 1, grid.v_set.size):
            raise ShapeError(
                f"data shape {values.shape}, expected "
                f"{(timegrid.n_steps + 1, grid.v_set.size)}"
            )
        rhs_parts.append(values.reshape(-1))

    stacked = np.vstack(blocks)
    rhs = np.concatenate(rhs_parts)
    gram = stacked.T @ stacked
    spectrum = eigh(gram, eigvals_only=True)
    condition = float(spectrum[-1] / max(spectrum[0], 1e-300))
    if reg is None:
        reg = DEFAULT_INVERSION_RIDGE * float(np.trace(gram)) / gram.shape[0]
    elif reg == 0.0 and (
        spectrum[0] <= 0.0 or condition > MAX_STACK_CONDITION
    ):
        raise RankDeficientError(
            "stacked forward map does not determine every unknown; "
            "pass reg > 0"
        )
    moments = stacked.T @ rhs
    try:
        coeff = cho_solve(
            cho_factor(gram + reg * np.eye(gram.shape[0])), moments
        )
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError(
            "regularized normal equations could not be factorized; pass a "
            "larger reg"
        ) from exc
    residual = float(np.linalg.norm(stacked @ coeff - rhs))

    n_rows = timegrid.n_steps + 1
    off_omega = np.setdiff1d(np.arange(grid.n_points), omega)
    if time_independent:
        out = np.zeros(grid.n_points)
        out[omega] = coeff
        sensitivity = timegrid.dt * np.sum(
            np.abs(np.stack([p.values for p in products])), axis=(0, 1)
        )
        sensitivity[off_omega] = 0.0
    else:
        out = np.zeros((n_rows, grid.n_points))
        out[1:, omega] = coeff.reshape(timegrid.n_steps, omega.size)
        sensitivity = np.sum(
            np.abs(np.stack([p.values for p in products])), axis=0
        )
        sensitivity[:, off_omega] = 0.0
    labels = []
    for block in data:
        if block.provenance and block.provenance not in labels:
            labels.append(block.provenance)
    diagnostics = InversionDiagnostics(
        regularization=float(reg),
        condition=condition,
        residual=residual,
        data_norm=float(np.linalg.norm(rhs)),
        sensitivity=sensitivity,
        data_provenance="; ".join(labels),
    )
    return out, diagnostics


def product_of_first_fields(op, bundle, timegrid, equation="heat"):
    """Pointwise product of the first-linearized fields of a tuple.

    This is the coefficient's multiplier in the order-k source problem;
    callers calibrating a ridge against the stacked map need it too.
    """
    values = None
    for g in bundle:
        u = first_linearized(op, g, timegrid, equation)
        values = u.values if values is None else values * u.values
    return SpaceTimeField(values=values)


def stack_scale(
    products,
    op: FracOperator,
    timegrid: TimeGrid,
    time_independent: bool = True,
    equation: str = "heat",
) -> float:
    """Mean normal-matrix diagonal of the stacked forward map.

    The natural unit for Tikhonov weights: ``reg = r * stack_scale(...)``
    makes ``r`` a dimensionless ridge strength (the all-default ridge is
    ``DEFAULT_INVERSION_RIDGE``).  Computed by the same column assembly
    as the inversion itself, on dummy zero data.
    """
    zero = DNData(
        values=np.zeros((timegrid.n_steps + 1, op.grid.v_set.size))
    )
    _, diagnostics = source_inversion(
        products, [zero] * len(products), op, None, time_independent,
        timegrid, equation,
    )
    return diagnostics.regularization / DEFAULT_INVERSION_RIDGE


def _known_part_trace(op, bundle, lower_jets, timegrid, equation) -> np.ndarray:
    """Measurement of the order-k field of the already-recovered model.

    Builds the certified model with the supplied lower jets, solves all
    linearized systems up to the full tuple, and returns the measurement
    rows of the top one.  Zero when no lower jet is nonzero.
    """
    grid = op.grid
    k = len(bundle)
    terms = [
        (p, jet) for p, jet in sorted(lower_jets.items())
        if np.any(np.asarray(jet) != 0.0)
    ]
    if not terms:
        rows = (timegrid.n_steps + 1, grid.v_set.size)
        return np.zeros(rows)
    q_known = make_polynomial_q(terms, delta=1.0, m=max(p for p, _ in terms))
    family = make_family(op, bundle, timegrid, equation)
    for size in range(2, k + 1):
        for subset in combinations(range(k), size):
            linearized_solution(op, q_known, subset, family, timegrid, equation)
    top = family.solutions[frozenset(range(k))]
    return dn_map(top, op, grid).values


def recover_jet_k(
    oracle: DNOracle, k: int, lower_jets: dict, config: RecoveryConfig,
    threads: int = 1,
):
    """Recover the order-k jet given the lower ones.

    Measures the k-th mixed difference of the oracle for every
    configured tuple (halving the step and retrying once if the oracle
    refuses an input), subtracts the simulated contribution of the lower
    jets, and solves the stacked source inversion.

    The per-tuple measurements are independent; ``threads > 1`` runs
    them on a thread pool, collected by tuple index so the result is
    bitwise identical to the sequential order.

    Returns (coefficient field, diagnostics).
    """
    op = config.op
    timegrid = config.timegrid
    grid = op.grid
    bundles = config.tuples[k]
    eps = config.steps.get(k, default_recovery_step(k))

    def one(bundle, step):
        return stencil_difference(
            oracle.evaluate, bundle, tuple(range(k)), step
        )

    def measure(step: float):
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(one, b, step) for b in bundles]
                return [f.result() for f in futures]
        return [one(b, step) for b in bundles]

    retried = False
    try:
        measured = measure(eps)
    except SmallnessError:
        retried = True
        eps = 0.5 * eps
        measured = measure(eps)

    products = []
    data = []
    for bundle, rows in zip(bundles, measured):
        known = _known_part_trace(
            op, bundle, lower_jets, timegrid, config.equation
        )
        data.append(DNData(values=rows - known, provenance=f"order-{k} tuple"))
        products.append(
            product_of_first_fields(op, bundle, timegrid, config.equation)
        )

    coeff, diagnostics = source_inversion(
        products,
        data,
        op,
        config.regularization.get(k),
        config.time_independent,
        timegrid,
        config.equation,
    )
    diagnostics = replace(diagnostics, step=eps, retried=retried)
    return coeff, diagnostics


def recover_all(
    oracle: DNOracle, config: RecoveryConfig, threads: int = 1
) -> JetEstimate:
    """Run the full induction: orders 0 and 1 are zero by assumption,
    orders 2..m come from recover_jet_k, each using the jets below it.

    Aborts at the first failing order and returns the partial estimate
    with a failure tag in ``status``.  ``threads`` parallelizes only the
    oracle measurements; the solves stay sequential and deterministic.
    """
    grid = config.op.grid
    if config.time_independent:
        zero = np.zeros(grid.n_points)
    else:
        zero = np.zeros((config.timegrid.n_steps + 1, grid.n_points))
    jets: dict[int, np.ndarray] = {0: zero.copy(), 1: zero.copy()}
    residuals: dict[int, float] = {}
    diagnostics: dict[int, InversionDiagnostics] = {}
    status = "complete"
    for k in range(2, config.order + 1):
        lower = {p: jets[p] for p in range(2, k)}
        try:
            coeff, diag = recover_jet_k(oracle, k, lower, config, threads)
        except (SmallnessError, DivergenceError, RankDeficientError) as exc:
            status = f"failed at order {k}: {type(exc).__name__}"
            break
        jets[k] = coeff
        residuals[k] = diag.residual
        diagnostics[k] = diag
    return JetEstimate(
        jets=jets, residuals=residuals, diagnostics=diagnostics, status=status
    )
