"""Exterior measurement maps and higher-order linearizations.

The measurement of a solution is its operator image sampled on the
observation region over time (the discrete Dirichlet-to-Neumann trace).
Differentiating the solution map at zero exterior data produces a
hierarchy of linearized fields: the first derivative solves the free
linear equation with the input as exterior data, and the derivative
along a set S of input directions solves a zero-data problem whose
source collects, over all set partitions of S into at least two blocks,
the reaction jet of the block count times the product of the lower
fields.  (The single-block term carries the first jet, which vanishes at
the origin for certified reaction terms, so it never appears.)

Two routes to the same object are provided: direct solves of the
linearized systems, and central mixed differences of the nonlinear
measurement over a sign stencil.  Agreement of the two is the working
check of the whole linearization machinery.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import heat, wave
from .errors import MissingBlockError, ParamError, ShapeError, StencilError
from .fracop import FracOperator, apply
from .grid import Grid, SpaceTimeField, TimeGrid, _frozen

#: Largest difference step ever taken; smaller steps come from the
#: certified-neighborhood budget.
MAX_STEP = 0.05

#: Fraction of the certified radius the linear stencil prediction may
#: reach before the step is refused outright.
STENCIL_REACH_FRACTION = 1.0

EQUATIONS = ("heat", "wave")


@dataclass(frozen=True)
class Model:
    """Forward model: operator, certified reaction term, equation kind."""

    op: FracOperator
    q: object
    equation: str = "heat"

    def __post_init__(self) -> None:
        if self.equation not in EQUATIONS:
            raise ParamError(
                f"equation must be one of {EQUATIONS}, got {self.equation!r}"
            )


@dataclass(frozen=True)
class DNData:
    """Exterior measurement: operator image sampled on the observation
    region at every time node.

    Attributes
    ----------
    values : ndarray
        Array of shape (n_time_rows, n_observation_nodes).
    provenance : str
        Human-readable descriptor of the generating input.
    """

    values: np.ndarray
    provenance: str = ""

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(
                f"measurement array must be 2-d, got ndim={values.ndim}"
            )
        if not np.all(np.isfinite(values)):
            raise ParamError("measurement values must be finite")
        object.__setattr__(self, "values", _frozen(values))


@dataclass
class LinearizedFamily:
    """Memoized linearized fields for one tuple of exterior inputs.

    ``solutions`` is keyed by frozen index sets into ``inputs``: the
    empty set maps to the zero field, singletons to free linear solves,
    and larger sets to the zero-data solves built by
    :func:`linearized_solution`.
    """

    inputs: tuple[SpaceTimeField, ...]
    solutions: dict[frozenset, SpaceTimeField] = field(default_factory=dict)


def dn_map(u: SpaceTimeField, op: FracOperator, grid: Grid) -> DNData:
    """Measure a solution: operator image restricted to the observation
    nodes, one row per time node."""
    image = apply(op, u)
    return DNData(values=image.values[:, grid.v_set], provenance="field")


def _solve_forward(model: Model, f: SpaceTimeField | None, timegrid: TimeGrid):
    if model.equation == "heat":
        u, _ = heat.solve_nonlinear(model.op, model.q, f, timegrid)
    else:
        u, _ = wave.solve_nonlinear_wave(model.op, model.q, f, timegrid)
    return u


def dn_of_input(model: Model, f: SpaceTimeField | None, timegrid: TimeGrid) -> DNData:
    """Measurement of the nonlinear solution driven by exterior data f."""
    u = _solve_forward(model, f, timegrid)
    data = dn_map(u, model.op, model.op.grid)
    return DNData(values=data.values, provenance=f"{model.equation} solve")


def first_linearized(
    op: FracOperator, g: SpaceTimeField, timegrid: TimeGrid, equation: str = "heat"
) -> SpaceTimeField:
    """First linearized field: the free linear solve with exterior data g.

    The reaction term does not enter (its first jet vanishes at the
    origin), so this field is shared by every certified model on the
    same operator.
    """
    if equation not in EQUATIONS:
        raise ParamError(f"equation must be one of {EQUATIONS}, got {equation!r}")
    if equation == "heat":
        return heat.solve_linear(heat.HeatProblem(op=op, exterior=g), timegrid)
    return wave.solve_linear_wave(wave.WaveProblem(op=op, exterior=g), timegrid)


def make_family(
    op: FracOperator,
    g_list,
    timegrid: TimeGrid,
    equation: str = "heat",
) -> LinearizedFamily:
    """Seed a :class:`LinearizedFamily` with the zeroth and first fields."""
    inputs = tuple(g_list)
    shape = (timegrid.n_steps + 1, op.grid.n_points)
    solutions: dict[frozenset, SpaceTimeField] = {
        frozenset(): SpaceTimeField(values=np.zeros(shape))
    }
    for index, g in enumerate(inputs):
        solutions[frozenset({index})] = first_linearized(op, g, timegrid, equation)
    return LinearizedFamily(inputs=inputs, solutions=solutions)


def _set_partitions(items: tuple):
    """All partitions of ``items`` into nonempty blocks (deterministic
    order, blocks as tuples)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in _set_partitions(rest):
        for i in range(len(partial)):
            yield partial[:i] + [(first,) + partial[i]] + partial[i + 1 :]
        yield [(first,)] + partial


def partition_source(q, S, family: LinearizedFamily) -> SpaceTimeField:
    """Source of the linearized system along the index set S.

    Sums, over set partitions of S with at least two blocks, the
    reaction jet of the block count (at state zero) times the product of
    the block fields.  The single-block partition is excluded: its field
    is the unknown, and its jet coefficient vanishes for certified
    reaction terms.

    Raises
    ------
    MissingBlockError
        If the family lacks a required lower field.
    ParamError
        If S has fewer than two indices.
    """
    indices = tuple(sorted(set(S)))
    if len(indices) < 2:
        raise ParamError("partition sources need at least two input directions")
    first_key = frozenset({indices[0]})
    if first_key not in family.solutions:
        raise MissingBlockError(
            f"family lacks the linearized field for block ({indices[0]},)"
        )
    reference = family.solutions[first_key].values
    n_rows = reference.shape[0]

    jets: dict[int, np.ndarray] = {}

    def jet_rows(order: int) -> np.ndarray:
        if order not in jets:
            jets[order] = np.stack(
                [
                    np.broadcast_to(
                        q.eval(order, k, 0.0), (reference.shape[1],)
                    )
                    for k in range(n_rows)
                ]
            )
        return jets[order]

    total = np.zeros_like(reference)
    for blocks in _set_partitions(indices):
        if len(blocks) < 2:
            continue
        product = np.ones_like(reference)
        for block in blocks:
            key = frozenset(block)
            if key not in family.solutions:
                raise MissingBlockError(
                    f"family lacks the linearized field for block "
                    f"{tuple(sorted(key))}"
                )
            product = product * family.solutions[key].values
        total = total + jet_rows(len(blocks)) * product
    return SpaceTimeField(values=total)


def linearized_solution(
    op: FracOperator,
    q,
    S,
    family: LinearizedFamily,
    timegrid: TimeGrid,
    equation: str = "heat",
) -> SpaceTimeField:
    """Linearized field along S (|S| >= 2): zero-data solve against the
    negative partition source; memoized into the family."""
    key = frozenset(S)
    if len(key) < 2:
        raise ParamError("higher linearized solves need |S| >= 2")
    if key in family.solutions:
        return family.solutions[key]
    source = partition_source(q, S, family)
    forcing = SpaceTimeField(values=-source.values)
    if equation == "heat":
        u = heat.solve_linear(heat.HeatProblem(op=op, source=forcing), timegrid)
    elif equation == "wave":
        u = wave.solve_linear_wave(
            wave.WaveProblem(op=op, source=forcing), timegrid
        )
    else:
        raise ParamError(f"equation must be one of {EQUATIONS}, got {equation!r}")
    family.solutions[key] = u
    return u


def default_step(model: Model, g_list, timegrid: TimeGrid) -> float:
    """Difference step keeping the whole sign stencil inside the
    certified neighborhood: the linear-response gain of the inputs sets
    the scale, capped at MAX_STEP."""
    sups = [float(np.max(np.abs(g.values))) for g in g_list]
    peak = max(sups, default=0.0)
    if peak == 0.0:
        return MAX_STEP
    gain = 0.0
    for g, sup_g in zip(g_list, sups):
        if sup_g == 0.0:
            continue
        response = first_linearized(model.op, g, timegrid, model.equation)
        gain = max(gain, float(np.max(np.abs(response.values))) / sup_g)
    budget = model.q.delta / (4.0 * len(g_list) * peak * max(gain, 1.0))
    return min(MAX_STEP, budget)


def mixed_difference_dn(
    model: Model,
    g_list,
    S,
    timegrid: TimeGrid,
    eps: float | None = None,
) -> DNData:
    """Central mixed difference of the measurement along the directions S.

    Solves the nonlinear problem at all 2^{|S|} half-step sign
    combinations of the selected inputs and combines them with the
    alternating-sign stencil, divided by eps^{|S|}.

    Raises
    ------
    StencilError
        If the linear prediction of the stencil reach already leaves the
        certified neighborhood.
    SmallnessError
        Propagated from any stencil solve that leaves it anyway.
    """
    indices = tuple(sorted(set(S)))
    if not indices:
        raise ParamError("need at least one input direction")
    if eps is None:
        eps = default_step(model, g_list, timegrid)
    if eps <= 0.0 or not np.isfinite(eps):
        raise ParamError(f"difference step must be positive, got {eps}")

    responses = [
        first_linearized(model.op, g_list[i], timegrid, model.equation)
        for i in indices
    ]
    reach = 0.5 * eps * sum(
        float(np.max(np.abs(r.values))) for r in responses
    )
    if reach > STENCIL_REACH_FRACTION * model.q.delta:
        raise StencilError(
            f"step eps = {eps:.3e} pushes the linear stencil prediction to "
            f"{reach:.3e}, beyond the certified radius {model.q.delta:.3e}"
        )

    values = stencil_difference(
        lambda f: dn_of_input(model, f, timegrid), g_list, indices, eps
    )
    return DNData(
        values=values,
        provenance=f"{model.equation} mixed difference S={indices} eps={eps:g}",
    )


def stencil_difference(evaluate, g_list, indices, eps: float) -> np.ndarray:
    """Central mixed difference of a black-box measurement map.

    ``evaluate`` maps an exterior SpaceTimeField to DNData; the result is
    the alternating-sign combination over the 2^{|indices|} half-step
    sign stencil, divided by eps^{|indices|}.  The stencil is walked in a
    fixed order, so repeated calls are bit-identical.
    """
    acc = None
    for signs in itertools.product((1.0, -1.0), repeat=len(indices)):
        values = sum(
            sign * 0.5 * eps * g_list[i].values
            for sign, i in zip(signs, indices)
        )
        data = evaluate(SpaceTimeField(values=values))
        weighted = float(np.prod(signs)) * data.values
        acc = weighted if acc is None else acc + weighted
    return acc / eps ** len(indices)
