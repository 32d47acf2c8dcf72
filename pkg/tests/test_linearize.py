"""Linearization tests: measurement maps, partition sources, stencils."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest

from fields import interior_profile
from fraclab.errors import (
    MissingBlockError,
    ParamError,
    StencilError,
)
from fraclab.fracop import apply
from fraclab.grid import SpaceTimeField, TimeGrid, make_bump
from fraclab.heat import HeatProblem, solve_linear
from fraclab.linearize import (
    DNData,
    Model,
    default_step,
    dn_map,
    dn_of_input,
    first_linearized,
    linearized_solution,
    make_family,
    mixed_difference_dn,
    partition_source,
)
from fraclab.nonlinearity import make_polynomial_q
from oracles import set_partitions


def omega_envelope(grid):
    lo, hi = grid.omega_interval
    inside = (grid.x > lo) & (grid.x < hi)
    return np.where(inside, np.cos(np.pi * grid.x / (hi - lo)) ** 2, 0.0)


def quadratic_model(op, grid, scale=1.0, delta=1.0):
    q = make_polynomial_q([(2, scale * omega_envelope(grid))], delta=delta, m=2)
    return Model(op=op, q=q, equation="heat")


def bump_inputs(grid, timegrid, count):
    """Distinct admissible exterior bumps."""
    centers = np.linspace(1.55, 1.85, count)
    windows = [(0.1 + 0.05 * i, 0.9 - 0.05 * i) for i in range(count)]
    return [
        make_bump(grid, timegrid, center=c, radius=0.12, t_on=lo, t_off=hi)
        for c, (lo, hi) in zip(centers, windows)
    ]


class TestDNMap:
    def test_zero_field_zero_data(self, op_desk, grid_desk, tg_desk):
        u = SpaceTimeField(
            values=np.zeros((tg_desk.n_steps + 1, grid_desk.n_points))
        )
        data = dn_map(u, op_desk, grid_desk)
        assert data.values.shape == (tg_desk.n_steps + 1, grid_desk.v_set.size)
        assert np.all(data.values == 0.0)

    def test_linearity(self, op_desk, grid_desk, tg_desk):
        rng = np.random.default_rng(3)
        shape = (tg_desk.n_steps + 1, grid_desk.n_points)
        u = SpaceTimeField(values=rng.standard_normal(shape))
        v = SpaceTimeField(values=rng.standard_normal(shape))
        combo = SpaceTimeField(values=2.0 * u.values - 0.5 * v.values)
        lhs = dn_map(combo, op_desk, grid_desk).values
        rhs = 2.0 * dn_map(u, op_desk, grid_desk).values - 0.5 * dn_map(
            v, op_desk, grid_desk
        ).values
        assert np.allclose(lhs, rhs, rtol=0.0, atol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ParamError):
            DNData(values=np.full((2, 3), np.nan))


class TestDNOfInput:
    def test_zero_input_zero_data(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        data = dn_of_input(model, None, tg_desk)
        assert np.all(data.values == 0.0)

    def test_determinism(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        f = make_bump(grid_desk, tg_desk, center=1.7, radius=0.2,
                      t_on=0.2, t_off=0.8)
        first = dn_of_input(model, f, tg_desk)
        second = dn_of_input(model, f, tg_desk)
        assert np.array_equal(first.values, second.values)

    def test_odd_reaction_odd_map(self, op_desk, grid_desk, tg_desk):
        # A purely cubic reaction makes the solution map odd, and the
        # iteration for -f mirrors the one for f arithmetic-exactly.
        q = make_polynomial_q([(3, omega_envelope(grid_desk))], delta=2.0, m=3)
        model = Model(op=op_desk, q=q)
        f = make_bump(grid_desk, tg_desk, center=1.7, radius=0.2,
                      t_on=0.2, t_off=0.8, amplitude=3.0)
        neg = SpaceTimeField(values=-f.values, support_mask=f.support_mask)
        assert np.array_equal(
            dn_of_input(model, f, tg_desk).values,
            -dn_of_input(model, neg, tg_desk).values,
        )

    def test_small_input_linearizes(self, op_desk, grid_desk, tg_desk):
        # ||DN(eps g) - eps DN_lin(g)|| = O(eps^2) for a reaction with
        # only jets of order >= 2.
        model = quadratic_model(op_desk, grid_desk, scale=4.0)
        g = make_bump(grid_desk, tg_desk, center=1.7, radius=0.2,
                      t_on=0.2, t_off=0.8)
        linear = dn_map(
            first_linearized(op_desk, g, tg_desk), op_desk, grid_desk
        ).values
        errors = []
        for eps in (0.1, 0.05, 0.025):
            scaled = SpaceTimeField(values=eps * g.values,
                                    support_mask=g.support_mask)
            data = dn_of_input(model, scaled, tg_desk)
            errors.append(np.max(np.abs(data.values - eps * linear)))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.7)


class TestFirstLinearized:
    def test_zero_input(self, op_desk, grid_desk, tg_desk):
        zero = SpaceTimeField(
            values=np.zeros((tg_desk.n_steps + 1, grid_desk.n_points))
        )
        u = first_linearized(op_desk, zero, tg_desk)
        assert np.all(u.values == 0.0)

    def test_matches_linear_solver_exactly(self, op_desk, grid_desk, tg_desk):
        g = make_bump(grid_desk, tg_desk, center=1.7, radius=0.2,
                      t_on=0.2, t_off=0.8)
        direct = solve_linear(HeatProblem(op=op_desk, exterior=g), tg_desk)
        assert np.array_equal(
            first_linearized(op_desk, g, tg_desk).values, direct.values
        )

    def test_wave_variant(self, op_wave, grid_desk, tg_desk):
        g = make_bump(grid_desk, tg_desk, center=1.7, radius=0.2,
                      t_on=0.2, t_off=0.8)
        u = first_linearized(op_wave, g, tg_desk, equation="wave")
        assert np.max(np.abs(u.values[:, grid_desk.omega])) > 0.0

    def test_rejects_unknown_equation(self, op_desk, grid_desk, tg_desk):
        g = make_bump(grid_desk, tg_desk, center=1.7, radius=0.2,
                      t_on=0.2, t_off=0.8)
        with pytest.raises(ParamError):
            first_linearized(op_desk, g, tg_desk, equation="schrodinger")


class TestPartitionSource:
    def test_pair_is_jet_times_product(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk, scale=3.0)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 2), tg_desk)
        source = partition_source(model.q, (0, 1), family)
        u0 = family.solutions[frozenset({0})].values
        u1 = family.solutions[frozenset({1})].values
        expected = 3.0 * omega_envelope(grid_desk) * u0 * u1
        assert np.allclose(source.values, expected, rtol=1e-13, atol=1e-16)

    def test_triple_with_quadratic_reaction(self, op_desk, grid_desk, tg_desk):
        # For q with only a second jet c2, the triple source collects the
        # three pair-singleton partitions with coefficient c2.
        model = quadratic_model(op_desk, grid_desk, scale=2.0)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 3), tg_desk)
        for pair in ((0, 1), (0, 2), (1, 2)):
            linearized_solution(op_desk, model.q, pair, family, tg_desk)
        source = partition_source(model.q, (0, 1, 2), family)
        c2 = 2.0 * omega_envelope(grid_desk)
        sol = family.solutions
        expected = c2 * (
            sol[frozenset({0, 1})].values * sol[frozenset({2})].values
            + sol[frozenset({0, 2})].values * sol[frozenset({1})].values
            + sol[frozenset({1, 2})].values * sol[frozenset({0})].values
        )
        assert np.allclose(source.values, expected, rtol=1e-13, atol=1e-16)

    def test_quadruple_against_partition_oracle(self, op_desk, grid_desk):
        # q = c2 z^2/2 + c4 z^4/4!: brute-force partition enumeration
        # gives 7 two-block terms with c2 and one four-block term with
        # c4; the assembled source must match the oracle sum.
        tg = TimeGrid(horizon=1.0, n_steps=16)
        c2 = 1.5 * omega_envelope(grid_desk)
        q = make_polynomial_q([(2, c2), (4, 2.0)], delta=1.0, m=4)
        family = make_family(op_desk, bump_inputs(grid_desk, tg, 4), tg)
        for size in (2, 3):
            for subset in combinations(range(4), size):
                linearized_solution(op_desk, q, subset, family, tg)
        source = partition_source(q, (0, 1, 2, 3), family)

        jets = {2: c2, 3: np.zeros(grid_desk.n_points), 4: 2.0}
        expected = np.zeros((tg.n_steps + 1, grid_desk.n_points))
        counts = {2: 0, 3: 0, 4: 0}
        for blocks in set_partitions(range(4)):
            if len(blocks) < 2:
                continue
            counts[len(blocks)] += 1
            term = jets[len(blocks)] * np.ones_like(expected)
            for block in blocks:
                term = term * family.solutions[frozenset(block)].values
            expected += term
        assert counts == {2: 7, 3: 6, 4: 1}
        assert np.allclose(source.values, expected, rtol=1e-12, atol=1e-15)

    def test_missing_block_raises(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 3), tg_desk)
        with pytest.raises(MissingBlockError):
            partition_source(model.q, (0, 1, 2), family)

    def test_rejects_singleton(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 2), tg_desk)
        with pytest.raises(ParamError):
            partition_source(model.q, (0,), family)


class TestLinearizedSolution:
    def test_zero_second_jet_zero_field(self, op_desk, grid_desk, tg_desk):
        q = make_polynomial_q([(3, omega_envelope(grid_desk))], delta=1.0, m=3)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 2), tg_desk)
        u = linearized_solution(op_desk, q, (0, 1), family, tg_desk)
        assert np.all(u.values == 0.0)

    def test_symmetric_in_index_order(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 2), tg_desk)
        u_fwd = linearized_solution(op_desk, model.q, (0, 1), family, tg_desk)
        u_rev = linearized_solution(op_desk, model.q, (1, 0), family, tg_desk)
        assert u_fwd is u_rev

    def test_satisfies_discrete_system(self, op_desk, grid_desk, tg_desk):
        # Implicit-Euler residual of the computed pair field against its
        # partition source vanishes to solver accuracy.
        model = quadratic_model(op_desk, grid_desk, scale=2.0)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 2), tg_desk)
        u = linearized_solution(op_desk, model.q, (0, 1), family, tg_desk)
        source = partition_source(model.q, (0, 1), family)
        omega = grid_desk.omega
        image = u.values @ op_desk.matrix
        dt = tg_desk.dt
        residual = (
            (u.values[1:] - u.values[:-1]) / dt + image[1:] + source.values[1:]
        )
        assert np.max(np.abs(residual[:, omega])) <= 1e-8
        off = np.setdiff1d(np.arange(grid_desk.n_points), omega)
        assert np.all(u.values[:, off] == 0.0)

    def test_rejects_small_set(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        family = make_family(op_desk, bump_inputs(grid_desk, tg_desk, 2), tg_desk)
        with pytest.raises(ParamError):
            linearized_solution(op_desk, model.q, (0,), family, tg_desk)


class TestMixedDifference:
    def test_linear_model_step_independent(self, op_desk, grid_desk, tg_desk):
        # With a zero reaction the measurement is exactly linear, so the
        # first difference quotient cannot depend on the step.
        q = make_polynomial_q([(2, np.zeros(grid_desk.n_points))], delta=10.0, m=2)
        model = Model(op=op_desk, q=q)
        g_list = bump_inputs(grid_desk, tg_desk, 1)
        coarse = mixed_difference_dn(model, g_list, (0,), tg_desk, eps=0.1)
        fine = mixed_difference_dn(model, g_list, (0,), tg_desk, eps=0.025)
        assert np.max(np.abs(coarse.values - fine.values)) <= 1e-10

    def test_pair_converges_to_linearized(self, op_desk, grid_desk, tg_desk):
        # Central second difference of the nonlinear measurement tends to
        # the measurement of the directly-solved pair field at O(eps^2).
        model = quadratic_model(op_desk, grid_desk, scale=4.0)
        g_list = bump_inputs(grid_desk, tg_desk, 2)
        family = make_family(op_desk, g_list, tg_desk)
        u_pair = linearized_solution(op_desk, model.q, (0, 1), family, tg_desk)
        target = dn_map(u_pair, op_desk, grid_desk).values
        errors = []
        # Steps below 0.05 push the quotient into the fixed-point solver
        # noise floor (tolerance / eps^2), so the ladder stays above it.
        for eps in (0.2, 0.1, 0.05):
            data = mixed_difference_dn(model, g_list, (0, 1), tg_desk, eps=eps)
            errors.append(np.max(np.abs(data.values - target)))
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders >= 1.7)

    def test_equal_models_equal_differences(self, op_desk, grid_desk, tg_desk):
        c2 = 2.0 * omega_envelope(grid_desk)
        model_a = Model(op=op_desk, q=make_polynomial_q([(2, c2)], 1.0, 2))
        model_b = Model(op=op_desk, q=make_polynomial_q([(2, c2)], 1.0, 2))
        g_list = bump_inputs(grid_desk, tg_desk, 2)
        for eps in (0.1, 0.05):
            a = mixed_difference_dn(model_a, g_list, (0, 1), tg_desk, eps=eps)
            b = mixed_difference_dn(model_b, g_list, (0, 1), tg_desk, eps=eps)
            assert np.array_equal(a.values, b.values)

    def test_oversized_step_rejected(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk, delta=0.05)
        g_list = bump_inputs(grid_desk, tg_desk, 1)
        with pytest.raises(StencilError):
            mixed_difference_dn(model, g_list, (0,), tg_desk, eps=50.0)

    def test_default_step_inside_budget(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        g_list = bump_inputs(grid_desk, tg_desk, 2)
        eps = default_step(model, g_list, tg_desk)
        assert 0.0 < eps <= 0.05
        data = mixed_difference_dn(model, g_list, (0, 1), tg_desk)
        assert np.all(np.isfinite(data.values))

    def test_rejects_bad_step(self, op_desk, grid_desk, tg_desk):
        model = quadratic_model(op_desk, grid_desk)
        g_list = bump_inputs(grid_desk, tg_desk, 1)
        with pytest.raises(ParamError):
            mixed_difference_dn(model, g_list, (0,), tg_desk, eps=-0.1)


class TestSharedJetPropagation:
    def test_shared_jets_share_measurements(self, op_desk, grid_desk):
        # Models agreeing in jets up to order three produce identical
        # measurements of every linearized field with |S| <= 3.
        tg = TimeGrid(horizon=1.0, n_steps=16)
        c2 = 1.2 * omega_envelope(grid_desk)
        c3 = 0.8 * omega_envelope(grid_desk)
        q_a = make_polynomial_q([(2, c2), (3, c3)], delta=1.0, m=3)
        q_b = make_polynomial_q([(2, c2), (3, c3), (4, 5.0)], delta=1.0, m=4)
        g_list = bump_inputs(grid_desk, tg, 3)
        traces = {}
        for tag, q in (("a", q_a), ("b", q_b)):
            family = make_family(op_desk, g_list, tg)
            fields = {}
            for pair in ((0, 1), (0, 2), (1, 2)):
                fields[pair] = linearized_solution(op_desk, q, pair, family, tg)
            fields[(0, 1, 2)] = linearized_solution(
                op_desk, q, (0, 1, 2), family, tg
            )
            traces[tag] = {
                key: dn_map(u, op_desk, grid_desk).values
                for key, u in fields.items()
            }
        for key in traces["a"]:
            assert np.max(np.abs(traces["a"][key] - traces["b"][key])) <= 1e-9

    def test_pair_difference_solves_jet_gap_system(self, op_desk, grid_desk, tg_desk):
        # For models differing only in the second jet, the difference of
        # the pair fields solves the zero-data system driven by the jet
        # gap times the product of first fields.
        c2_a = 2.0 * omega_envelope(grid_desk)
        c2_b = 0.5 * omega_envelope(grid_desk)
        q_a = make_polynomial_q([(2, c2_a)], delta=1.0, m=2)
        q_b = make_polynomial_q([(2, c2_b)], delta=1.0, m=2)
        g_list = bump_inputs(grid_desk, tg_desk, 2)
        family_a = make_family(op_desk, g_list, tg_desk)
        family_b = make_family(op_desk, g_list, tg_desk)
        u_a = linearized_solution(op_desk, q_a, (0, 1), family_a, tg_desk)
        u_b = linearized_solution(op_desk, q_b, (0, 1), family_b, tg_desk)
        w = u_a.values - u_b.values
        gap_source = (
            (c2_a - c2_b)
            * family_a.solutions[frozenset({0})].values
            * family_a.solutions[frozenset({1})].values
        )
        omega = grid_desk.omega
        dt = tg_desk.dt
        image = w @ op_desk.matrix
        residual = (w[1:] - w[:-1]) / dt + image[1:] + gap_source[1:]
        assert np.max(np.abs(residual[:, omega])) <= 1e-8
