"""Built-in acceptance suite: every advertised guarantee, re-checked.

``run_suite`` runs a fixed battery of checks against the installed
package, each one validating a headline property end to end:

* the discretized operator against an independent Fourier-multiplier
  reference and a closed-form profile image,
* order preservation (maximum/comparison principles), barrier sup
  bounds, and energy inequalities of the evolution solvers,
* contraction and stability of the semilinear fixed-point iterations,
* convergence order of the mixed difference stencils toward directly
  solved linearized measurements, and invariance of those measurements
  under reactions sharing the same low-order jets,
* strict residual decay of the interior approximation by exterior
  controls,
* end-to-end jet recovery accuracy in heat, decoupled-lattice, and wave
  regimes,
* bitwise determinism of the command-line pipeline across worker
  counts.

Every check rebuilds its own reference data from scratch -- padded-box
FFT oracles, closed-form constants, freshly fitted stability constants
-- so a passing run certifies the package against independent ground
truth rather than against stored outputs.  Checks are isolated: one
failure cannot stop the rest, and each reports a one-line piece of
evidence either way.
"""

from __future__ import annotations

import os
import tempfile
import time
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma

from .errors import ConfigError, SmallnessError
from .fracop import (
    apply,
    assemble,
    dirichlet_form,
    ext_norm,
    hs_norm,
    l2_norm,
    spacetime_l2,
)
from .grid import SpaceTimeField, TimeGrid, build_grid, make_bump
from .heat import HeatProblem, build_barrier, solve_linear, solve_nonlinear
from .inverse import (
    RecoveryConfig,
    make_recovery_tuples,
    make_synthetic_oracle,
    product_of_first_fields,
    recover_all,
    stack_scale,
)
from .linearize import (
    Model,
    dn_map,
    first_linearized,
    linearized_solution,
    make_family,
    mixed_difference_dn,
)
from .nonlinearity import make_polynomial_q
from .runge import ControlBasis, approximate, build_basis
from .wave import (
    WaveProblem,
    energy_series,
    solve_linear_wave,
    solve_nonlinear_wave,
    time_derivative,
)


@dataclass(frozen=True)
class CheckResult:
    """Outcome of a single acceptance check.

    Attributes
    ----------
    name : str
        Stable identifier of the check.
    passed : bool
        Whether every assertion of the check held.
    detail : str
        One line of evidence: the measured quantity and its bound on
        success, the first violated condition on failure.
    duration : float
        Wall time of the check in seconds.
    """

    name: str
    passed: bool
    detail: str
    duration: float


class _Failure(Exception):
    """A check assertion that did not hold."""


def _require(condition: bool, detail: str) -> None:
    if not condition:
        raise _Failure(detail)


# ---------------------------------------------------------------------------
# independent references
#
# Everything the checks compare against is derived here by a different
# route than the package uses: a padded FFT multiplier instead of
# singular-integral quadrature, and special-function closed forms.


def _fourier_frac_laplacian(func, s, half=320.0, n=2**16):
    """Fourier-multiplier reference for the fractional Laplacian.

    Samples ``func`` on a padded box ``[-half, half]``, applies the
    multiplier ``|xi|^{2s}`` in frequency, and returns a cubic-spline
    evaluator of the image.  The reference's own floor comes from the
    kink of the multiplier at the origin and scales like
    ``(pi / half)^{1 + 2s}``; the default padding keeps it below 1e-4
    for every order used here.
    """
    h = 2.0 * half / n
    x = -half + h * np.arange(n)
    xi = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    out = np.fft.ifft(np.abs(xi) ** (2.0 * s) * np.fft.fft(func(x))).real
    return CubicSpline(x, out)


def _profile_constant(s):
    """Closed-form image of (1 - x^2)_+^s on (-1, 1): a constant."""
    return 2.0 ** (2.0 * s) * gamma(s + 0.5) * gamma(s + 1.0) / gamma(0.5)


def _gaussian_mix(rng, n_terms=3):
    """Random three-term Gaussian mixture, smooth and box-localized."""
    amps = rng.uniform(-1.0, 1.0, size=n_terms)
    centers = rng.uniform(-4.0, 4.0, size=n_terms)
    widths = rng.uniform(0.5, 1.5, size=n_terms)

    def u(x):
        x = np.asarray(x, dtype=float)
        return sum(
            a * np.exp(-(((x - c) / w) ** 2))
            for a, c, w in zip(amps, centers, widths)
        )

    return u


# ---------------------------------------------------------------------------
# random problem data
#
# Smooth admissible fields driven by the suite seed.  Interior data is
# supported on the interior set, controls on the control region, so
# every generated problem is admissible by construction.


def _mollifier(x, lo, hi):
    center, radius = 0.5 * (lo + hi), 0.5 * (hi - lo)
    r = (np.asarray(x, dtype=float) - center) / radius
    out = np.zeros_like(r)
    inside = r * r < 1.0 - 1e-12
    out[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))
    return out


def _interior_profile(rng, grid, scale=1.0):
    lo, hi = grid.omega_interval
    envelope = _mollifier(grid.x, lo, hi)
    waves = sum(
        rng.uniform(-1.0, 1.0)
        * np.cos(k * np.pi * grid.x / (hi - lo) + rng.uniform(0, 2 * np.pi))
        for k in range(1, 4)
    )
    profile = scale * envelope * waves
    profile[np.setdiff1d(np.arange(grid.n_points), grid.omega)] = 0.0
    return profile


def _interior_field(rng, grid, timegrid, scale=1.0):
    t = timegrid.times / timegrid.horizon
    modulation = 1.0 + 0.5 * np.cos(2.0 * np.pi * t + rng.uniform(0, 2 * np.pi))
    return SpaceTimeField(
        values=np.outer(modulation, _interior_profile(rng, grid, scale)),
        support_mask=grid.omega,
    )


def _exterior_bump(rng, grid, timegrid, scale=1.0):
    lo, hi = grid.w_interval
    margin = 0.15 * (hi - lo)
    center = rng.uniform(lo + 2.0 * margin, hi - 2.0 * margin)
    radius = rng.uniform(margin, min(center - lo, hi - center) - 0.5 * margin)
    t_on = rng.uniform(0.05, 0.4) * timegrid.horizon
    t_off = rng.uniform(0.6, 0.95) * timegrid.horizon
    return make_bump(grid, timegrid, center, radius, t_on, t_off,
                     amplitude=scale)


def _bounded_potential(rng, grid, timegrid, bound=1.0, time_dependent=False):
    spatial = np.cos(rng.uniform(1.0, 3.0) * grid.x + rng.uniform(0, 2 * np.pi))
    if time_dependent:
        values = np.outer(
            np.cos(2.0 * timegrid.times + rng.uniform(0, 2 * np.pi)), spatial
        )
    else:
        values = np.tile(spatial, (timegrid.n_steps + 1, 1))
    values = bound * values / np.max(np.abs(values))
    return SpaceTimeField(values=values)


def _omega_envelope(grid):
    lo, hi = grid.omega_interval
    inside = (grid.x > lo) & (grid.x < hi)
    return np.where(inside, np.cos(np.pi * grid.x / (hi - lo)) ** 2, 0.0)


def _coefficient_hump(grid, center=0.0, half=0.8):
    r = (grid.x - center) / half
    return np.where(np.abs(r) < 1.0, np.cos(0.5 * np.pi * r) ** 2, 0.0)


# ---------------------------------------------------------------------------
# shared geometries


def _wide_grid(n_points):
    """Box [-10, 10]: room for smooth fields that decay well inside."""
    return build_grid(10.0, n_points, (-1.0, 1.0), (1.4, 2.0), (-2.0, -1.4))


def _desk_grid():
    """Standard working lattice: box [-3, 3], 241 nodes."""
    return build_grid(3.0, 241, (-1.0, 1.0), (1.4, 2.0), (-2.0, -1.4))


def _coarse_grid():
    """Coarser lattice for the many-solve pipeline checks."""
    return build_grid(3.0, 161, (-1.0, 1.0), (1.4, 2.0), (-2.0, -1.4))


def _rel_l2(estimate, truth, index):
    return float(
        np.linalg.norm(estimate[index] - truth[index])
        / np.linalg.norm(truth[index])
    )


# ---------------------------------------------------------------------------
# the checks


_CHECKS: list[tuple[str, object]] = []


def _registered(name):
    def register(fn):
        _CHECKS.append((name, fn))
        return fn

    return register


@_registered("operator-oracle")
def _check_operator_oracle(seed, threads):
    # Twenty random smooth fields, four orders, each within 5e-3 relative
    # L2 distance of the multiplier reference; then a fixed sharp profile
    # whose error must shrink by >= 1.7 per mesh halving.
    rng = np.random.default_rng([seed, 1])
    grid = _wide_grid(1024)
    inner = np.abs(grid.x) <= 8.0
    fields = [_gaussian_mix(rng) for _ in range(20)]
    worst = 0.0
    for s in (0.3, 0.5, 0.75, 0.9):
        op = assemble(grid, s)
        for u in fields:
            reference = _fourier_frac_laplacian(u, s)(grid.x[inner])
            ours = apply(op, u(grid.x))[inner]
            rel = np.linalg.norm(ours - reference) / np.linalg.norm(reference)
            worst = max(worst, rel)
            _require(rel <= 5e-3,
                     f"s={s}: relative error {rel:.2e} above 5e-3")

    def sharp(x):
        return np.exp(-(((x - 0.7) / 0.3) ** 2)) + 0.8 * np.exp(
            -(((x + 1.1) / 0.4) ** 2)
        )

    slowest = np.inf
    for s in (0.3, 0.5, 0.75, 0.9):
        oracle = _fourier_frac_laplacian(sharp, s, half=1280.0, n=2**18)
        errs = []
        for n_points in (256, 512, 1024):
            fine = _wide_grid(n_points)
            keep = np.abs(fine.x) <= 8.0
            ours = apply(assemble(fine, s), sharp(fine.x))[keep]
            ref = oracle(fine.x[keep])
            errs.append(np.linalg.norm(ours - ref) / np.linalg.norm(ref))
        for coarse_err, fine_err in zip(errs, errs[1:]):
            factor = coarse_err / fine_err
            slowest = min(slowest, factor)
            _require(factor >= 1.7,
                     f"s={s}: halving factor {factor:.2f} below 1.7 "
                     f"(errors {errs})")
    return (f"80 field/order pairs within 5e-3 of the multiplier oracle "
            f"(worst {worst:.1e}); halving factors >= {slowest:.2f}")


@_registered("profile-constant")
def _check_profile_constant(seed, threads):
    # (1 - x^2)_+^s maps to a constant on the interior; the lattice image
    # must be flat over the middle half and match both the multiplier
    # reference and the closed form.
    grid = build_grid(3.0, 961, (-1.0, 1.0), (1.4, 2.0), (-2.0, -1.4))
    worst_cov, worst_gap = 0.0, 0.0
    for s in (0.5, 0.75):
        op = assemble(grid, s)
        w = np.clip(1.0 - grid.x**2, 0.0, None) ** s
        ours = apply(op, w)
        middle = grid.omega[np.abs(grid.x[grid.omega]) <= 0.5]
        vals = ours[middle]
        cov = vals.std() / vals.mean()
        worst_cov = max(worst_cov, cov)
        _require(cov <= 1e-2, f"s={s}: variation {cov:.2e} above 1e-2")
        oracle = _fourier_frac_laplacian(
            lambda x: np.clip(1.0 - x * x, 0.0, None) ** s, s, half=80.0
        )
        for exact in (np.mean(oracle(grid.x[middle])), _profile_constant(s)):
            gap = abs(vals.mean() - exact) / exact
            worst_gap = max(worst_gap, gap)
            _require(gap <= 0.02,
                     f"s={s}: mean off by {gap:.1%} from {exact:.6f}")
    return (f"middle-half variation <= {worst_cov:.1e}; mean within "
            f"{worst_gap:.2%} of the closed-form constant")


@_registered("maximum-principle")
def _check_maximum_principle(seed, threads):
    # Nonnegative data keeps solutions nonnegative, and ordered data
    # keeps solutions ordered, across random potentials/sources/controls.
    grid = _desk_grid()
    op = assemble(grid, 0.5)
    tg = TimeGrid(horizon=1.0, n_steps=64)
    rng = np.random.default_rng([seed, 3])
    worst = 0.0
    for _ in range(50):
        F = _interior_field(rng, grid, tg)
        F = SpaceTimeField(np.abs(F.values), support_mask=grid.omega)
        f = _exterior_bump(rng, grid, tg, scale=rng.uniform(0.1, 2.0))
        phi = np.abs(_interior_profile(rng, grid))
        a = _bounded_potential(rng, grid, tg, bound=2.0)
        u = solve_linear(
            HeatProblem(op=op, potential=a, source=F, exterior=f,
                        initial=phi),
            tg,
        )
        scale = max(np.max(F.values), np.max(f.values), np.max(phi))
        floor = -1e-8 * (1.0 + scale)
        worst = min(worst, np.min(u.values) / (1.0 + scale))
        _require(np.min(u.values) >= floor,
                 f"positivity violated: min {np.min(u.values):.2e} "
                 f"below {floor:.2e}")
    for _ in range(50):
        a = _bounded_potential(rng, grid, tg, bound=1.5)
        F2 = _interior_field(rng, grid, tg)
        f2 = _exterior_bump(rng, grid, tg, scale=0.7)
        phi2 = _interior_profile(rng, grid)
        extra = SpaceTimeField(
            np.abs(_interior_field(rng, grid, tg).values),
            support_mask=grid.omega,
        )
        F1 = SpaceTimeField(F2.values + extra.values, support_mask=grid.omega)
        f1 = SpaceTimeField(f2.values * 1.5, support_mask=grid.w_set)
        phi1 = phi2 + np.abs(_interior_profile(rng, grid))
        u1 = solve_linear(
            HeatProblem(op=op, potential=a, source=F1, exterior=f1,
                        initial=phi1),
            tg,
        )
        u2 = solve_linear(
            HeatProblem(op=op, potential=a, source=F2, exterior=f2,
                        initial=phi2),
            tg,
        )
        gap = np.min(u1.values - u2.values)
        worst = min(worst, gap)
        _require(gap >= -1e-8,
                 f"ordering violated: min difference {gap:.2e}")
    return (f"50 positivity + 50 ordering problems; worst normalized "
            f"undershoot {worst:.1e}")


@_registered("barrier-bound")
def _check_barrier_bound(seed, threads):
    # Zero initial data: sup |u| stays below the barrier amplification of
    # the data sup for random sources, controls, and potentials.
    grid = _desk_grid()
    op = assemble(grid, 0.5)
    tg = TimeGrid(horizon=1.0, n_steps=64)
    rng = np.random.default_rng([seed, 4])
    barrier = build_barrier(op, grid)
    a_bound = 1.0
    amplification = 1.0 + np.exp(tg.horizon) * np.max(barrier.phi) * np.exp(
        tg.horizon * a_bound
    )
    margin = np.inf
    for _ in range(50):
        F = _interior_field(rng, grid, tg, scale=rng.uniform(0.2, 3.0))
        f = _exterior_bump(rng, grid, tg, scale=rng.uniform(0.2, 3.0))
        a = _bounded_potential(rng, grid, tg, bound=a_bound,
                               time_dependent=True)
        u = solve_linear(
            HeatProblem(op=op, potential=a, source=F, exterior=f), tg
        )
        data = np.max(np.abs(f.values)) + np.max(np.abs(F.values))
        ratio = np.max(np.abs(u.values)) / (amplification * data)
        margin = min(margin, 1.0 / ratio)
        _require(ratio <= 1.0,
                 f"sup bound violated: ratio {ratio:.3f} above 1")
    return (f"50 problems under the barrier bound "
            f"(amplification {amplification:.1f}, slack factor "
            f">= {margin:.1f})")


def _uniform_constant(ratios, label):
    """Fitted stability constant over two independent dataset halves.

    The constant fitted on either half (with 50% headroom) must cover
    the other: the energy ratio is uniform across datasets rather than
    growing with them.  Returns the overall constant and the spread
    between the halves.
    """
    first, second = ratios[: len(ratios) // 2], ratios[len(ratios) // 2:]
    spread = max(max(second) / max(first), max(first) / max(second))
    _require(spread <= 1.5,
             f"{label} constant not uniform: the two dataset halves "
             f"need a spread of {spread:.2f} (above 1.5)")
    return max(ratios), spread


@_registered("energy-estimates")
def _check_energy_estimates(seed, threads):
    # One stability constant per equation, fitted on ten datasets with
    # 50% headroom, must cover ten fresh ones (and vice versa); free
    # wave evolution keeps its discrete energy within 2% at 512 steps.
    grid = _desk_grid()
    tg = TimeGrid(horizon=1.0, n_steps=64)
    rng = np.random.default_rng([seed, 5])

    op = assemble(grid, 0.5)
    ratios = []
    for _ in range(20):
        F = _interior_field(rng, grid, tg, scale=rng.uniform(0.2, 2.0))
        phi = _interior_profile(rng, grid, scale=rng.uniform(0.2, 2.0))
        a = _bounded_potential(rng, grid, tg, bound=1.0)
        v = solve_linear(
            HeatProblem(op=op, potential=a, source=F, initial=phi), tg
        )
        sup_sq = max(l2_norm(row, grid, grid.omega) ** 2 for row in v.values)
        smooth_sq = sum(
            tg.dt
            * (l2_norm(row, grid, grid.omega) ** 2 + dirichlet_form(op, row))
            for row in v.values[1:]
        )
        data_sq = l2_norm(phi, grid, grid.omega) ** 2 + sum(
            tg.dt * l2_norm(row, grid, grid.omega) ** 2 for row in F.values[1:]
        )
        ratios.append((sup_sq + smooth_sq) / data_sq)
    heat_constant, heat_spread = _uniform_constant(ratios, "heat energy")

    op_wave = assemble(grid, 0.75)
    s = op_wave.s
    ratios = []
    for _ in range(20):
        phi = _interior_profile(rng, grid)
        psi = _interior_profile(rng, grid, scale=0.5)
        source = _interior_field(rng, grid, tg)
        f = _exterior_bump(rng, grid, tg)
        a = _bounded_potential(rng, grid, tg, time_dependent=True)
        u = solve_linear_wave(
            WaveProblem(op=op_wave, potential=a, source=source, exterior=f,
                        initial=phi, velocity=psi),
            tg,
        )
        v_rows = u.values - f.values
        velocity = time_derivative(u.values, tg)
        lhs = max(hs_norm(row, s, grid) for row in v_rows) + max(
            l2_norm(row, grid, grid.omega) for row in velocity
        )
        forcing = source.values - f.values @ op_wave.matrix
        rhs = (
            hs_norm(phi, s, grid)
            + l2_norm(psi, grid, grid.omega)
            + spacetime_l2(forcing, grid, tg, grid.omega)
        )
        ratios.append(lhs / rhs)
    wave_constant, wave_spread = _uniform_constant(ratios, "wave energy")

    drift = 0.0
    tg_fine = TimeGrid(horizon=1.0, n_steps=512)
    for with_velocity in (False, True):
        phi = _interior_profile(rng, grid)
        psi = _interior_profile(rng, grid) if with_velocity else None
        u = solve_linear_wave(
            WaveProblem(op=op_wave, initial=phi, velocity=psi), tg_fine
        )
        energy = energy_series(u, op_wave, grid, tg_fine)
        _require(energy[0] > 0.0, "free evolution started at zero energy")
        drift = max(drift,
                    float(np.max(np.abs(energy - energy[0])) / energy[0]))
    _require(drift <= 0.02,
             f"free-evolution energy drift {drift:.2%} above 2%")
    return (f"constants uniform across 20 datasets: heat "
            f"{heat_constant:.1f} (half spread {heat_spread:.2f}), wave "
            f"{wave_constant:.1f} ({wave_spread:.2f}); free wave drift "
            f"{drift:.2%} at 512 steps")


@_registered("fixed-point-contraction")
def _check_fixed_point_contraction(seed, threads):
    # Update norms contract (<= 0.5 heat, <= 0.7 wave) from the second
    # iteration on; the solution gain stays amplitude-stable; data past
    # the smallness threshold is rejected.
    grid = _desk_grid()
    tg = TimeGrid(horizon=1.0, n_steps=64)
    op = assemble(grid, 0.5)
    op_wave = assemble(grid, 0.75)

    c2 = np.zeros(grid.n_points)
    c2[grid.omega] = 1.0
    q_heat = make_polynomial_q([(2, c2)], delta=1.0, m=2)
    f = make_bump(grid, tg, 1.7, 0.25, 0.25, 0.75, amplitude=5.0)
    _, trace = solve_nonlinear(op, q_heat, f, tg)
    _require(trace.converged, "heat fixed point did not converge")
    heat_ratios = [
        b / a for a, b in zip(trace.update_norms[1:-1], trace.update_norms[2:])
    ]
    _require(len(heat_ratios) >= 1, "heat iteration ended before ratio 2")
    _require(all(r <= 0.5 for r in heat_ratios),
             f"heat contraction ratio {max(heat_ratios):.3f} above 0.5")

    q_wave = make_polynomial_q(
        [(2, 400.0 * _omega_envelope(grid))], delta=1.0, m=3
    )
    f = make_bump(grid, tg, center=1.7, radius=0.25, t_on=0.1, t_off=0.9,
                  amplitude=5.0)
    _, trace = solve_nonlinear_wave(op_wave, q_wave, f, tg)
    _require(trace.converged, "wave fixed point did not converge")
    updates = np.asarray(trace.update_norms)
    wave_ratios = updates[1:] / updates[:-1]
    _require(len(wave_ratios) >= 2, "wave iteration ended before ratio 2")
    _require(np.all(wave_ratios <= 0.7),
             f"wave contraction ratio {np.max(wave_ratios):.3f} above 0.7")

    gain_notes = []
    sweeps = (
        ("heat", op, q_heat, np.geomspace(0.002, 0.5, 10), (0.25, 0.75)),
        ("wave", op_wave,
         make_polynomial_q([(2, 40.0 * _omega_envelope(grid))],
                           delta=1.0, m=3),
         np.geomspace(0.02, 5.0, 10), (0.1, 0.9)),
    )
    for tag, operator, q, amplitudes, window in sweeps:
        ratios = []
        for amp in amplitudes:
            f = make_bump(grid, tg, 1.7, 0.25, window[0], window[1],
                          amplitude=amp)
            if tag == "heat":
                u, _ = solve_nonlinear(operator, q, f, tg)
                size = max(
                    max(hs_norm(row, operator.s, grid), np.max(np.abs(row)))
                    for row in u.values
                )
            else:
                u, _ = solve_nonlinear_wave(operator, q, f, tg)
                v_rows = u.values - f.values
                size = max(
                    hs_norm(row, operator.s, grid) for row in v_rows
                ) + float(np.max(np.abs(u.values)))
            ratios.append(size / ext_norm(f, operator, grid, tg))
        fitted = 1.2 * max(ratios[0::2])
        _require(all(r <= fitted for r in ratios[1::2]),
                 f"{tag} gain constant {fitted:.2f} missed the sweep "
                 f"(worst ratio {max(ratios[1::2]):.2f})")
        gain_notes.append(f"{tag} {fitted:.2f}")

    for solver, operator, q in (
        (solve_nonlinear, op,
         make_polynomial_q([(2, c2)], delta=0.5, m=2)),
        (solve_nonlinear_wave, op_wave, q_wave),
    ):
        f = make_bump(grid, tg, 1.7, 0.25, 0.25, 0.75, amplitude=500.0)
        try:
            solver(operator, q, f, tg)
        except SmallnessError:
            pass
        else:
            _require(False, "oversized exterior data was not rejected")
    return (f"contraction ratios: heat <= {max(heat_ratios):.2f}, wave <= "
            f"{np.max(wave_ratios):.2f}; gain constants {', '.join(gain_notes)}"
            f"; oversized data rejected")


@_registered("linearization-order")
def _check_linearization_order(seed, threads):
    # Mixed difference stencils of the measurement map converge at
    # second order to directly solved linearized measurements, across
    # stencil sizes 1, 2, 3.
    grid = _coarse_grid()
    tg = TimeGrid(horizon=1.0, n_steps=32)
    op = assemble(grid, 0.5)
    env = _omega_envelope(grid)
    q = make_polynomial_q([(2, 60.0 * env), (3, 40.0 * env)],
                          delta=10.0, m=3)
    model = Model(op=op, q=q)
    g_list = [
        make_bump(grid, tg, center=c, radius=0.12, t_on=0.1 + 0.05 * i,
                  t_off=0.9 - 0.05 * i, amplitude=8.0)
        for i, c in enumerate(np.linspace(1.55, 1.85, 3))
    ]
    family = make_family(op, g_list, tg)
    notes = []
    for indices in ((0,), (0, 1), (0, 1, 2)):
        if len(indices) == 1:
            direct = dn_map(
                first_linearized(op, g_list[indices[0]], tg), op, grid
            ).values
        else:
            direct = dn_map(
                linearized_solution(op, q, indices, family, tg), op, grid
            ).values
        errors = [
            np.max(np.abs(
                mixed_difference_dn(model, g_list, indices, tg,
                                    eps=eps).values
                - direct
            ))
            for eps in (0.1, 0.05, 0.025)
        ]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        _require(np.all(orders >= 1.7),
                 f"stencil size {len(indices)}: observed orders "
                 f"{np.round(orders, 2)} below 1.7 (errors {errors})")
        notes.append("/".join(f"{o:.2f}" for o in orders))
    return ("observed stencil orders (sizes 1, 2, 3): "
            + ", ".join(notes) + " (all >= 1.7)")


@_registered("jet-equality")
def _check_jet_equality(seed, threads):
    # Reactions sharing all jets up to order three produce identical
    # linearized measurements for every index set of size <= 3, even if
    # they differ at order four.
    grid = _desk_grid()
    op = assemble(grid, 0.5)
    tg = TimeGrid(horizon=1.0, n_steps=16)
    c2 = 1.2 * _omega_envelope(grid)
    c3 = 0.8 * _omega_envelope(grid)
    q_a = make_polynomial_q([(2, c2), (3, c3)], delta=1.0, m=3)
    q_b = make_polynomial_q([(2, c2), (3, c3), (4, 5.0)], delta=1.0, m=4)
    g_list = [
        make_bump(grid, tg, center=c, radius=0.12, t_on=0.1 + 0.05 * i,
                  t_off=0.9 - 0.05 * i)
        for i, c in enumerate(np.linspace(1.55, 1.85, 3))
    ]
    sets = ((0, 1), (0, 2), (1, 2), (0, 1, 2))
    traces = {}
    for tag, q in (("a", q_a), ("b", q_b)):
        family = make_family(op, g_list, tg)
        traces[tag] = {
            indices: dn_map(
                linearized_solution(op, q, indices, family, tg), op, grid
            ).values
            for indices in sets
        }
    worst = max(
        float(np.max(np.abs(traces["a"][key] - traces["b"][key])))
        for key in sets
    )
    _require(worst <= 1e-9,
             f"linearized measurements differ by {worst:.1e} despite "
             f"identical jets up to order 3")
    return (f"4 index sets: measurement gap <= {worst:.1e} between "
            f"reactions sharing jets to order 3")


@_registered("runge-approximation")
def _check_runge_approximation(seed, threads):
    # Interior approximation by exterior controls: residuals strictly
    # decrease along nested control bases for random smooth targets, and
    # an in-span target is reproduced to solver accuracy.
    grid = _desk_grid()
    op = assemble(grid, 0.5)
    tg = TimeGrid(horizon=1.0, n_steps=64)
    rng = np.random.default_rng([seed, 9])
    sizes = (4, 8, 16, 32)
    master = build_basis(op, None, tg, sizes[-1])

    def prefix(count):
        return ControlBasis(
            elements=master.elements[:count],
            traces=master.traces[:count],
            gram=np.ascontiguousarray(master.gram[:count, :count]),
        )

    last = None
    for k in range(5):
        target = _interior_field(rng, grid, tg)
        residuals = [
            approximate(target, prefix(count), op, tg).residual
            for count in sizes
        ]
        _require(
            all(a > b for a, b in zip(residuals, residuals[1:])),
            f"target {k}: residuals not strictly decreasing: "
            f"{[float(f'{r:.3e}') for r in residuals]}",
        )
        last = residuals
    span_target = SpaceTimeField(values=master.traces[0],
                                 support_mask=grid.omega)
    result = approximate(span_target, prefix(4), op, tg, reg=0.0)
    _require(result.residual <= 1e-9,
             f"in-span residual {result.residual:.1e} above 1e-9")
    _require(np.max(np.abs(result.coefficients - np.eye(4)[0])) <= 1e-6,
             "in-span target not reproduced by its own coefficient")
    return (f"5 targets, strictly decreasing residuals over bases "
            f"{sizes} (last target {last[0]:.1e} -> {last[-1]:.1e}); "
            f"in-span residual {result.residual:.1e}")


@_registered("jet-recovery")
def _check_jet_recovery(seed, threads):
    # End-to-end reconstruction of the order-2 and order-3 reaction
    # coefficients from exterior measurements: same-lattice heat data,
    # decoupled finer-lattice data, and a wave variant.
    grid = _coarse_grid()
    tg = TimeGrid(horizon=1.0, n_steps=64)
    op = assemble(grid, 0.5)
    omega = grid.omega
    c2 = 3.0 * _coefficient_hump(grid)
    c3 = 4.0 * _coefficient_hump(grid, center=0.1, half=0.7)
    q = make_polynomial_q([(2, c2), (3, c3)], delta=1.0, m=3)
    tuples = make_recovery_tuples(grid, tg, 3, 6)
    prods2 = [product_of_first_fields(op, b, tg, "heat") for b in tuples[2]]
    prods3 = [product_of_first_fields(op, b, tg, "heat") for b in tuples[3]]
    reg2 = 1e-4 * stack_scale(prods2, op, tg)
    reg3 = 1e-5 * stack_scale(prods3, op, tg)

    started = time.perf_counter()
    oracle = make_synthetic_oracle(Model(op=op, q=q), tg)
    config = RecoveryConfig(op=op, timegrid=tg, order=3, tuples=tuples,
                            regularization={3: reg3})
    estimate = recover_all(oracle, config, threads)
    wall = time.perf_counter() - started
    _require(estimate.status == "complete",
             f"same-lattice recovery ended with: {estimate.status}")
    e2 = _rel_l2(estimate.jets[2], c2, omega)
    e3 = _rel_l2(estimate.jets[3], c3, omega)
    _require(e2 <= 0.10, f"same-lattice order-2 error {e2:.1%} above 10%")
    _require(e3 <= 0.20, f"same-lattice order-3 error {e3:.1%} above 20%")
    _require(wall <= 300.0,
             f"same-lattice recovery took {wall:.0f}s, above 300s")

    oracle = make_synthetic_oracle(Model(op=op, q=q), tg, decoupled=True)
    config = RecoveryConfig(op=op, timegrid=tg, order=3, tuples=tuples,
                            regularization={2: reg2, 3: reg3})
    estimate = recover_all(oracle, config, threads)
    _require(estimate.status == "complete",
             f"decoupled recovery ended with: {estimate.status}")
    d2 = _rel_l2(estimate.jets[2], c2, omega)
    d3 = _rel_l2(estimate.jets[3], c3, omega)
    _require(d2 <= 0.20, f"decoupled order-2 error {d2:.1%} above 20%")
    _require(d3 <= 0.35, f"decoupled order-3 error {d3:.1%} above 35%")

    op_wave = assemble(grid, 0.75)
    q2 = make_polynomial_q([(2, c2)], delta=1.0, m=2)
    oracle = make_synthetic_oracle(
        Model(op=op_wave, q=q2, equation="wave"), tg
    )
    config = RecoveryConfig(op=op_wave, timegrid=tg, order=2,
                            tuples=make_recovery_tuples(grid, tg, 2, 6),
                            equation="wave")
    estimate = recover_all(oracle, config, threads)
    _require(estimate.status == "complete",
             f"wave recovery ended with: {estimate.status}")
    w2 = _rel_l2(estimate.jets[2], c2, omega)
    _require(w2 <= 0.15, f"wave order-2 error {w2:.1%} above 15%")
    return (f"errors: same-lattice {e2:.1%}/{e3:.1%} (orders 2/3, "
            f"{wall:.0f}s), decoupled {d2:.1%}/{d3:.1%}, wave {w2:.1%}")


@_registered("determinism")
def _check_determinism(seed, threads):
    # The command-line recovery pipeline writes bitwise-identical numeric
    # artifacts regardless of the worker count.
    import json

    from . import cli

    config = {
        "grid": {"box_halfwidth": 3.0, "n_points": 81, "omega": [-1.0, 1.0],
                 "w": [1.4, 2.0], "v": [-2.0, -1.4]},
        "time": {"horizon": 1.0, "n_steps": 16},
        "s": 0.5,
        "recover": {
            "mode": "synthetic",
            "order": 2,
            "tuples": 3,
            "truth": {"delta": 1.0, "order": 2,
                      "terms": [{"degree": 2, "coefficient": 2.0}]},
        },
    }
    compared = 0
    with tempfile.TemporaryDirectory() as root:
        path = os.path.join(root, "config.json")
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(config, handle)
        outputs = {}
        for workers in (1, 2):
            out_dir = os.path.join(root, f"run{workers}")
            code = cli.main([
                "recover", "--config", path, "--out", out_dir,
                "--seed", str(seed), "--threads", str(workers),
            ])
            _require(code == 0,
                     f"pipeline exited with {code} at {workers} workers")
            artifacts = {}
            for base, _, names in os.walk(out_dir):
                for name in names:
                    if name.endswith((".csv", ".json")):
                        full = os.path.join(base, name)
                        with open(full, "rb") as handle:
                            artifacts[os.path.relpath(full, out_dir)] = (
                                handle.read()
                            )
            outputs[workers] = artifacts
        _require(set(outputs[1]) == set(outputs[2]),
                 "worker counts produced different artifact sets")
        for name in sorted(outputs[1]):
            _require(outputs[1][name] == outputs[2][name],
                     f"artifact {name} differs between worker counts")
            compared += 1
    return (f"{compared} artifacts bitwise identical across worker "
            f"counts 1 and 2")


CHECK_NAMES = tuple(name for name, _ in _CHECKS)


def run_suite(seed=0, threads=1, checks=None):
    """Run the acceptance checks and return one result per check.

    Parameters
    ----------
    seed : int
        Drives every random data generator in the suite.  Checks are
        theorems or fitted-constant statements, so they are expected to
        pass for any seed; the default pins the canonical run.
    threads : int
        Worker count handed to the pipeline stages that accept one.
        Results are bitwise independent of it.
    checks : sequence of str, optional
        Subset of check names to run, in suite order.  ``None`` runs
        all of them.

    Returns
    -------
    list of CheckResult
        One entry per executed check, in suite order.   A check that
        raises is reported as failed; it never interrupts the others.
    """
    if checks is None:
        selected = list(_CHECKS)
    else:
        unknown = sorted(set(checks) - set(CHECK_NAMES))
        if unknown:
            raise ConfigError(
                f"unknown check(s) {', '.join(unknown)}; available: "
                f"{', '.join(CHECK_NAMES)}"
            )
        wanted = set(checks)
        selected = [(name, fn) for name, fn in _CHECKS if name in wanted]
    results = []
    for name, fn in selected:
        started = time.perf_counter()
        try:
            detail = fn(seed, threads)
            passed = True
        except _Failure as exc:
            passed, detail = False, str(exc)
        except Exception as exc:  # noqa: BLE001 -- a check must not stop the suite
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(
            CheckResult(name=name, passed=passed, detail=detail,
                        duration=time.perf_counter() - started)
        )
    return results
