"""Shared fixtures: one desk-scale geometry reused across the suite."""

from __future__ import annotations

import pytest

from fraclab.fracop import assemble, dirichlet_eigenpairs
from fraclab.grid import TimeGrid, build_grid


@pytest.fixture(scope="session")
def grid_desk():
    """Standard desk-scale lattice: box [-3, 3], 241 nodes."""
    return build_grid(3.0, 241, (-1.0, 1.0), (1.4, 2.0), (-2.0, -1.4))


@pytest.fixture(scope="session")
def tg_desk():
    return TimeGrid(horizon=1.0, n_steps=64)


@pytest.fixture(scope="session")
def op_desk(grid_desk):
    """Operator at s = 1/2 on the desk grid (diffusion tests)."""
    return assemble(grid_desk, 0.5)


@pytest.fixture(scope="session")
def op_wave(grid_desk):
    """Operator at s = 3/4 on the desk grid (wave tests need s > 1/2)."""
    return assemble(grid_desk, 0.75)


@pytest.fixture(scope="session")
def eig_desk(op_desk, grid_desk):
    return dirichlet_eigenpairs(op_desk, grid_desk, 12)


@pytest.fixture(scope="session")
def eig_wave(op_wave, grid_desk):
    return dirichlet_eigenpairs(op_wave, grid_desk, 12)
