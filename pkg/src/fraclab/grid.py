"""Spatial lattice, time lattice, index sets, and space-time fields.

The computational box is the symmetric interval ``[-L, L]`` sampled at
``n_points`` uniformly spaced nodes, so the spacing is
``h = 2 L / (n_points - 1)`` and ``x_i = -L + i h``.  Three index sets
live on the lattice: the interior domain ``omega`` where the equations
are posed, the exterior control region ``w_set`` where input data are
supported, and the exterior observation region ``v_set`` where
measurements are read off.  ``w_set`` and ``v_set`` may coincide, but
both must keep at least two lattice cells of clearance from ``omega``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, OverlapError, ParamError, ShapeError, SupportError

#: Minimum nodes in the whole lattice.
MIN_GRID_POINTS = 32
#: Minimum nodes in each of omega, w_set, v_set.
MIN_SET_POINTS = 4
#: Minimum number of time steps.
MIN_TIME_STEPS = 8
#: Required clearance between omega and each exterior set, in units of h.
MIN_SEPARATION_CELLS = 2


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform spatial lattice with interior and exterior index sets.

    Attributes
    ----------
    box_halfwidth : float
        Half-width ``L`` of the computational box ``[-L, L]``.
    n_points : int
        Number of lattice nodes.
    h : float
        Node spacing, ``2 L / (n_points - 1)``.
    x : ndarray
        Node coordinates, shape ``(n_points,)``.
    omega, w_set, v_set : ndarray
        Sorted contiguous index arrays for the interior domain, the
        control region, and the observation region.
    omega_interval, w_interval, v_interval : tuple of float
        The physical intervals the index sets were snapped from.
    """

    box_halfwidth: float
    n_points: int
    h: float
    x: np.ndarray
    omega: np.ndarray
    w_set: np.ndarray
    v_set: np.ndarray
    omega_interval: tuple[float, float]
    w_interval: tuple[float, float]
    v_interval: tuple[float, float]

    def interior_mask(self) -> np.ndarray:
        """Boolean mask of the omega nodes."""
        mask = np.zeros(self.n_points, dtype=bool)
        mask[self.omega] = True
        return mask


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time lattice ``t_k = k dt`` on ``[0, T]``.

    Attributes
    ----------
    horizon : float
        Final time ``T``.
    n_steps : int
        Number of steps; there are ``n_steps + 1`` time nodes.
    """

    horizon: float
    n_steps: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.horizon) or self.horizon <= 0.0:
            raise ParamError(f"time horizon must be positive, got {self.horizon}")
        if self.n_steps < MIN_TIME_STEPS:
            raise ParamError(
                f"need at least {MIN_TIME_STEPS} time steps, got {self.n_steps}"
            )

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return _frozen(np.arange(self.n_steps + 1) * self.dt)


@dataclass(frozen=True)
class SpaceTimeField:
    """Samples of a function of (t, x) on the full space-time lattice.

    Attributes
    ----------
    values : ndarray
        Shape ``(n_steps + 1, n_points)``; row ``k`` is the spatial
        profile at time node ``t_k``.
    support_mask : ndarray or None
        Optional index array; when present the field vanishes at every
        node outside it.
    """

    values: np.ndarray
    support_mask: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ShapeError(
                f"field values must be 2-d (time x space), got ndim={values.ndim}"
            )
        if not np.all(np.isfinite(values)):
            raise ParamError("field values must be finite")
        object.__setattr__(self, "values", _frozen(values))
        if self.support_mask is not None:
            mask = _frozen(np.asarray(self.support_mask, dtype=np.intp))
            object.__setattr__(self, "support_mask", mask)
            off = np.setdiff1d(np.arange(values.shape[1]), mask)
            if off.size and np.any(values[:, off] != 0.0):
                raise SupportError("field is nonzero outside its support mask")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _snap_open_interval(x: np.ndarray, h: float, lo: float, hi: float) -> np.ndarray:
    """Indices of lattice nodes strictly inside the open interval (lo, hi)."""
    eps = 1e-9 * h
    return np.nonzero((x > lo + eps) & (x < hi - eps))[0]


def _check_interval(name: str, interval: tuple[float, float], halfwidth: float) -> None:
    lo, hi = float(interval[0]), float(interval[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or lo >= hi:
        raise DomainError(f"{name} interval must satisfy lo < hi, got ({lo}, {hi})")
    tol = 1e-12 * halfwidth
    if lo < -halfwidth - tol or hi > halfwidth + tol:
        raise DomainError(
            f"{name} interval ({lo}, {hi}) leaves the box [-{halfwidth}, {halfwidth}]"
        )


def _index_gap(a: np.ndarray, b: np.ndarray) -> int:
    """Smallest index distance between two contiguous index ranges (0 if they meet)."""
    if b[0] > a[-1]:
        return int(b[0] - a[-1])
    if a[0] > b[-1]:
        return int(a[0] - b[-1])
    return 0


def build_grid(
    box_halfwidth: float,
    n_points: int,
    omega_interval: tuple[float, float],
    w_interval: tuple[float, float],
    v_interval: tuple[float, float],
) -> Grid:
    """Construct a :class:`Grid`, snapping physical intervals to index sets.

    Each interval is taken as open; a node landing exactly on an endpoint
    is excluded.  The control and observation sets may coincide, but each
    must keep at least ``MIN_SEPARATION_CELLS`` cells of clearance from
    the interior set.

    Raises
    ------
    DomainError
        If the lattice is too coarse, an interval leaves the box, or a
        snapped set has fewer than ``MIN_SET_POINTS`` nodes.
    OverlapError
        If the control or observation set touches the interior set.
    """
    if not np.isfinite(box_halfwidth) or box_halfwidth <= 0.0:
        raise DomainError(f"box halfwidth must be positive, got {box_halfwidth}")
    if n_points < MIN_GRID_POINTS:
        raise DomainError(
            f"need at least {MIN_GRID_POINTS} lattice nodes, got {n_points}"
        )
    L = float(box_halfwidth)
    h = 2.0 * L / (n_points - 1)
    x = -L + h * np.arange(n_points)

    sets = {}
    for name, interval in (
        ("omega", omega_interval),
        ("w_set", w_interval),
        ("v_set", v_interval),
    ):
        _check_interval(name, interval, L)
        idx = _snap_open_interval(x, h, float(interval[0]), float(interval[1]))
        if idx.size < MIN_SET_POINTS:
            raise DomainError(
                f"{name} snaps to {idx.size} nodes; need at least {MIN_SET_POINTS}"
            )
        sets[name] = idx

    for name in ("w_set", "v_set"):
        gap = _index_gap(sets["omega"], sets[name])
        if gap < MIN_SEPARATION_CELLS:
            raise OverlapError(
                f"{name} must keep {MIN_SEPARATION_CELLS} cells of clearance from "
                f"omega; closest nodes are {gap} cells apart"
            )

    return Grid(
        box_halfwidth=L,
        n_points=int(n_points),
        h=h,
        x=_frozen(x),
        omega=_frozen(sets["omega"]),
        w_set=_frozen(sets["w_set"]),
        v_set=_frozen(sets["v_set"]),
        omega_interval=(float(omega_interval[0]), float(omega_interval[1])),
        w_interval=(float(w_interval[0]), float(w_interval[1])),
        v_interval=(float(v_interval[0]), float(v_interval[1])),
    )


def make_bump(
    grid: Grid,
    timegrid: TimeGrid,
    center: float,
    radius: float,
    t_on: float,
    t_off: float,
    amplitude: float = 1.0,
) -> SpaceTimeField:
    """Smooth compactly supported space-time bump in the control region.

    The profile is the product mollifier

    ``amplitude * exp(-1 / (1 - ((x-center)/radius)^2))
    * exp(-nu / ((t - t_on) (t_off - t)))``

    with ``nu = ((t_off - t_on)/2)^2``, so the time factor peaks at
    ``exp(-1)`` at the window midpoint regardless of window length.  The
    field vanishes identically outside ``|x - center| < radius`` and
    outside ``t_on < t < t_off``; in particular it vanishes at ``t = 0``.

    Raises
    ------
    SupportError
        If the spatial support leaves the control region ``w_set`` or the
        time window leaves ``(0, horizon]``.
    ParamError
        If ``radius`` or ``amplitude`` is not finite and positive/nonzero.
    """
    if not np.isfinite(radius) or radius <= 0.0:
        raise ParamError(f"bump radius must be positive, got {radius}")
    if not np.isfinite(center) or not np.isfinite(amplitude):
        raise ParamError("bump center and amplitude must be finite")
    if not (0.0 < t_on < t_off <= timegrid.horizon):
        raise SupportError(
            f"time window ({t_on}, {t_off}) must sit inside (0, {timegrid.horizon}]"
        )

    r = (grid.x - center) / radius
    space = np.zeros(grid.n_points)
    inside = r * r < 1.0 - 1e-12
    space[inside] = np.exp(-1.0 / (1.0 - r[inside] ** 2))

    t = timegrid.times
    window = (t - t_on) * (t_off - t)
    time_factor = np.zeros(timegrid.n_steps + 1)
    open_window = window > 0.0
    nu = ((t_off - t_on) / 2.0) ** 2
    time_factor[open_window] = np.exp(-nu / window[open_window])

    values = amplitude * np.outer(time_factor, space)

    nonzero_cols = np.nonzero(np.any(values != 0.0, axis=0))[0]
    if not np.isin(nonzero_cols, grid.w_set).all():
        raise SupportError(
            "bump support leaves the control region: tighten center/radius"
        )
    return SpaceTimeField(values=values, support_mask=grid.w_set)
