"""Explicit monotone finite differences for the G-heat equation ``u_t = G(D^2 u)``.

One-dimensional problems (the Barenblatt equation) use the centred three-point
second difference with the scalar G applied nodewise. Two-dimensional problems
use the seven-point cross-derivative stencil, whose orientation follows the
sign of the off-diagonal entry of each covariance matrix; it is monotone only
for diagonally dominant matrices, and anything else is rejected.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigurationError, DimensionError, DivergenceError, DomainError, UnsupportedError
from .gfunction import CovarianceSet, GFunction, SigmaInterval

BOUNDARIES = ("linear-extrapolation", "dirichlet-from-initial")


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    nx: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        nx = tuple(int(v) for v in np.atleast_1d(self.nx))
        if not (len(lo) == len(hi) == len(nx)) or len(nx) not in (1, 2):
            raise DimensionError("grid must be 1-d or 2-d with matching lo/hi/nx")
        for a, b, n in zip(lo, hi, nx):
            if not a < b:
                raise DomainError(f"need lo < hi, got [{a}, {b}]")
            if n < 8:
                raise DomainError(f"need at least 8 nodes per axis, got {n}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "nx", nx)

    @property
    def dim(self) -> int:
        return len(self.nx)

    @property
    def dx(self) -> tuple:
        return tuple((b - a) / (n - 1) for a, b, n in zip(self.lo, self.hi, self.nx))

    @property
    def axes(self) -> list:
        return [np.linspace(a, b, n) for a, b, n in zip(self.lo, self.hi, self.nx)]

    def mesh(self) -> list:
        return np.meshgrid(*self.axes, indexing="ij")

    @classmethod
    def symmetric(cls, radius, dx: float) -> "Grid":
        """Grid on ``[-r, r]`` per axis with spacing ``dx`` and a node at 0.

        ``radius`` may be a scalar (1-d) or one radius per axis.
        """
        radii = np.atleast_1d(np.asarray(radius, dtype=float))
        half = [max(4, math.ceil(r / dx - 1e-9)) for r in radii]
        return cls(
            tuple(-h * dx for h in half),
            tuple(h * dx for h in half),
            tuple(2 * h + 1 for h in half),
        )


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size != int(np.prod(self.grid.nx)):
            raise DimensionError(f"{v.size} values for a grid of shape {self.grid.nx}")
        v = v.reshape(self.grid.nx)
        if not np.all(np.isfinite(v)):
            raise DomainError("grid function values must be finite")
        self.values = v

    @classmethod
    def from_function(cls, grid: Grid, phi: Callable) -> "GridFunction":
        vals = np.broadcast_to(np.asarray(phi(*grid.mesh()), dtype=float), grid.nx)
        return cls(grid, np.array(vals))

    def to_csv(self, path) -> None:
        names = ["x", "y"][: self.grid.dim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names + ["value"])
            coords = [m.ravel() for m in self.grid.mesh()]
            for row in zip(*coords, self.values.ravel()):
                w.writerow([repr(float(v)) for v in row])

    def metadata(self) -> dict:
        return {"lo": list(self.grid.lo), "hi": list(self.grid.hi), "nx": list(self.grid.nx)}


@dataclass(frozen=True)
class SolverConfig:
    """Time horizon, CFL number, boundary rule and grid resolution.

    ``dx`` is the finest spacing used by the evaluators that build their own
    grid; the truncation radius is ``domain_radius_multiplier * sigma * sqrt(t)``
    measured from the evaluation region.
    """

    t_final: float = 1.0
    cfl: float = 0.4
    boundary: str = "linear-extrapolation"
    domain_radius_multiplier: float = 4.0
    dx: float = 0.02

    def __post_init__(self):
        if not self.t_final > 0:
            raise ConfigurationError("t_final must be positive")
        if not 0 < self.cfl <= 0.5:
            raise ConfigurationError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"unknown boundary rule {self.boundary!r}")
        if not self.domain_radius_multiplier >= 4:
            raise ConfigurationError("domain_radius_multiplier must be >= 4")
        if not self.dx > 0:
            raise ConfigurationError("dx must be positive")

    def replace(self, **kw) -> "SolverConfig":
        d = asdict(self)
        d.update(kw)
        return SolverConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc) -> "SolverConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "SolverConfig":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# 1-d stepping


def _apply_boundary_last_axis(u: np.ndarray, u0: np.ndarray, boundary: str) -> None:
    if boundary == "linear-extrapolation":
        u[..., 0] = 2.0 * u[..., 1] - u[..., 2]
        u[..., -1] = 2.0 * u[..., -2] - u[..., -3]
    else:
        u[..., 0] = u0[..., 0]
        u[..., -1] = u0[..., -1]


def barenblatt_steps(
    values: np.ndarray,
    dx: float,
    sigma: SigmaInterval,
    t: float,
    cfl: float = 0.4,
    boundary: str = "linear-extrapolation",
) -> np.ndarray:
    """Advance ``u_t = (hi (u_xx)^+ - lo (u_xx)^-) / 2`` along the last axis.

    Leading axes are independent problems solved in one batch. The step is
    ``dt = t / ceil(t hi / (cfl dx^2))`` so the horizon is hit exactly and the
    scheme stays monotone.
    """
    if not 0 < cfl <= 0.5:
        raise ConfigurationError(f"cfl must lie in (0, 0.5], got {cfl}")
    u = np.array(values, dtype=float)
    if u.shape[-1] < 3:
        raise DimensionError("need at least three nodes along the solve axis")
    hi, lo = sigma.sigma_hi_sq, sigma.sigma_lo_sq
    if t <= 0 or hi == 0:
        return u
    steps = math.ceil(t * hi / (cfl * dx * dx) - 1e-9)
    dt = t / steps
    c_hi = 0.5 * dt * hi / (dx * dx)
    c_lo = 0.5 * dt * lo / (dx * dx)
    u0 = u.copy() if boundary == "dirichlet-from-initial" else None
    d2 = np.empty(u.shape[:-1] + (u.shape[-1] - 2,))
    for _ in range(steps):
        np.subtract(u[..., 2:], u[..., 1:-1], out=d2)
        d2 -= u[..., 1:-1]
        d2 += u[..., :-2]
        u[..., 1:-1] += np.where(d2 > 0, c_hi, c_lo) * d2
        _apply_boundary_last_axis(u, u0, boundary)
    if not np.all(np.isfinite(u)):
        raise DivergenceError("Barenblatt scheme produced non-finite values")
    return u


def _as_sigma(g) -> SigmaInterval:
    if isinstance(g, SigmaInterval):
        return g
    if isinstance(g, GFunction):
        g = g.source
    if isinstance(g, CovarianceSet):
        if g.dim != 1:
            raise DimensionError(f"expected a 1-d covariance set, got dim {g.dim}")
        q = g.matrices[:, 0, 0]
        return SigmaInterval(float(q.min()), float(q.max()))
    raise DomainError(f"cannot interpret {type(g).__name__} as a 1-d G-function")


def solve_barenblatt(phi: GridFunction, sigma: SigmaInterval, cfg: SolverConfig) -> GridFunction:
    """``u(t_final, .)`` for the Barenblatt equation with initial data ``phi``."""
    if phi.grid.dim != 1:
        raise DimensionError("solve_barenblatt needs a 1-d grid")
    u = barenblatt_steps(phi.values, phi.grid.dx[0], sigma, cfg.t_final, cfg.cfl, cfg.boundary)
    return GridFunction(phi.grid, u)


def solve_gheat_1d(phi: GridFunction, g, cfg: SolverConfig) -> GridFunction:
    """1-d G-heat solve for a SigmaInterval or a 1-d GFunction/CovarianceSet."""
    return solve_barenblatt(phi, _as_sigma(g), cfg)


# ---------------------------------------------------------------------------
# 2-d stepping


def _check_stencil(thetas: np.ndarray, dx: float, dy: float) -> None:
    for q in thetas:
        off = abs(q[0, 1]) / (dx * dy)
        if q[0, 0] / dx**2 < off - 1e-12 * max(1.0, off) or q[1, 1] / dy**2 < off - 1e-12 * max(1.0, off):
            raise UnsupportedError(
                "covariance matrix is not diagonally dominant on this grid; "
                "the seven-point stencil would not be monotone"
            )


def _apply_boundary_2d(u: np.ndarray, u0: np.ndarray | None, boundary: str) -> None:
    if boundary == "linear-extrapolation":
        u[0, :] = 2.0 * u[1, :] - u[2, :]
        u[-1, :] = 2.0 * u[-2, :] - u[-3, :]
        u[:, 0] = 2.0 * u[:, 1] - u[:, 2]
        u[:, -1] = 2.0 * u[:, -2] - u[:, -3]
    else:
        u[0, :], u[-1, :] = u0[0, :], u0[-1, :]
        u[:, 0], u[:, -1] = u0[:, 0], u0[:, -1]


def solve_gheat_2d(phi: GridFunction, g, cfg: SolverConfig) -> GridFunction:
    """``u(t_final, .)`` for ``u_t = G(D^2 u)`` on a 2-d grid.

    ``G = 1/2 max_Q tr(D^2u Q)`` with the discrete operator assembled per
    covariance matrix and the max taken nodewise.
    """
    if phi.grid.dim != 2:
        raise DimensionError("solve_gheat_2d needs a 2-d grid")
    src = g.source if isinstance(g, GFunction) else g
    if not isinstance(src, CovarianceSet) or src.dim != 2:
        raise DimensionError("solve_gheat_2d needs a 2-d covariance set")
    dx, dy = phi.grid.dx
    thetas = src.matrices
    _check_stencil(thetas, dx, dy)
    lam = src.max_eigenvalue
    u = np.array(phi.values, dtype=float)
    if lam <= 0:
        return GridFunction(phi.grid, u)
    dt_max = cfg.cfl * min(dx, dy) ** 2 / lam
    steps = math.ceil(cfg.t_final / dt_max - 1e-9)
    dt = cfg.t_final / steps
    # per-matrix weights: 1/2 (Q11 uxx + Q22 uyy + 2 Q12 uxy), with uxy
    # taken from the main-diagonal stencil when Q12 >= 0 and the anti-diagonal one otherwise
    w_xx = 0.5 * dt * thetas[:, 0, 0] / dx**2
    w_yy = 0.5 * dt * thetas[:, 1, 1] / dy**2
    w_xy = dt * thetas[:, 0, 1] / (2.0 * dx * dy)
    need_pos = bool(np.any(w_xy > 0))
    need_neg = bool(np.any(w_xy < 0))
    u0 = u.copy() if cfg.boundary == "dirichlet-from-initial" else None
    for _ in range(steps):
        c = u[1:-1, 1:-1]
        east, west = u[2:, 1:-1], u[:-2, 1:-1]
        north, south = u[1:-1, 2:], u[1:-1, :-2]
        dxx = east - 2.0 * c + west
        dyy = north - 2.0 * c + south
        cross_base = 2.0 * c - east - west - north - south
        dxy_pos = u[2:, 2:] + u[:-2, :-2] + cross_base if need_pos else None
        dxy_neg = -(u[2:, :-2] + u[:-2, 2:] + cross_base) if need_neg else None
        best = None
        for k in range(len(thetas)):
            inc = w_xx[k] * dxx + w_yy[k] * dyy
            if w_xy[k] > 0:
                inc += w_xy[k] * dxy_pos
            elif w_xy[k] < 0:
                inc += (-w_xy[k]) * dxy_neg
            best = inc if best is None else np.maximum(best, inc)
        u[1:-1, 1:-1] += best
        _apply_boundary_2d(u, u0, cfg.boundary)
    if not np.all(np.isfinite(u)):
        raise DivergenceError("G-heat scheme produced non-finite values")
    return GridFunction(phi.grid, u)


# ---------------------------------------------------------------------------
# interpolation and refinement


def evaluate_at(u: GridFunction, x) -> float:
    """Multilinear interpolation of ``u`` at the point ``x``."""
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.size != u.grid.dim:
        raise DimensionError(f"point has {pt.size} coordinates, grid is {u.grid.dim}-d")
    for v, a, b in zip(pt, u.grid.lo, u.grid.hi):
        if not a - 1e-12 <= v <= b + 1e-12:
            raise DomainError(f"point {pt.tolist()} lies outside the grid box")
    if u.grid.dim == 1:
        return float(np.interp(pt[0], u.grid.axes[0], u.values))
    interp = RegularGridInterpolator(u.grid.axes, u.values, method="linear", bounds_error=False, fill_value=None)
    return float(interp(pt[None, :])[0])


@dataclass
class RichardsonReport:
    """Values on successively halved grids and the extrapolated limit."""

    dxs: list
    values: list
    order: float
    extrapolated: float
    error_estimate: float
    monotone: bool
    flags: list = field(default_factory=list)

    @property
    def finest(self) -> float:
        return self.values[-1]


def richardson_refine(problem: Callable[[float], float], dx: float, levels: int = 3) -> RichardsonReport:
    """Solve at ``dx, dx/2, ..., dx/2^(levels-1)`` and extrapolate.

    The observed order comes from the last three levels. A non-monotone error
    sequence (differences that do not shrink) is flagged and the finest value
    is then reported unextrapolated, with the last difference as the error.
    """
    if levels < 3:
        raise DomainError("richardson_refine needs at least three levels")
    dxs = [dx / 2**k for k in range(levels)]
    vals = [float(problem(h)) for h in dxs]
    d1 = vals[-2] - vals[-3]
    d2 = vals[-1] - vals[-2]
    flags = []
    scale = max(1.0, abs(vals[-1]))
    if abs(d1) <= 1e-13 * scale and abs(d2) <= 1e-13 * scale:
        return RichardsonReport(dxs, vals, float("nan"), vals[-1], abs(d2), True, ["converged"])
    monotone = abs(d2) < abs(d1) and d1 * d2 > 0
    if not monotone:
        flags.append("non-monotone error sequence")
        return RichardsonReport(dxs, vals, float("nan"), vals[-1], abs(d2), False, flags)
    ratio = d1 / d2
    order = math.log2(ratio)
    extra = vals[-1] + d2 / (ratio - 1.0)
    return RichardsonReport(dxs, vals, order, extra, abs(extra - vals[-1]), True, flags)
