"""The G-normal distribution as a computable expectation functional.

``E[phi(X)] = u(1, 0)`` where ``u`` solves the G-heat equation with initial
data ``phi``. Convex and concave test functions also have closed forms as
classical normal expectations at the upper and lower variance, evaluated here
by Gauss-Hermite quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionError, DomainError, UnsupportedError
from .gfunction import CovarianceSet, GFunction, SigmaInterval, check_g_axioms
from .gheat import (
    Grid,
    GridFunction,
    RichardsonReport,
    SolverConfig,
    barenblatt_steps,
    evaluate_at,
    richardson_refine,
    solve_gheat_1d,
    solve_gheat_2d,
)

GH_NODES = 64


@dataclass(frozen=True)
class GNormal:
    """G-normal law given by a SigmaInterval (d = 1) or a GFunction."""

    g: object

    def __post_init__(self):
        if isinstance(self.g, SigmaInterval):
            return
        if isinstance(self.g, CovarianceSet):
            object.__setattr__(self, "g", GFunction(self.g))
        if not isinstance(self.g, GFunction):
            raise DomainError("GNormal needs a SigmaInterval or a GFunction")
        if self.g.dim > 2:
            raise UnsupportedError("G-normal evaluation is implemented for d <= 2")
        report = check_g_axioms(self.g, trials=50, rng=np.random.default_rng(0))
        if not report.ok:
            raise DomainError(f"G violates the sublinear monotone axioms: {report.worst_slack}")

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.g, SigmaInterval) else self.g.dim

    def gfunction(self) -> GFunction:
        return GFunction.from_sigma(self.g) if isinstance(self.g, SigmaInterval) else self.g

    def axis_scales(self) -> np.ndarray:
        """Largest standard deviation along each coordinate axis."""
        if isinstance(self.g, SigmaInterval):
            return np.array([self.g.sigma_hi])
        diag = np.diagonal(self.g.source.matrices, axis1=1, axis2=2)
        return np.sqrt(np.maximum(diag.max(axis=0), 0.0))


@dataclass
class Estimate:
    """A computed value with an error estimate.

    ``value`` is the finest-grid value; ``extrapolated`` the Richardson limit
    when available. ``error`` includes the domain-truncation part, which is
    also reported on its own as ``truncation``.
    """

    value: float
    error: float
    extrapolated: float | None = None
    report: RichardsonReport | None = field(default=None, repr=False)
    truncation: float = 0.0

    def __float__(self):
        return float(self.value)

    @property
    def best(self) -> float:
        return self.value if self.extrapolated is None else self.extrapolated


def _radius(gn: GNormal, cfg: SolverConfig, t: float) -> np.ndarray:
    r = cfg.domain_radius_multiplier * gn.axis_scales() * math.sqrt(t)
    return np.maximum(r, 8 * cfg.dx)


def _solve_at_origin(gn: GNormal, phi: Callable, cfg: SolverConfig, dx: float, radius) -> float:
    grid = Grid.symmetric(radius, dx)
    u0 = GridFunction.from_function(grid, phi)
    c = cfg.replace(dx=dx)
    if gn.dim == 1:
        u = solve_gheat_1d(u0, gn.g, c)
        return float(u.values[grid.nx[0] // 2])
    u = solve_gheat_2d(u0, gn.gfunction(), c)
    return float(u.values[grid.nx[0] // 2, grid.nx[1] // 2])


def gnormal_expect(gn: GNormal, phi: Callable, cfg: SolverConfig = SolverConfig(), levels: int = 3) -> Estimate:
    """``E[phi(sqrt(t) X)]`` for ``t = cfg.t_final`` (so ``E[phi(X)]`` by default).

    The PDE is solved on grids with spacing ``cfg.dx * 2^k`` for
    ``k = levels-1, ..., 0``; the finest value is returned. The error
    estimate adds the Richardson discretisation error to a truncation error
    measured on the coarsest grid with a box 1.5 times wider. ``levels=1``
    skips both and reports an error of NaN.
    """
    radius = _radius(gn, cfg, cfg.t_final)
    if levels <= 1:
        v = _solve_at_origin(gn, phi, cfg, cfg.dx, radius)
        return Estimate(v, float("nan"))
    coarse = cfg.dx * 2 ** (levels - 1)
    rep = richardson_refine(lambda h: _solve_at_origin(gn, phi, cfg, h, radius), coarse, levels)
    trunc = abs(_solve_at_origin(gn, phi, cfg, coarse, 1.5 * radius) - rep.values[0])
    return Estimate(rep.finest, rep.error_estimate + trunc, rep.extrapolated, rep, trunc)


# ---------------------------------------------------------------------------
# closed forms


def gauss_hermite_expect(phi: Callable, std: float, nodes: int = GH_NODES, kinks=None) -> float:
    """``E[phi(std * Z)]`` for standard normal ``Z``.

    Smooth ``phi`` uses Gauss-Hermite quadrature with ``nodes`` points. When
    ``kinks`` (points where ``phi`` is not smooth) are given, or ``phi``
    carries a ``kinks`` attribute, the line is cut at those points and each
    piece of ``[-12 std, 12 std]`` gets its own Gauss-Legendre rule; a single
    Hermite rule only converges like ``1/nodes`` across a kink.
    """
    if kinks is None:
        kinks = getattr(phi, "kinks", ())
    if std == 0:
        return float(np.asarray(phi(np.zeros(1)), dtype=float)[0])
    if not kinks:
        y, w = np.polynomial.hermite_e.hermegauss(nodes)
        return float(np.sum(w * np.asarray(phi(std * y), dtype=float)) / math.sqrt(2 * math.pi))
    cut = 12.0
    pts = sorted({-cut, cut, *(k / std for k in kinks if -cut < k / std < cut)})
    y, w = np.polynomial.legendre.leggauss(nodes)
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        z = 0.5 * (b - a) * y + 0.5 * (a + b)
        dens = np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
        total += 0.5 * (b - a) * float(np.sum(w * dens * np.asarray(phi(std * z), dtype=float)))
    return total


def _midpoint_violation(phi: Callable, scale: float, rng: np.random.Generator, trials: int = 1000) -> float:
    r = 6.0 * max(scale, 1e-3)
    x = rng.uniform(-r, r, trials)
    y = rng.uniform(-r, r, trials)
    fx, fy = np.asarray(phi(x), dtype=float), np.asarray(phi(y), dtype=float)
    fm = np.asarray(phi(0.5 * (x + y)), dtype=float)
    slack = 0.5 * (fx + fy) - fm
    tol = 1e-10 * np.maximum(1.0, np.abs(fx) + np.abs(fy))
    return float(np.min(slack + tol))


def convex_closed_form(phi: Callable, sigma: SigmaInterval, rng: np.random.Generator | None = None) -> float:
    """``E[phi(X)]`` for convex ``phi``: the classical expectation at ``sigma_hi``.

    A 1000-point randomised midpoint-convexity check runs first; a failure
    raises :class:`DomainError`.
    """
    rng = np.random.default_rng(12345) if rng is None else rng
    if _midpoint_violation(phi, sigma.sigma_hi, rng) < 0:
        raise DomainError("test function failed the midpoint convexity check")
    return gauss_hermite_expect(phi, sigma.sigma_hi)


def concave_closed_form(phi: Callable, sigma: SigmaInterval, rng: np.random.Generator | None = None) -> float:
    """``E[phi(X)]`` for concave ``phi``: the classical expectation at ``sigma_lo``."""
    rng = np.random.default_rng(12345) if rng is None else rng
    if _midpoint_violation(lambda x: -np.asarray(phi(x), dtype=float), sigma.sigma_hi, rng) < 0:
        raise DomainError("test function failed the midpoint concavity check")
    return gauss_hermite_expect(phi, sigma.sigma_lo)


# ---------------------------------------------------------------------------
# numerical checks of the defining properties


@dataclass
class Residual:
    lhs: float
    rhs: float

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)

    def __float__(self):
        return self.residual


def verify_stability(gn: GNormal, a: float, b: float, phi: Callable, cfg: SolverConfig = SolverConfig()) -> Residual:
    """Compare ``E[phi(aX + bX')]`` with ``E[phi(sqrt(a^2 + b^2) X)]``.

    The left side is nested: ``v(x) = E[phi(x + b X')]`` is a G-heat solve to
    time ``b^2`` on a grid of spacing ``a dx``, so ``psi(x) = v(a x)`` is read
    off node by node on the outer grid, and ``E[psi(X)]`` is a second solve to
    time 1. The right side is a single solve of ``phi(c x)``.
    """
    if gn.dim != 1:
        raise DimensionError("verify_stability is implemented for d = 1")
    if a < 0 or b < 0:
        raise DomainError("a and b must be nonnegative")
    sigma = gn.g if isinstance(gn.g, SigmaInterval) else _sigma_of(gn.g)
    dx = cfg.dx
    m = cfg.domain_radius_multiplier * sigma.sigma_hi
    c = math.hypot(a, b)
    one = cfg.replace(t_final=1.0)

    rhs_grid = Grid.symmetric(max(m, 8 * dx), dx)
    rhs_u = solve_gheat_1d(GridFunction.from_function(rhs_grid, lambda x: phi(c * x)), sigma, one)
    rhs = float(rhs_u.values[rhs_grid.nx[0] // 2])

    if a == 0:
        inner_grid = Grid.symmetric(max(m * b, 8 * dx), dx)
        v = barenblatt_steps(GridFunction.from_function(inner_grid, phi).values, dx, sigma, b * b, cfg.cfl, cfg.boundary)
        return Residual(float(v[inner_grid.nx[0] // 2]), rhs)

    # the two stacked solves spread like one of time 1 + (b/a)^2 in outer units
    half = max(4, math.ceil(max(m * math.hypot(1.0, b / a), 8 * dx) / dx - 1e-9))
    outer = Grid((-half * dx,), (half * dx,), (2 * half + 1,))
    inner = Grid((-half * dx * a,), (half * dx * a,), (2 * half + 1,))
    v = GridFunction.from_function(inner, phi).values
    if b > 0:
        v = barenblatt_steps(v, a * dx, sigma, b * b, cfg.cfl, cfg.boundary)
    u = solve_gheat_1d(GridFunction(outer, v), sigma, one)
    return Residual(float(u.values[half]), rhs)


def _sigma_of(g: GFunction) -> SigmaInterval:
    q = g.source.matrices[:, 0, 0]
    return SigmaInterval(float(q.min()), float(q.max()))


def verify_linear_image(gn: GNormal, a_map, phi: Callable, cfg: SolverConfig = SolverConfig()) -> Residual:
    """Compare ``E[phi(A X)]`` via a d-dim solve of ``phi o A`` with the solve
    for the image G-function ``B -> G(A^T B A)``.
    """
    a_map = np.atleast_2d(np.asarray(a_map, dtype=float))
    m, d = a_map.shape
    if d != gn.dim:
        raise DimensionError(f"A has {d} columns, X has dimension {gn.dim}")
    if m > 2:
        raise UnsupportedError("images of dimension > 2 are not supported")
    g = gn.gfunction()

    def composed(*xs):
        ys = [sum(a_map[i, j] * xs[j] for j in range(d)) for i in range(m)]
        return phi(*ys)

    lhs = gnormal_expect(gn, composed, cfg, levels=1).value
    image = GNormal(g.image(a_map))
    rhs = gnormal_expect(image, phi, cfg, levels=1).value
    return Residual(lhs, rhs)
