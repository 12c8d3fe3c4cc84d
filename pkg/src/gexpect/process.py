"""Finite-dimensional distributions of G-Brownian motion and G-Gaussian processes.

A G-Brownian motion sampled at ``t_1 < ... < t_n`` is evaluated backward:
with ``u_n = phi``, each ``u_{k-1}`` is the Barenblatt evolution of ``u_k`` in
its last variable over ``t_k - t_{k-1}``, read off on the diagonal
``x_k = x_{k-1}``. Every variable lives on the same grid, so the read-off is
exact at nodes and the whole recursion is a batched solve along the last
axis followed by ``np.diagonal``.

A G-Gaussian process at the same times is a single G-normal vector whose
G-function is the family member ``G_t``; it is evaluated with one solve of
the multi-dimensional G-heat equation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .clt import IncrementModel, _common_unit
from .errors import DimensionError, DomainError, UnsupportedError
from .gfunction import CovarianceSet, GFamily, GFunction, SigmaInterval, validate_consistency
from .gheat import Grid, SolverConfig, barenblatt_steps, richardson_refine
from .gnormal import Estimate, GNormal, gauss_hermite_expect, gnormal_expect

FDD_BUDGET = 20_000_000


@dataclass(frozen=True)
class TimeTuple:
    """Distinct positive times, stored sorted.

    ``order[i]`` is the caller's position of the i-th smallest time, so the
    caller's tuple is recovered as ``sorted[inverse]``.
    """

    times: tuple
    order: tuple = ()

    def __post_init__(self):
        raw = tuple(float(t) for t in self.times)
        if not raw:
            raise DomainError("a time tuple needs at least one time")
        if any(not t > 0 for t in raw):
            raise DomainError("times must be positive")
        if len(set(raw)) != len(raw):
            raise DomainError("times must be distinct")
        if self.order:
            # already normalised
            if list(raw) != sorted(raw):
                raise DomainError("normalised times must be increasing")
            return
        order = tuple(int(i) for i in np.argsort(raw, kind="stable"))
        object.__setattr__(self, "times", tuple(raw[i] for i in order))
        object.__setattr__(self, "order", order)

    def __len__(self):
        return len(self.times)

    @property
    def original(self) -> tuple:
        out = [0.0] * len(self.times)
        for k, i in enumerate(self.order):
            out[i] = self.times[k]
        return tuple(out)

    @property
    def increments(self) -> np.ndarray:
        return np.diff((0.0,) + self.times)

    def sorted_phi(self, phi: Callable) -> Callable:
        """Re-express ``phi`` (caller's argument order) in sorted-time order."""
        if list(self.order) == list(range(len(self.order))):
            return phi
        inv = np.argsort(self.order)

        def wrapped(*ys):
            return phi(*(ys[inv[i]] for i in range(len(ys))))

        return wrapped


@dataclass
class FDDSpec:
    times: TimeTuple
    phi: Callable
    d: int = 1

    def __post_init__(self):
        if not isinstance(self.times, TimeTuple):
            self.times = TimeTuple(tuple(self.times))
        arity = getattr(self.phi, "arity", None)
        if arity is not None and arity != len(self.times) * self.d:
            raise DimensionError(f"phi takes {arity} arguments, expected {len(self.times) * self.d}")

    @property
    def n(self) -> int:
        return len(self.times)


def _vals(phi: Callable, *xs) -> np.ndarray:
    out = np.asarray(phi(*xs), dtype=float)
    return np.broadcast_to(out, np.broadcast(*xs).shape).copy()


# ---------------------------------------------------------------------------
# G-Brownian motion


def _gbm_nested(phi: Callable, times: Sequence[float], sigma: SigmaInterval, cfg: SolverConfig, dx: float,
                widen: float = 1.0) -> float:
    n = len(times)
    radius = widen * max(cfg.domain_radius_multiplier * sigma.sigma_hi * math.sqrt(times[-1]), 8 * dx)
    grid = Grid.symmetric(radius, dx)
    x = grid.axes[0]
    npts = x.size
    if npts**n > FDD_BUDGET:
        raise UnsupportedError(f"{n} nested variables on {npts} nodes exceed the budget; coarsen dx")
    mesh = np.meshgrid(*([x] * n), indexing="ij", sparse=True)
    u = _vals(phi, *mesh)
    steps = np.diff((0.0,) + tuple(times))
    for k in range(n - 1, -1, -1):
        u = barenblatt_steps(u, dx, sigma, float(steps[k]), cfg.cfl, cfg.boundary)
        if k > 0:
            u = np.diagonal(u, axis1=-2, axis2=-1).copy()
    return float(u[npts // 2])


def gbm_fdd_expect(spec: FDDSpec, sigma: SigmaInterval, cfg: SolverConfig = SolverConfig(), levels: int = 3) -> Estimate:
    """``E[phi(B_{t_1}, ..., B_{t_n})]`` for a 1-d G-Brownian motion.

    The value on spacing ``cfg.dx`` is returned with a Richardson error
    estimate from ``levels`` grids plus a truncation estimate from a wider
    box (``levels=1`` skips both). ``n <= 4``.
    """
    if spec.d != 1:
        raise UnsupportedError("G-Brownian FDDs are implemented for d = 1")
    if spec.n > 4:
        raise UnsupportedError("at most four time points")
    phi = spec.times.sorted_phi(spec.phi)
    times = spec.times.times
    if levels <= 1:
        return Estimate(_gbm_nested(phi, times, sigma, cfg, cfg.dx), float("nan"))
    coarse = cfg.dx * 2 ** (levels - 1)
    rep = richardson_refine(lambda h: _gbm_nested(phi, times, sigma, cfg, h), coarse, levels)
    trunc = abs(_gbm_nested(phi, times, sigma, cfg, coarse, 1.5) - rep.values[0])
    return Estimate(rep.finest, rep.error_estimate + trunc, rep.extrapolated, rep, trunc)


# ---------------------------------------------------------------------------
# G-Gaussian process


def _covariance_of(entry) -> CovarianceSet:
    if isinstance(entry, CovarianceSet):
        return entry
    if isinstance(entry, GFunction):
        return entry.source
    if hasattr(entry, "covariance_set"):
        return entry.covariance_set()
    raise UnsupportedError("family member has no covariance-set representation")


def ggaussian_fdd_expect(spec: FDDSpec, fam: GFamily, cfg: SolverConfig = SolverConfig(), levels: int = 3) -> Estimate:
    """``E[phi(X_{t_1}, ..., X_{t_n})]`` for the G-Gaussian process of ``fam``.

    The sampled vector is G-normal with ``G = fam[t]``; the value is one
    G-heat solve to time 1 evaluated at the origin. ``n * d <= 2``.
    """
    if spec.n * spec.d > 2:
        raise UnsupportedError("G-Gaussian FDDs are implemented for n * d <= 2")
    key = spec.times.times
    if key not in fam:
        raise DomainError(f"family has no member for times {key}")
    cs = _covariance_of(fam[key])
    phi = spec.times.sorted_phi(spec.phi)
    if cs.dim == 1:
        q = cs.matrices[:, 0, 0]
        gn = GNormal(SigmaInterval(float(q.min()), float(q.max())))
    else:
        gn = GNormal(GFunction(cs))
    return gnormal_expect(gn, phi, cfg.replace(t_final=1.0), levels=levels)


@dataclass
class ProcessModel:
    kind: str
    sigma: SigmaInterval
    gfamily: GFamily | None = None

    def __post_init__(self):
        if self.kind not in ("g-brownian", "g-gaussian"):
            raise DomainError(f"unknown process kind {self.kind!r}")
        if self.kind == "g-gaussian":
            if self.gfamily is None:
                raise DomainError("a G-Gaussian model needs a G-function family")
            rep = validate_consistency(self.gfamily, rng=np.random.default_rng(0))
            if not rep.consistent:
                raise DomainError(f"inconsistent G-function family: {rep.violations[0]}")

    def expect(self, spec: FDDSpec, cfg: SolverConfig = SolverConfig(), levels: int = 3) -> Estimate:
        if self.kind == "g-brownian":
            return gbm_fdd_expect(spec, self.sigma, cfg, levels)
        return ggaussian_fdd_expect(spec, self.gfamily, cfg, levels)


# ---------------------------------------------------------------------------
# comparison


def _err(e: Estimate) -> float:
    return 0.0 if not np.isfinite(e.error) else e.error


@dataclass
class GapReport:
    gbm: float
    ggaussian: float
    gap: float
    combined_error: float
    certified: bool
    quadratic_gaps: list = field(default_factory=list)

    @property
    def separated(self) -> bool:
        """True when ``|gap|`` exceeds five times the combined error estimate."""
        return abs(self.gap) > 5 * self.combined_error


QUADRATIC_PROBES = ([[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]], [[1.0, -1.0], [-1.0, 2.0]])


def _quadratic(a):
    a = np.asarray(a, dtype=float)
    return lambda x1, x2: a[0, 0] * x1 * x1 + 2 * a[0, 1] * x1 * x2 + a[1, 1] * x2 * x2


def compare_gbm_vs_ggaussian(
    phi: Callable,
    times=(1.0, 2.0),
    sigma: SigmaInterval = SigmaInterval(0.25, 1.0),
    cfg: SolverConfig = SolverConfig(dx=0.05),
    certify: bool = True,
) -> GapReport:
    """Evaluate ``phi`` under both laws with the GBM-derived G-family.

    Matching second moments are certified first: every quadratic probe must
    agree within the combined error plus ``1e-8``.
    """
    tt = TimeTuple(tuple(times))
    if len(tt) != 2:
        raise DomainError("the comparison uses two time points")
    fam = GFamily.from_gbm(sigma, tt.times)
    qgaps = []
    certified = True
    if certify:
        for a in QUADRATIC_PROBES:
            q = _quadratic(a)
            e1 = gbm_fdd_expect(FDDSpec(tt, q), sigma, cfg)
            e2 = ggaussian_fdd_expect(FDDSpec(tt, q), fam, cfg)
            gap = e1.best - e2.best
            tol = _err(e1) + _err(e2) + 1e-8
            qgaps.append((a, gap, tol))
            certified &= abs(gap) < tol
    e1 = gbm_fdd_expect(FDDSpec(tt, phi), sigma, cfg)
    e2 = ggaussian_fdd_expect(FDDSpec(tt, phi), fam, cfg)
    return GapReport(e1.best, e2.best, e1.best - e2.best, _err(e1) + _err(e2), certified, qgaps)


def find_witness(
    candidates: Sequence[dict],
    times=(1.0, 2.0),
    sigma: SigmaInterval = SigmaInterval(0.25, 1.0),
    cfg: SolverConfig = SolverConfig(dx=0.05),
):
    """Search catalogue specs for one whose two FDD values are separated.

    Returns ``(spec, report)`` for the first separated candidate, or
    ``(None, reports)`` with every report when none separates.
    """
    from .testfunctions import build

    reports = []
    for spec in candidates:
        rep = compare_gbm_vs_ggaussian(build(spec), times, sigma, cfg, certify=False)
        if rep.separated:
            return spec, rep
        reports.append((spec, rep))
    return None, reports


# ---------------------------------------------------------------------------
# moment bound


@dataclass
class MomentBound:
    value: float
    bound: float
    passed: bool


def moment_bound_check(sigma: SigmaInterval, s: float, t: float) -> MomentBound:
    """``E[|B_t - B_s|^4]`` against ``C (t - s)^2`` with ``C = 3 sigma_hi^4``.

    The increment is G-normal with variances scaled by ``t - s`` and ``x^4``
    is convex, so the value is the classical fourth moment at the upper
    variance, computed by quadrature.
    """
    if not 0 <= s < t:
        raise DomainError("need 0 <= s < t")
    value = gauss_hermite_expect(lambda x: x**4, sigma.sigma_hi * math.sqrt(t - s))
    bound = 3.0 * sigma.sigma_hi_sq**2 * (t - s) ** 2
    return MomentBound(value, bound, value <= bound * (1 + 1e-12))


# ---------------------------------------------------------------------------
# consistency


@dataclass
class FddCheck:
    kind: str
    times: tuple
    other: tuple
    gap: float
    tol: float

    @property
    def ok(self) -> bool:
        return abs(self.gap) <= self.tol


@dataclass
class FddConsistencyReport:
    checks: list

    @property
    def consistent(self) -> bool:
        return all(c.ok for c in self.checks)


def validate_fdd_consistency(
    evaluate: Callable[[FDDSpec], Estimate],
    times: Sequence[float],
    phi: Callable,
    phi_sub: Callable | None = None,
    perms: Sequence[Sequence[int]] | None = None,
    floor: float = 1e-9,
) -> FddConsistencyReport:
    """Projection and permutation checks of an FDD evaluator.

    Projection: ``phi_sub`` of the first ``n-1`` coordinates, evaluated on
    ``times`` (ignoring the last coordinate) and on ``times[:-1]``.
    Permutation: for each ``pi``, ``phi`` on ``times`` against
    ``phi_pi(y) = phi(y_{pi^-1})`` on ``(t_{pi(1)}, ..., t_{pi(n)})``.
    Tolerances are the sum of both error estimates plus ``floor``.
    """
    times = tuple(float(t) for t in times)
    n = len(times)
    checks = []
    base = evaluate(FDDSpec(TimeTuple(times), phi))
    if phi_sub is not None and n > 1:
        full = evaluate(FDDSpec(TimeTuple(times), lambda *xs: phi_sub(*xs[:-1])))
        sub = evaluate(FDDSpec(TimeTuple(times[:-1]), phi_sub))
        checks.append(FddCheck("projection", times, times[:-1], full.best - sub.best, _err(full) + _err(sub) + floor))
    if perms is None:
        perms = [p for p in itertools.permutations(range(n)) if list(p) != list(range(n))]
    for p in perms:
        p = list(p)
        inv = np.argsort(p)
        tp = tuple(times[i] for i in p)

        def phi_p(*ys, inv=inv):
            return phi(*(ys[inv[i]] for i in range(n)))

        other = evaluate(FDDSpec(TimeTuple(tp), phi_p))
        checks.append(FddCheck("permutation", times, tp, base.best - other.best, _err(base) + _err(other) + floor))
    return FddConsistencyReport(checks)


# ---------------------------------------------------------------------------
# CLT for processes


@dataclass
class ProcessCltReport:
    n: list
    values: list
    reference: float
    reference_error: float
    gaps: list

    def rows(self) -> list:
        return [{"n": n, "value": v, "reference": self.reference, "gap": g} for n, v, g in zip(self.n, self.values, self.gaps)]


def process_clt_value(phi: Callable, n_summands: int, times: TimeTuple, model: IncrementModel, budget: int = 2_000_000) -> float:
    """``E[phi(Z_t)]`` with ``Z = (X^1 + ... + X^N) / sqrt(N)`` for i.i.d. lattice GBMs.

    Summand ``i`` contributes increments ``+-c sqrt(t_k - t_{k-1})`` with an
    adaptively chosen ``c``; summand ``i + 1`` is independent of summands
    ``1..i``, and within a summand later increments are independent of
    earlier ones. The state is the vector of partial sums per increment.
    """
    unit = _common_unit(model.choices)
    if unit is None:
        raise UnsupportedError("process CLT lattice needs commensurate sigma choices")
    h, ints = unit
    m = max(ints)
    n = n_summands
    k = len(times)
    if k > 2:
        raise UnsupportedError("process CLT lattice supports at most two time points")
    incs = times.increments
    scales = [h * math.sqrt(dt) / math.sqrt(n) for dt in incs]
    half = n * m
    if (2 * half + 1) ** k > budget:
        raise UnsupportedError(f"lattice needs {(2 * half + 1) ** k} states; budget {budget}")
    axes = [np.arange(-half, half + 1) * s for s in scales]
    incr = np.meshgrid(*axes, indexing="ij", sparse=True)
    levels = list(itertools.accumulate(incr))
    v = _vals(phi, *levels) if k > 1 else _vals(phi, levels[0])
    # backward over summands, and within a summand over increments last-first
    for _ in range(n):
        for ax in range(k - 1, -1, -1):
            size = v.shape[ax]
            new = size - 2 * m
            best = None
            for c in ints:
                up = np.take(v, np.arange(m + c, m + c + new), axis=ax)
                dn = np.take(v, np.arange(m - c, m - c + new), axis=ax)
                cand = 0.5 * (up + dn)
                best = cand if best is None else np.maximum(best, cand)
            v = best
    return float(v.reshape(-1)[0])


def process_clt_fdd(
    n_list: Sequence[int],
    spec: FDDSpec,
    sigma: SigmaInterval,
    cfg: SolverConfig = SolverConfig(dx=0.05),
    model: IncrementModel | None = None,
) -> ProcessCltReport:
    """Lattice values along ``n_list`` and their gap to the G-Gaussian limit."""
    if spec.n * spec.d > 2:
        raise UnsupportedError("process CLT is implemented for n * d <= 2")
    model = IncrementModel(sigma.sigma_lo, sigma.sigma_hi) if model is None else model
    phi = spec.times.sorted_phi(spec.phi)
    fam = GFamily.from_gbm(sigma, spec.times.times)
    ref = ggaussian_fdd_expect(spec, fam, cfg)
    tt = TimeTuple(spec.times.times)
    vals = [process_clt_value(phi, n, tt, model) for n in n_list]
    return ProcessCltReport(list(n_list), vals, ref.best, _err(ref), [abs(v - ref.best) for v in vals])
