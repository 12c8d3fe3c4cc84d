"""Randomised invariant checks across the library.

Each invariant draws random instances, computes a slack that must be
nonnegative (relative to the size of the terms involved) and counts the
instances whose slack falls below ``-SLACK_TOL``.

Negative controls are injected by name and break exactly one invariant:

``holder``
    the Holder row evaluates a lower (min-envelope) functional;
``g-monotonicity``
    the G-axiom row uses a covariance set with an indefinite member;
``mean-certain-additivity``
    the additivity row uses a variable whose mean is uncertain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .expectation import MeasureFamily, capacity, lp_norm, sublinear_expect
from .gfunction import CovarianceSet, GFunction, check_g_axioms

SLACK_TOL = 1e-10
INJECTIONS = ("holder", "g-monotonicity", "mean-certain-additivity")


@dataclass
class InvariantRow:
    invariant: str
    trials: int
    failures: int
    worst_slack: float

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass
class PropertySummary:
    seed: int
    rows: list

    @property
    def failures(self) -> int:
        return sum(r.failures for r in self.rows)

    @property
    def failed_invariants(self) -> list:
        return [r.invariant for r in self.rows if not r.passed]


def _random_family(rng: np.random.Generator, n: int | None = None, k: int | None = None) -> MeasureFamily:
    n = int(rng.integers(2, 9)) if n is None else n
    k = int(rng.integers(2, 6)) if k is None else k
    w = rng.dirichlet(np.full(n, 0.7), size=k)
    w /= w.sum(axis=1, keepdims=True)
    # exact normalisation: push the rounding residue onto the largest weight
    for row in w:
        row[np.argmax(row)] += 1.0 - row.sum()
    return MeasureFamily.from_weights(w)


def _rv(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.normal(size=n) * rng.exponential(2.0)


def _rel(slack: float, *terms) -> float:
    return slack / max(1.0, *(abs(t) for t in terms))


class _Row:
    def __init__(self, name: str):
        self.name = name
        self.trials = 0
        self.failures = 0
        self.worst = np.inf

    def add(self, slack: float) -> None:
        self.trials += 1
        self.worst = min(self.worst, slack)
        if slack < -SLACK_TOL:
            self.failures += 1

    def row(self) -> InvariantRow:
        return InvariantRow(self.name, self.trials, self.failures, float(self.worst))


def _lower(f: MeasureFamily, x) -> float:
    return float((f.weights @ np.asarray(x, dtype=float)).min())


def _mean_certain(rng: np.random.Generator, f: MeasureFamily) -> np.ndarray:
    """A variable with the same mean under every measure of ``f``."""
    diff = f.weights[1:] - f.weights[0]
    _, s, vt = np.linalg.svd(diff)
    rank = int(np.sum(s > 1e-12))
    null = vt[rank:]
    z = rng.normal(size=null.shape[0]) @ null if null.shape[0] else np.zeros(f.n_atoms)
    return z * rng.exponential(2.0) + rng.normal()


def property_suite(seed: int = 0, trials: int = 1000, inject: str | None = None) -> PropertySummary:
    """Run every invariant ``trials`` times (PDE, CLT and q-flow rows fewer).

    ``inject`` names a negative control from :data:`INJECTIONS`.
    """
    if not isinstance(trials, (int, np.integer)) or trials < 1:
        raise ConfigurationError("trials must be a positive integer")
    if inject is not None and inject not in INJECTIONS:
        raise ConfigurationError(f"unknown injection {inject!r}; known: {INJECTIONS}")
    rng = np.random.default_rng(seed)
    rows = {}

    def row(name) -> _Row:
        return rows.setdefault(name, _Row(name))

    for _ in range(trials):
        f = _random_family(rng)
        n = f.n_atoms
        x, y = _rv(rng, n), _rv(rng, n)
        ex, ey = sublinear_expect(f, x), sublinear_expect(f, y)

        # sublinear expectation axioms
        z = x - np.abs(_rv(rng, n))
        row("monotonicity").add(_rel(ex - sublinear_expect(f, z), ex))
        c = float(rng.normal() * 3)
        row("constant-preserving").add(-abs(sublinear_expect(f, np.full(n, c)) - c) / max(1.0, abs(c)))
        exy = sublinear_expect(f, x + y)
        row("sub-additivity").add(_rel(ex + ey - exy, ex, ey))
        lam = float(rng.exponential(2.0))
        row("positive-homogeneity").add(-abs(_rel(sublinear_expect(f, lam * x) - lam * ex, lam * ex)))
        row("constant-translatability").add(-abs(_rel(sublinear_expect(f, x + c) - ex - c, ex, c)))
        lam = float(rng.normal() * 2)
        rhs = max(lam, 0) * ex + max(-lam, 0) * sublinear_expect(f, -x)
        row("real-homogeneity").add(-abs(_rel(sublinear_expect(f, lam * x) - rhs, rhs)))

        # additivity with a mean-certain variable
        if inject == "mean-certain-additivity":
            yc, xs, alphas = y, np.zeros(n), (-1.0,)
        else:
            yc, xs, alphas = _mean_certain(rng, f), x, (float(rng.normal() * 2),)
        for a in alphas:
            lhs = sublinear_expect(f, xs + a * yc)
            rhs = sublinear_expect(f, xs) + a * sublinear_expect(f, yc)
            row("mean-certain-additivity").add(-abs(_rel(lhs - rhs, lhs, rhs)))

        # Lp inequalities
        # exponents kept in [1.1, 10] so |x|^q stays finite
        p = float(rng.uniform(1.1, 10.0))
        q = p / (p - 1.0)
        r = float(rng.uniform(1.0, 10.0))
        lhs = sublinear_expect(f, np.abs(x + y) ** r)
        rhs = 2 ** (r - 1) * (sublinear_expect(f, np.abs(x) ** r) + sublinear_expect(f, np.abs(y) ** r))
        row("power-inequality").add(_rel(rhs - lhs, lhs, rhs))
        if inject == "holder":
            hf = MeasureFamily.from_weights(np.eye(2))
            hx, hy = np.array([1.0, 2.0]), np.array([2.0, 1.0])
            lhs = _lower(hf, np.abs(hx * hy))
            rhs = _lower(hf, np.abs(hx) ** p) ** (1 / p) * _lower(hf, np.abs(hy) ** q) ** (1 / q)
        else:
            lhs = sublinear_expect(f, np.abs(x * y))
            rhs = lp_norm(f, x, p) * lp_norm(f, y, q)
        row("holder").add(_rel(rhs - lhs, lhs, rhs))
        lhs = lp_norm(f, x + y, p)
        rhs = lp_norm(f, x, p) + lp_norm(f, y, p)
        row("minkowski").add(_rel(rhs - lhs, lhs, rhs))
        p2 = p + float(rng.uniform(0.0, 5.0))
        a, b = lp_norm(f, x, p), lp_norm(f, x, p2)
        row("p-monotonicity").add(_rel(b - a, a, b))

        # capacity
        ea = rng.random(n) < 0.5
        eb = rng.random(n) < 0.5
        row("capacity-monotone").add(capacity(f, ea | eb) - capacity(f, ea))
        row("capacity-subadditive").add(capacity(f, ea) + capacity(f, eb) - capacity(f, ea | eb))

        # representation: the reported maximiser attains the value
        v, k = sublinear_expect(f, x, return_index=True)
        ok = 0 <= k < len(f) and abs(float(f.weights[k] @ x) - v) <= 1e-12 * max(1.0, abs(v))
        row("argmax-attained").add(0.0 if ok else -1.0)

    # G-function axioms on random covariance sets
    g_row = row("g-axioms")
    g_trials = max(1, trials // 50)
    for i in range(g_trials):
        d = int(rng.integers(1, 4))
        mats = []
        for _ in range(int(rng.integers(1, 4))):
            a = rng.normal(size=(d, d))
            mats.append(a @ a.T)
        if inject == "g-monotonicity" and i == 0:
            mats[0] = mats[0] - (np.linalg.eigvalsh(mats[0]).max() + 1.0) * np.eye(d)
            cs = CovarianceSet.unchecked(d, mats)
        else:
            cs = CovarianceSet(d, mats)
        rep = check_g_axioms(GFunction(cs), trials=50, rng=rng)
        worst = min(rep.worst_slack.values())
        g_row.trials += rep.trials
        g_row.worst = min(g_row.worst, worst)
        if not rep.ok:
            g_row.failures += 1  # one failing covariance set counts once

    _pde_rows(rng, max(1, trials // 200), row)
    _clt_rows(rng, max(1, trials // 100), row)
    _q_rows(rng, max(1, trials // 100), row)

    return PropertySummary(seed, [r.row() for r in rows.values()])


def _pde_rows(rng: np.random.Generator, trials: int, row: Callable) -> None:
    from .gfunction import SigmaInterval
    from .gheat import Grid, GridFunction, SolverConfig, solve_barenblatt

    grid = Grid((-4.0,), (4.0,), (81,))
    cfg = SolverConfig(t_final=0.5, boundary="dirichlet-from-initial")
    x = grid.axes[0]
    for _ in range(trials):
        lo = float(rng.uniform(0.0, 1.0))
        s = SigmaInterval(lo, lo + float(rng.uniform(0.0, 1.0)))
        a = np.sin(rng.normal() * x) + rng.normal() * np.abs(x)
        b = a + np.abs(rng.normal(size=x.size))
        ua = solve_barenblatt(GridFunction(grid, a), s, cfg).values
        ub = solve_barenblatt(GridFunction(grid, b), s, cfg).values
        row("pde-comparison").add(float((ub - ua).min()))
        c = float(rng.normal())
        uc = solve_barenblatt(GridFunction(grid, a + c), s, cfg).values
        row("pde-translation").add(-float(np.abs(uc - ua - c).max()) / max(1.0, abs(c)))


def _clt_rows(rng: np.random.Generator, trials: int, row: Callable) -> None:
    from .clt import IncrementModel, clt_value

    for _ in range(trials):
        lo = float(rng.integers(1, 4)) / 4
        hi = lo + float(rng.integers(1, 4)) / 4
        narrow = IncrementModel(lo, hi, ())
        narrow_in_wide = IncrementModel(lo / 2, hi, (lo / 2, lo, hi))
        b = np.sort(rng.uniform(-2, 2, 4))
        v = rng.normal(size=4)
        phi = lambda s, b=b, v=v: np.interp(s, b, v)
        n = int(rng.integers(1, 12))
        a1 = clt_value(phi, n, narrow, rounding=False).value
        a2 = clt_value(phi, n, narrow_in_wide, rounding=False).value
        row("clt-interval-monotone").add(_rel(a2 - a1, a1, a2))


def _q_rows(rng: np.random.Generator, trials: int, row: Callable) -> None:
    from .qcalc import WaveGrid, free_propagate

    grid = WaveGrid.centred(20.0, 256)
    x = grid.x
    for _ in range(trials):
        f = np.exp(-(x - rng.normal()) ** 2 / 2) * np.exp(1j * rng.normal() * x)
        g = np.exp(-((x - rng.normal()) ** 2) / 3)
        al, be = complex(*rng.normal(size=2)), complex(*rng.normal(size=2))
        t = float(rng.uniform(0.1, 2.0))
        lhs = free_propagate(grid.with_values(al * f + be * g), t).values
        rhs = al * free_propagate(grid.with_values(f), t).values + be * free_propagate(grid.with_values(g), t).values
        row("q-linearity").add(-float(np.abs(lhs - rhs).max()) / max(1.0, abs(al), abs(be)))
        w = free_propagate(grid.with_values(f), t)
        n0 = grid.with_values(f).l2_norm()
        row("q-unitarity").add(-abs(w.l2_norm() - n0) / max(1.0, n0))
