"""Adversarial-volatility lattice for the sublinear central limit theorem.

Each increment is ``+-sigma`` with probability 1/2, where ``sigma`` is picked
from a finite grid inside ``[sigma_lo, sigma_hi]`` by an adversary who sees the
whole history. ``E[phi(S_n / sqrt(n))]`` is then a backward value iteration.

Three evaluation modes exist:

* ``lattice``: all choices are integer multiples of a common unit, so the
  partial sums live on a recombining 1-d lattice (exact);
* ``counts``: incommensurate choices; the state is the vector of net step
  counts per choice (exact, but the state count grows like ``k^c``);
* ``rounded``: the state is a uniform grid of spacing
  ``min(sigma_lo, min gap) / (4 sqrt(n))`` and off-grid successors are
  linearly interpolated. The interpolation error is reported.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, UnsupportedError
from .gfunction import SigmaInterval

DEFAULT_BUDGET = 2_000_000
BRUTE_BUDGET = 2**24


@dataclass(frozen=True)
class IncrementModel:
    """Two-point increments ``+-sigma`` with ``sigma`` from ``choices``.

    ``choices`` are standard deviations, sorted, and must include both
    ``sigma_lo`` and ``sigma_hi``.
    """

    sigma_lo: float
    sigma_hi: float
    choices: tuple = ()

    def __post_init__(self):
        lo, hi = float(self.sigma_lo), float(self.sigma_hi)
        if not 0 <= lo <= hi:
            raise DomainError(f"need 0 <= sigma_lo <= sigma_hi, got {lo}, {hi}")
        ch = tuple(sorted({float(c) for c in (self.choices or (lo, hi))} | {lo, hi}))
        if ch[0] < lo - 1e-15 or ch[-1] > hi + 1e-15:
            raise DomainError("sigma choices must lie inside [sigma_lo, sigma_hi]")
        object.__setattr__(self, "sigma_lo", lo)
        object.__setattr__(self, "sigma_hi", hi)
        object.__setattr__(self, "choices", ch)

    @classmethod
    def from_interval(cls, sigma: SigmaInterval, n_choices: int = 2) -> "IncrementModel":
        if n_choices < 2 and sigma.sigma_lo != sigma.sigma_hi:
            raise DomainError("need at least the two endpoints")
        ch = np.linspace(sigma.sigma_lo, sigma.sigma_hi, max(n_choices, 1))
        return cls(sigma.sigma_lo, sigma.sigma_hi, tuple(ch))

    @property
    def interval(self) -> SigmaInterval:
        return SigmaInterval(self.sigma_lo**2, self.sigma_hi**2)

    def to_dict(self) -> dict:
        return {"sigma_lo": self.sigma_lo, "sigma_hi": self.sigma_hi, "choices": list(self.choices)}


@dataclass
class CltResult:
    value: float
    mode: str
    states: int
    rounding_error: float = 0.0
    policy: list | None = field(default=None, repr=False)

    def __float__(self):
        return float(self.value)


def _common_unit(choices: Sequence[float], max_den: int = 1000, tol: float = 1e-12):
    """Return ``(h, ints)`` with ``choices == h * ints`` or None."""
    positive = [c for c in choices if c > 0]
    if not positive:
        return 1.0, [0] * len(choices)
    base = positive[0]
    fracs = []
    for c in choices:
        f = Fraction(c / base).limit_denominator(max_den)
        if abs(float(f) * base - c) > tol * max(1.0, c):
            return None
        fracs.append(f)
    den = math.lcm(*(f.denominator for f in fracs))
    ints = [int(f * den) for f in fracs]
    g = math.gcd(*ints)
    ints = [i // g for i in ints]
    h = base * g / den
    return h, ints


def _vec(phi: Callable, s: np.ndarray) -> np.ndarray:
    return np.asarray(phi(s), dtype=float) * np.ones_like(s)


def clt_value(
    phi: Callable,
    n: int,
    model: IncrementModel,
    rounding: bool | None = None,
    budget: int = DEFAULT_BUDGET,
    return_policy: bool = False,
) -> CltResult:
    """``E[phi(S_n / sqrt(n))]`` under the adaptive adversary.

    ``rounding=None`` picks an exact mode when one fits in ``budget`` states
    and falls back to the rounded grid; ``False`` forbids rounding (an
    oversized instance raises :class:`UnsupportedError`); ``True`` forces it.
    With ``return_policy`` the maximising choice index per layer and state is
    returned (exact lattice mode only).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if rounding is not True:
        unit = _common_unit(model.choices)
        if unit is not None:
            h, ints = unit
            m = max(ints)
            if 2 * n * m + 1 <= budget:
                return _lattice(phi, n, h, ints, return_policy)
        else:
            states = _count_states(n, len(model.choices))
            if states <= budget:
                return _counts(phi, n, model.choices)
        if rounding is False:
            raise UnsupportedError(
                f"exact lattice for n={n} exceeds the budget of {budget} states; "
                "use fewer sigma choices or allow rounding"
            )
    return _rounded(phi, n, model, budget)


def _lattice(phi, n, h, ints, return_policy):
    m = max(ints)
    scale = h / math.sqrt(n)
    if m == 0:
        return CltResult(float(_vec(phi, np.zeros(1))[0]), "lattice", 1)
    size = n * m
    v = _vec(phi, np.arange(-size, size + 1) * scale)
    policy = [] if return_policy else None
    for k in range(n - 1, -1, -1):
        half = k * m
        # successors of state j (index j + size_{k+1}) at +-c
        idx = np.arange(-half, half + 1) + (k + 1) * m
        cand = np.stack([0.5 * (v[idx + c] + v[idx - c]) for c in ints])
        best = cand.argmax(axis=0)
        if policy is not None:
            policy.append(best)
        v = cand[best, np.arange(cand.shape[1])]
    res = CltResult(float(v[0]), "lattice", 2 * size + 1)
    if policy is not None:
        res.policy = policy[::-1]
    return res


def _count_states(n: int, c: int) -> int:
    return (2 * n + 1) ** c


def _counts(phi, n, choices):
    c = len(choices)
    sq = math.sqrt(n)
    # state: net signed count per choice, each in [-n, n]; unreachable states
    # are harmless because only reachable ones feed V_0
    axes = [np.arange(-n, n + 1)] * c
    grids = np.meshgrid(*axes, indexing="ij")
    s = sum(ch * g for ch, g in zip(choices, grids)) / sq
    v = _vec(phi, s)
    for _ in range(n):
        best = None
        for j in range(c):
            up = np.roll(v, -1, axis=j)
            dn = np.roll(v, 1, axis=j)
            cand = 0.5 * (up + dn)
            best = cand if best is None else np.maximum(best, cand)
        # entries next to the box edge pick up wrapped values; they are never
        # reached from the origin within the remaining steps
        v = best
    centre = tuple([n] * c)
    return CltResult(float(v[centre]), "counts", int(v.size))


def _rounded(phi, n, model, budget):
    sq = math.sqrt(n)
    gaps = np.diff(model.choices)
    g = min([model.sigma_lo] + [d for d in gaps if d > 0]) if model.sigma_lo > 0 else min(
        [d for d in gaps if d > 0] + [model.sigma_hi]
    )
    delta = g / (4.0 * sq)
    reach = model.sigma_hi * n / sq
    half = math.ceil(reach / delta) + 1
    if 2 * half + 1 > budget:
        raise UnsupportedError(f"rounded lattice needs {2 * half + 1} states; budget {budget}")
    x = np.arange(-half, half + 1) * delta
    v = _vec(phi, x)
    # second-order interpolation error bound via the discrete second difference
    d2 = np.abs(np.diff(v, 2)).max(initial=0.0)
    for _ in range(n):
        best = None
        for c in model.choices:
            step = c / sq
            cand = 0.5 * (np.interp(x + step, x, v) + np.interp(x - step, x, v))
            best = cand if best is None else np.maximum(best, cand)
        v = best
    err = n * d2 / 8.0
    return CltResult(float(v[half]), "rounded", 2 * half + 1, err)


def clt_static_value(phi: Callable, n: int, model: IncrementModel) -> float:
    """Best constant-sigma value: a lower bound for :func:`clt_value`."""
    k = np.arange(n + 1)
    logw = np.array([math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1) for i in k]) - n * math.log(2)
    w = np.exp(logw)
    best = -np.inf
    for c in model.choices:
        s = c * (2 * k - n) / math.sqrt(n)
        best = max(best, float(w @ _vec(phi, s)))
    return best


def clt_brute_force(phi: Callable, n: int, model: IncrementModel, budget: int = BRUTE_BUDGET) -> float:
    """Exhaustive nested evaluation over the full history tree.

    Every node of the tree of ``(choice, sign)`` histories is kept, so the
    adversary may use the complete path; there are ``(2c)^n`` leaves.
    """
    c = len(model.choices)
    if n < 1:
        raise DomainError("n must be >= 1")
    if (2 * c) ** n > budget:
        raise UnsupportedError(f"history tree has {(2 * c) ** n} leaves; budget {budget}")
    steps = np.array([[sg * ch for sg in (1.0, -1.0)] for ch in model.choices]).ravel() / math.sqrt(n)
    s = np.zeros(1)
    for _ in range(n):
        s = (s[:, None] + steps[None, :]).ravel()
    v = _vec(phi, s)
    for _ in range(n):
        v = v.reshape(-1, c, 2).mean(axis=-1).max(axis=-1)
    return float(v[0])


@dataclass
class ConvergenceReport:
    n: list
    values: list
    reference: float
    reference_error: float
    gaps: list
    rate: float

    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.gaps, self.gaps[1:]))

    def rows(self) -> list:
        return [
            {"n": n, "value": v, "reference": self.reference, "gap": g}
            for n, v, g in zip(self.n, self.values, self.gaps)
        ]


def clt_convergence(phi: Callable, n_list: Sequence[int], model: IncrementModel, cfg=None) -> ConvergenceReport:
    """Gap between the lattice value and the G-normal limit along ``n_list``.

    The reference is the Richardson-extrapolated G-heat value; ``rate`` is the
    least-squares slope of ``log gap`` against ``log n``.
    """
    from .gheat import SolverConfig
    from .gnormal import GNormal, gnormal_expect

    cfg = SolverConfig() if cfg is None else cfg
    ref = gnormal_expect(GNormal(model.interval), phi, cfg)
    vals = [clt_value(phi, n, model).value for n in n_list]
    gaps = [abs(v - ref.best) for v in vals]
    rate = float("nan")
    pos = [(n, g) for n, g in zip(n_list, gaps) if g > 0]
    if len(pos) >= 2:
        rate = float(np.polyfit(np.log([p[0] for p in pos]), np.log([p[1] for p in pos]), 1)[0])
    return ConvergenceReport(list(n_list), vals, ref.best, ref.error, gaps, rate)
