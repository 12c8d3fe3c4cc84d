"""Sublinear monotone functions G on symmetric matrices.

``G(A) = 1/2 max_{Q in Theta} tr(A Q)`` with ``Theta`` a finite set of
positive semidefinite matrices, plus families ``{G_t}`` of second-moment
functions indexed by time tuples.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, DomainError

SYM_TOL = 1e-12
PSD_TOL = 1e-10


def _check_symmetric(a: np.ndarray, tol: float = SYM_TOL) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > tol * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise DomainError("matrix is not symmetric")


@dataclass(frozen=True)
class CovarianceSet:
    """Finite set of symmetric PSD ``dim x dim`` matrices."""

    dim: int
    matrices: np.ndarray
    check_psd: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        m = np.array(self.matrices, dtype=float)
        if m.ndim == 2:
            m = m[None]
        if m.ndim != 3 or m.shape[0] == 0:
            raise DimensionError("matrices must be a nonempty stack of square matrices")
        if m.shape[1:] != (self.dim, self.dim):
            raise DimensionError(f"matrices have shape {m.shape[1:]}, dim is {self.dim}")
        for q in m:
            _check_symmetric(q)
            if self.check_psd and np.linalg.eigvalsh(q).min() < -PSD_TOL:
                raise DomainError("covariance matrix is not positive semidefinite")
        m = 0.5 * (m + m.transpose(0, 2, 1))
        m.setflags(write=False)
        object.__setattr__(self, "matrices", m)

    def __len__(self):
        return self.matrices.shape[0]

    @classmethod
    def unchecked(cls, dim: int, matrices) -> "CovarianceSet":
        """Build without the PSD check; only meant for negative-control fixtures."""
        return cls(dim, matrices, check_psd=False)

    @property
    def max_eigenvalue(self) -> float:
        return float(max(np.linalg.eigvalsh(q).max() for q in self.matrices))

    def to_json(self) -> str:
        return json.dumps({"dim": self.dim, "matrices": self.matrices.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "CovarianceSet":
        doc = json.loads(text)
        if set(doc) != {"dim", "matrices"}:
            raise DomainError("expected exactly the keys 'dim' and 'matrices'")
        return cls(int(doc["dim"]), np.asarray(doc["matrices"], dtype=float))


@dataclass(frozen=True)
class SigmaInterval:
    """Variance interval ``[sigma_lo_sq, sigma_hi_sq]`` of a 1-d G-normal law."""

    sigma_lo_sq: float
    sigma_hi_sq: float

    def __post_init__(self):
        lo, hi = float(self.sigma_lo_sq), float(self.sigma_hi_sq)
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or hi < lo:
            raise DomainError(f"need 0 <= sigma_lo_sq <= sigma_hi_sq, got [{lo}, {hi}]")
        object.__setattr__(self, "sigma_lo_sq", lo)
        object.__setattr__(self, "sigma_hi_sq", hi)

    @property
    def sigma_lo(self) -> float:
        return float(np.sqrt(self.sigma_lo_sq))

    @property
    def sigma_hi(self) -> float:
        return float(np.sqrt(self.sigma_hi_sq))

    @property
    def is_classical(self) -> bool:
        return self.sigma_lo_sq == self.sigma_hi_sq

    def g(self, a):
        """Scalar G, vectorised: ``(hi a^+ - lo a^-) / 2``."""
        a = np.asarray(a, dtype=float)
        return 0.5 * (self.sigma_hi_sq * np.maximum(a, 0.0) + self.sigma_lo_sq * np.minimum(a, 0.0))

    def scaled(self, c: float) -> "SigmaInterval":
        return SigmaInterval(c * self.sigma_lo_sq, c * self.sigma_hi_sq)

    def covariance_set(self) -> CovarianceSet:
        return CovarianceSet(1, [[[self.sigma_lo_sq]], [[self.sigma_hi_sq]]])

    def to_json(self) -> str:
        return json.dumps({"sigma_lo_sq": self.sigma_lo_sq, "sigma_hi_sq": self.sigma_hi_sq})

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SigmaInterval":
        if set(doc) != {"sigma_lo_sq", "sigma_hi_sq"}:
            raise DomainError("expected exactly the keys 'sigma_lo_sq' and 'sigma_hi_sq'")
        return cls(doc["sigma_lo_sq"], doc["sigma_hi_sq"])

    @classmethod
    def from_json(cls, text: str) -> "SigmaInterval":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GFunction:
    source: CovarianceSet

    @property
    def dim(self) -> int:
        return self.source.dim

    def __call__(self, a) -> float:
        return g_eval(self, a)

    @classmethod
    def from_sigma(cls, sigma: SigmaInterval) -> "GFunction":
        return cls(sigma.covariance_set())

    def image(self, a_map) -> "GFunction":
        """G-function of ``A X``: ``B -> G(A^T B A)``, stored as ``{A Q A^T}``."""
        a_map = np.atleast_2d(np.asarray(a_map, dtype=float))
        if a_map.shape[1] != self.dim:
            raise DimensionError(f"linear map has {a_map.shape[1]} columns, G has dim {self.dim}")
        mats = np.einsum("ij,kjl,ml->kim", a_map, self.source.matrices, a_map)
        return GFunction(CovarianceSet(a_map.shape[0], mats, check_psd=self.source.check_psd))


def g_eval(g: GFunction, a) -> float:
    """Evaluate ``G(a) = 1/2 max_Q tr(a Q)``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape != (g.dim, g.dim):
        raise DimensionError(f"matrix has shape {a.shape}, G has dim {g.dim}")
    _check_symmetric(a)
    return 0.5 * float(np.einsum("ij,kji->k", a, g.source.matrices).max())


# ---------------------------------------------------------------------------
# axiom checks


@dataclass
class AxiomReport:
    trials: int
    worst_slack: dict
    witnesses: dict = field(default_factory=dict)

    def passed(self, axiom: str, tol: float = PSD_TOL) -> bool:
        return self.worst_slack[axiom] >= -tol

    @property
    def ok(self) -> bool:
        return all(self.passed(k) for k in self.worst_slack)


def _random_symmetric(rng: np.random.Generator, d: int) -> np.ndarray:
    m = rng.normal(size=(d, d)) * rng.exponential(1.0)
    return 0.5 * (m + m.T)


def _random_psd(rng: np.random.Generator, d: int) -> np.ndarray:
    m = rng.normal(size=(d, d))
    return m @ m.T * rng.exponential(1.0)


def check_g_axioms(g, trials: int, rng: np.random.Generator | None = None, dim: int | None = None) -> AxiomReport:
    """Randomised check of sub-additivity, positive homogeneity and monotonicity.

    ``g`` may be a :class:`GFunction` or any callable on symmetric matrices
    (pass ``dim`` in that case). Slacks are oriented so that a negative value
    is a violation. For every stored matrix with a negative eigenvalue ``-l``
    and eigenvector ``v`` the pair ``(-v v^T / 2, -v v^T)`` is also tried,
    which exposes the monotonicity failure directly.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    d = g.dim if dim is None else dim
    worst = {"subadditivity": np.inf, "homogeneity": np.inf, "monotonicity": np.inf}
    witnesses: dict = {}

    def record(axiom, slack, witness):
        if slack < worst[axiom]:
            worst[axiom] = slack
            witnesses[axiom] = witness

    for _ in range(trials):
        a = _random_symmetric(rng, d)
        b = _random_symmetric(rng, d)
        lam = rng.exponential(2.0)
        ga, gb = g(a), g(b)
        record("subadditivity", ga + gb - g(a + b), (a, b))
        record("homogeneity", -abs(g(lam * a) - lam * ga) / max(1.0, abs(lam * ga)), (a, lam))
        p = _random_psd(rng, d)
        record("monotonicity", g(a + p) - ga, (a + p, a))

    if isinstance(g, GFunction):
        for q in g.source.matrices:
            vals, vecs = np.linalg.eigh(q)
            for lam_q, v in zip(vals, vecs.T):
                if lam_q < -PSD_TOL:
                    low = -np.outer(v, v)
                    high = 0.5 * low
                    record("monotonicity", g(high) - g(low), (high, low))
    return AxiomReport(trials, {k: float(v) for k, v in worst.items()}, witnesses)


# ---------------------------------------------------------------------------
# second-moment families


def _check_times(times) -> tuple:
    t = tuple(float(s) for s in times)
    if not t:
        raise DomainError("empty time tuple")
    if any(s <= 0 for s in t):
        raise DomainError("times must be positive")
    if any(b <= a for a, b in zip(t, t[1:])):
        raise DomainError(f"times must be strictly increasing, got {t}")
    return t


class GbmSecondMoment:
    """``A -> 1/2 E[<A B_t, B_t>]`` for a 1-d G-Brownian motion.

    Writing ``B_{t_i}`` as a sum of independent increments, odd terms vanish
    because each increment has no mean uncertainty, and the coefficient of the
    k-th squared increment is ``c_k(A) = sum_{i,j >= k} A_ij``. Hence

        G_t(A) = 1/2 sum_k (t_k - t_{k-1}) (hi c_k^+ - lo c_k^-).
    """

    def __init__(self, sigma: SigmaInterval, times):
        self.sigma = sigma
        self.times = _check_times(times)
        self.increments = np.diff((0.0,) + self.times)
        self.dim = len(self.times)

    def coefficients(self, a) -> np.ndarray:
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape != (self.dim, self.dim):
            raise DimensionError(f"matrix has shape {a.shape}, expected {(self.dim, self.dim)}")
        _check_symmetric(a)
        # c_k = sum of the trailing (n-k) x (n-k) block
        tail = a[::-1, ::-1].cumsum(axis=0).cumsum(axis=1)[::-1, ::-1]
        return np.diag(tail).copy()

    def __call__(self, a) -> float:
        c = self.coefficients(a)
        return float(np.sum(self.increments * self.sigma.g(c)))

    def covariance_set(self) -> CovarianceSet:
        """Equivalent ``Theta``: the 2^n corner covariances of the increments."""
        n = self.dim
        ones = [np.r_[np.zeros(k), np.ones(n - k)] for k in range(n)]
        mats = []
        choices = (self.sigma.sigma_lo_sq, self.sigma.sigma_hi_sq)
        for s in itertools.product(choices, repeat=n):
            q = sum(sk * dt * np.outer(e, e) for sk, dt, e in zip(s, self.increments, ones))
            mats.append(q)
        # duplicates arise when lo == hi
        uniq = np.unique(np.round(np.array(mats), 14), axis=0)
        return CovarianceSet(n, uniq)

    def gfunction(self) -> GFunction:
        return GFunction(self.covariance_set())


def gbm_second_moment(sigma: SigmaInterval, times) -> GbmSecondMoment:
    return GbmSecondMoment(sigma, times)


class GFamily(dict):
    """Mapping from strictly increasing time tuples to G-evaluators.

    Values may be :class:`GFunction` instances or any callable on symmetric
    matrices of size ``len(key) * d``.
    """

    def __init__(self, entries: Mapping | None = None, d: int = 1):
        super().__init__()
        self.d = d
        for k, v in (entries or {}).items():
            self[k] = v

    def __setitem__(self, key, value):
        super().__setitem__(_check_times(key), value)

    def __getitem__(self, key):
        return super().__getitem__(tuple(float(s) for s in key))

    def __contains__(self, key):
        return super().__contains__(tuple(float(s) for s in key))

    def evaluate(self, times, a) -> float:
        """``G_t(A)`` for a time tuple in any order, permuting ``A`` to match."""
        t = tuple(float(s) for s in times)
        order = np.argsort(t)
        key = tuple(t[i] for i in order)
        a = np.asarray(a, dtype=float)
        idx = _block_index(order, self.d)
        # entry (i, j) of the stored order corresponds to (order[i], order[j])
        return self[key](a[np.ix_(idx, idx)])

    @classmethod
    def from_gbm(cls, sigma: SigmaInterval, times) -> "GFamily":
        """All nonempty sub-tuples of ``times`` evaluated from one G-Brownian motion."""
        t = _check_times(times)
        fam = cls(d=1)
        for r in range(1, len(t) + 1):
            for sub in itertools.combinations(t, r):
                fam[sub] = gbm_second_moment(sigma, sub)
        return fam


def _block_index(perm, d: int) -> np.ndarray:
    return np.concatenate([np.arange(p * d, (p + 1) * d) for p in perm])


@dataclass
class ConsistencyViolation:
    kind: str
    times: tuple
    other: tuple
    gap: float


@dataclass
class ConsistencyReport:
    checked: int
    violations: list

    @property
    def consistent(self) -> bool:
        return not self.violations


def validate_consistency(
    fam: GFamily,
    trials: int = 20,
    tol: float = 1e-10,
    rng: np.random.Generator | None = None,
) -> ConsistencyReport:
    """Check projection and permutation consistency on the stored tuples.

    (i) For a stored tuple ``t`` and every stored sub-tuple ``s`` obtained by
    deleting one time, ``G_t`` applied to ``A`` zero-padded at the deleted
    block must equal ``G_s(A)``. (ii) For every permutation of a stored tuple,
    :meth:`GFamily.evaluate` at the permuted times must equal ``G_t`` applied
    to the block-permuted matrix.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = fam.d
    violations = []
    checked = 0
    for t, gt in list(fam.items()):
        n = len(t)
        for j in range(n):
            s = t[:j] + t[j + 1:]
            if not s or s not in fam:
                continue
            keep = _block_index([i for i in range(n) if i != j], d)
            worst = 0.0
            for _ in range(trials):
                a = _random_symmetric(rng, (n - 1) * d)
                big = np.zeros((n * d, n * d))
                big[np.ix_(keep, keep)] = a
                worst = max(worst, abs(gt(big) - fam[s](a)))
            checked += 1
            if worst > tol:
                violations.append(ConsistencyViolation("projection", t, s, worst))
        if n > 1:
            for perm in itertools.permutations(range(n)):
                if perm == tuple(range(n)):
                    continue
                permuted_times = tuple(t[p] for p in perm)
                idx = _block_index(perm, d)
                worst = 0.0
                for _ in range(trials):
                    a = _random_symmetric(rng, n * d)
                    # a is indexed in the permuted order; sigma(A) puts it back
                    back = np.empty_like(a)
                    back[np.ix_(idx, idx)] = a
                    worst = max(worst, abs(fam.evaluate(permuted_times, a) - gt(back)))
                checked += 1
                if worst > tol:
                    violations.append(ConsistencyViolation("permutation", t, permuted_times, worst))
    return ConsistencyReport(checked, violations)
