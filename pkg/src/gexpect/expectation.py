"""Sublinear expectations over finite sample spaces.

A sublinear expectation is represented by an explicit, finite family of
discrete probability measures on a shared sample space; every evaluation is
a finite maximisation over that family.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class SampleSpace:
    atoms: tuple

    def __post_init__(self):
        atoms = tuple(self.atoms)
        if len(atoms) < 1:
            raise DomainError("a sample space needs at least one atom")
        if len(set(atoms)) != len(atoms):
            raise DomainError("atoms must be distinct")
        object.__setattr__(self, "atoms", atoms)

    def __len__(self):
        return len(self.atoms)

    @classmethod
    def of_size(cls, n: int) -> "SampleSpace":
        return cls(tuple(range(n)))

    def values(self) -> np.ndarray:
        """Atoms as a float array (identity random variable)."""
        try:
            return np.asarray(self.atoms, dtype=float)
        except (TypeError, ValueError) as exc:
            raise DomainError("atoms are not numeric") from exc


class DiscreteMeasure:
    """Probability weights on the atoms of a sample space."""

    __slots__ = ("weights",)

    def __init__(self, weights: Sequence[float]):
        w = np.array(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise DimensionError("weights must be a nonempty vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DomainError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        self.weights = w

    def __len__(self):
        return self.weights.size

    def __repr__(self):
        return f"DiscreteMeasure({self.weights.tolist()})"

    @classmethod
    def point_mass(cls, n: int, k: int) -> "DiscreteMeasure":
        w = np.zeros(n)
        w[k] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, n: int) -> "DiscreteMeasure":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class MeasureFamily:
    """Finite family {P_1, ..., P_k} representing a sublinear expectation.

    The weights are kept as a ``(k, n)`` array so that evaluation is a single
    matrix-vector product followed by a max.
    """

    space: SampleSpace
    measures: tuple
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        measures = tuple(
            m if isinstance(m, DiscreteMeasure) else DiscreteMeasure(m)
            for m in self.measures
        )
        if not measures:
            raise DomainError("a measure family must be nonempty")
        n = len(self.space)
        for m in measures:
            if len(m) != n:
                raise DimensionError(
                    f"measure has {len(m)} weights, sample space has {n} atoms"
                )
        object.__setattr__(self, "measures", measures)
        w = np.vstack([m.weights for m in measures])
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.measures)

    @property
    def n_atoms(self) -> int:
        return len(self.space)

    @classmethod
    def from_weights(cls, weights, atoms=None) -> "MeasureFamily":
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        space = SampleSpace(tuple(atoms) if atoms is not None else tuple(range(w.shape[1])))
        return cls(space, tuple(DiscreteMeasure(row) for row in w))

    def to_json(self) -> str:
        doc = {"atoms": self.n_atoms, "measures": self.weights.tolist()}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MeasureFamily":
        doc = json.loads(text)
        if set(doc) != {"atoms", "measures"}:
            raise DomainError("expected exactly the keys 'atoms' and 'measures'")
        n = int(doc["atoms"])
        space = SampleSpace.of_size(n)
        return cls(space, tuple(DiscreteMeasure(m) for m in doc["measures"]))


def _as_variable(x, n: int, dtype=float) -> np.ndarray:
    v = np.asarray(x, dtype=dtype)
    if v.ndim != 1 or v.size != n:
        raise DimensionError(f"random variable has shape {v.shape}, expected ({n},)")
    if not np.all(np.isfinite(v)):
        raise DomainError("random variable values must be finite")
    return v


def _as_event(a, n: int) -> np.ndarray:
    e = np.asarray(a, dtype=bool)
    if e.ndim != 1 or e.size != n:
        raise DimensionError(f"event has shape {e.shape}, expected ({n},)")
    return e


def linear_expect(m: DiscreteMeasure, x) -> float:
    """Expectation of ``x`` under the single measure ``m``."""
    is_complex = np.iscomplexobj(x)
    v = _as_variable(x, len(m), dtype=complex if is_complex else float)
    r = m.weights @ v
    return complex(r) if is_complex else float(r)


def sublinear_expect(f: MeasureFamily, x, return_index: bool = False):
    """Upper expectation ``max_k E_k[x]`` over the family.

    With ``return_index=True`` the index of the maximising measure is returned
    as well; ties go to the lowest index.
    """
    if len(f) == 0:
        raise DomainError("empty family")
    v = _as_variable(x, f.n_atoms)
    values = f.weights @ v
    k = int(np.argmax(values))
    if return_index:
        return float(values[k]), k
    return float(values[k])


def lower_expect(f: MeasureFamily, x) -> float:
    """Conjugate lower expectation ``-E[-x]``."""
    return -sublinear_expect(f, -np.asarray(x, dtype=float))


def independent_pair_expect(
    fx: MeasureFamily,
    fy: MeasureFamily,
    phi: Callable[[float, float], float],
    x=None,
    y=None,
) -> float:
    """E[phi(X, Y)] with Y independent of X.

    The inner maximisation runs over ``fy`` with x frozen, the outer one over
    ``fx``. Swapping the arguments generally changes the value. ``x`` and ``y``
    default to the atoms of the respective sample spaces.
    """
    xv = fx.space.values() if x is None else _as_variable(x, fx.n_atoms)
    yv = fy.space.values() if y is None else _as_variable(y, fy.n_atoms)
    table = np.array([[phi(a, b) for b in yv] for a in xv], dtype=float)
    if not np.all(np.isfinite(table)):
        raise DomainError("phi is not finite on all value pairs")
    inner = (fy.weights @ table.T).max(axis=0)
    return sublinear_expect(fx, inner)


def lp_norm(f: MeasureFamily, x, p: float) -> float:
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    v = _as_variable(x, f.n_atoms)
    return sublinear_expect(f, np.abs(v) ** p) ** (1.0 / p)


@dataclass
class DominationReport:
    dominated: bool
    exact: bool
    worst_slack: float
    counterexample: tuple | None = None

    def __bool__(self):
        return self.dominated


def _contains(f2: MeasureFamily, m: np.ndarray) -> bool:
    return bool(np.any(np.all(np.abs(f2.weights - m) <= WEIGHT_TOL, axis=1)))


def is_dominated(
    f1: MeasureFamily,
    f2: MeasureFamily,
    trials: int = 1000,
    rng: np.random.Generator | None = None,
) -> DominationReport:
    """Test whether E1[X] - E1[Y] <= E2[X - Y] for all X, Y.

    If every measure of ``f1`` belongs to ``f2`` the answer is exact. Otherwise
    ``trials`` random pairs are tried and the first violating pair, if any, is
    returned in the report.
    """
    if f1.n_atoms != f2.n_atoms:
        raise DimensionError("families live on different sample spaces")
    if all(_contains(f2, m) for m in f1.weights):
        return DominationReport(True, True, 0.0)
    rng = np.random.default_rng() if rng is None else rng
    n = f1.n_atoms
    worst = np.inf
    found = None
    for _ in range(trials):
        x = rng.normal(size=n) * rng.exponential(2.0)
        y = rng.normal(size=n) * rng.exponential(2.0)
        slack = sublinear_expect(f2, x - y) - (
            sublinear_expect(f1, x) - sublinear_expect(f1, y)
        )
        if slack < worst:
            worst = slack
            if slack < -WEIGHT_TOL and found is None:
                found = (x, y)
    # targeted pairs: indicator of each atom against zero
    for k in range(n):
        for sign in (1.0, -1.0):
            x = np.zeros(n)
            x[k] = sign
            slack = sublinear_expect(f2, x) - sublinear_expect(f1, x)
            if slack < worst:
                worst = slack
                if slack < -WEIGHT_TOL and found is None:
                    found = (x, np.zeros(n))
    return DominationReport(found is None, False, float(worst), found)


def capacity(f: MeasureFamily, a) -> float:
    """Upper probability ``max_k P_k(A)`` of the event ``a``."""
    e = _as_event(a, f.n_atoms)
    return float((f.weights[:, e].sum(axis=1)).max())
