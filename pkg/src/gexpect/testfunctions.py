"""Named catalogue of test functions.

Configuration files describe test functions declaratively, e.g.
``{"name": "call", "strike": 0.5}``; no executable code is ever read from a
config. Every entry accepts the optional keys ``scale`` (default 1) and
``shift`` (default 0) meaning ``x -> scale * f(x - shift)`` for scalar
entries.
"""

from __future__ import annotations

import json
from typing import Callable

import numpy as np

from .errors import DomainError


class TestFunction:
    """Vectorised callable with its catalogue spec attached."""

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, fn: Callable, arity: int, spec: dict, decaying: bool = False,
                 convexity: str | None = None, kinks: tuple = ()):
        self.fn = fn
        self.arity = arity
        self.spec = spec
        self.decaying = decaying
        # "convex", "concave", "affine" or None when unknown
        self.convexity = convexity
        # points where a scalar function is not smooth (used by quadrature)
        self.kinks = tuple(kinks)

    def __call__(self, *xs):
        if len(xs) != self.arity:
            raise DomainError(f"{self.name} takes {self.arity} arguments, got {len(xs)}")
        return self.fn(*xs)

    @property
    def name(self) -> str:
        return self.spec["name"]

    def __repr__(self):
        return f"TestFunction({json.dumps(self.spec, sort_keys=True)})"

    def __neg__(self) -> "TestFunction":
        spec = dict(self.spec)
        spec["scale"] = -spec.get("scale", 1.0)
        flip = {"convex": "concave", "concave": "convex"}
        return TestFunction(lambda *xs: -self.fn(*xs), self.arity, spec, self.decaying,
                            flip.get(self.convexity, self.convexity), self.kinks)


def _power(p: int):
    return lambda x: x**p


def _smooth_step(a: float, width: float):
    return lambda x: 0.5 * (1.0 + np.tanh((x - a) / width))


def _piecewise_linear(breaks, values):
    b = np.asarray(breaks, dtype=float)
    v = np.asarray(values, dtype=float)
    if b.ndim != 1 or b.size < 2 or b.size != v.size or np.any(np.diff(b) <= 0):
        raise DomainError("piecewise-linear needs >= 2 strictly increasing breakpoints with matching values")
    s_left = (v[1] - v[0]) / (b[1] - b[0])
    s_right = (v[-1] - v[-2]) / (b[-1] - b[-2])

    def f(x):
        x = np.asarray(x, dtype=float)
        y = np.interp(x, b, v)
        y = np.where(x < b[0], v[0] + s_left * (x - b[0]), y)
        return np.where(x > b[-1], v[-1] + s_right * (x - b[-1]), y)

    slopes = np.diff(v) / np.diff(b)
    conv = None
    if np.all(np.diff(slopes) >= 0):
        conv = "convex"
    elif np.all(np.diff(slopes) <= 0):
        conv = "concave"
    return f, conv


_SCALAR = {
    "power", "abs", "call", "put", "indicator-smoothed", "piecewise-linear",
    "constant", "linear", "capped-abs", "gaussian", "wavepacket", "sin",
}
_MULTI = {"linear-combo", "coordinate", "quadratic-form", "product", "witness", "separable-sum", "polynomial"}


def catalogue_names() -> list:
    return sorted(_SCALAR | _MULTI)


def build(spec: dict) -> TestFunction:
    """Build a :class:`TestFunction` from its catalogue description."""
    if not isinstance(spec, dict) or "name" not in spec:
        raise DomainError("test function spec must be an object with a 'name'")
    name = spec["name"]
    if name in _SCALAR:
        return _build_scalar(spec)
    if name in _MULTI:
        return _build_multi(spec)
    raise DomainError(f"unknown test function {name!r}; known: {catalogue_names()}")


def _allowed(spec: dict, keys: set) -> None:
    extra = set(spec) - keys - {"name", "scale", "shift"}
    if extra:
        raise DomainError(f"unexpected keys for {spec['name']!r}: {sorted(extra)}")


def _build_scalar(spec: dict) -> TestFunction:
    name = spec["name"]
    scale = float(spec.get("scale", 1.0))
    shift = float(spec.get("shift", 0.0))
    decaying = False
    conv = None
    kinks = ()
    if name == "power":
        _allowed(spec, {"p"})
        p = int(spec.get("p", 2))
        if p < 0:
            raise DomainError("power needs p >= 0")
        f = _power(p)
        conv = "affine" if p <= 1 else ("convex" if p % 2 == 0 else None)
    elif name == "abs":
        _allowed(spec, {"p"})
        p = float(spec.get("p", 1.0))
        if p < 1:
            raise DomainError("abs needs p >= 1")
        f = lambda x, p=p: np.abs(x) ** p
        conv = "convex"
        kinks = (0.0,)
    elif name == "call":
        _allowed(spec, {"strike"})
        k = float(spec.get("strike", 0.0))
        f = lambda x, k=k: np.maximum(x - k, 0.0)
        conv = "convex"
        kinks = (k,)
    elif name == "put":
        _allowed(spec, {"strike"})
        k = float(spec.get("strike", 0.0))
        f = lambda x, k=k: np.maximum(k - x, 0.0)
        conv = "convex"
        kinks = (k,)
    elif name == "indicator-smoothed":
        _allowed(spec, {"level", "width"})
        f = _smooth_step(float(spec.get("level", 0.0)), float(spec.get("width", 0.1)))
    elif name == "piecewise-linear":
        _allowed(spec, {"breakpoints", "values"})
        f, conv = _piecewise_linear(spec["breakpoints"], spec["values"])
        kinks = tuple(float(b) for b in spec["breakpoints"])
    elif name == "constant":
        _allowed(spec, {"value"})
        c = float(spec.get("value", 1.0))
        f = lambda x, c=c: np.full(np.shape(x), c)
        conv = "affine"
    elif name == "linear":
        _allowed(spec, {"slope", "intercept"})
        a, b = float(spec.get("slope", 1.0)), float(spec.get("intercept", 0.0))
        f = lambda x, a=a, b=b: a * np.asarray(x, dtype=float) + b
        conv = "affine"
    elif name == "capped-abs":
        _allowed(spec, {"cap"})
        c = float(spec.get("cap", 1.0))
        f = lambda x, c=c: np.minimum(np.abs(x), c)
        kinks = (-c, 0.0, c)
    elif name == "sin":
        _allowed(spec, {"frequency"})
        k = float(spec.get("frequency", 1.0))
        f = lambda x, k=k: np.sin(k * np.asarray(x, dtype=float))
    elif name == "gaussian":
        _allowed(spec, {"width"})
        w = float(spec.get("width", 1.0))
        f = lambda x, w=w: np.exp(-np.asarray(x, dtype=float) ** 2 / (2 * w * w))
        decaying = True
    else:  # wavepacket
        _allowed(spec, {"width", "momentum"})
        w = float(spec.get("width", 1.0))
        k = float(spec.get("momentum", 0.0))
        f = lambda x, w=w, k=k: np.exp(-np.asarray(x, dtype=float) ** 2 / (2 * w * w) + 1j * k * np.asarray(x, dtype=float))
        decaying = True
    if scale < 0:
        conv = {"convex": "concave", "concave": "convex"}.get(conv, conv)
    if scale == 0:
        conv = "affine"

    def fn(x, f=f):
        return scale * f(np.asarray(x, dtype=float) - shift)

    return TestFunction(fn, 1, dict(spec), decaying, conv, tuple(k + shift for k in kinks))


def _build_multi(spec: dict) -> TestFunction:
    name = spec["name"]
    scale = float(spec.get("scale", 1.0))
    if name == "linear-combo":
        _allowed(spec, {"weights", "inner"})
        w = [float(v) for v in spec["weights"]]
        inner = build(spec["inner"])
        fn = lambda *xs: inner(sum(wi * np.asarray(x, dtype=float) for wi, x in zip(w, xs)))
        conv = inner.convexity if scale > 0 else (-inner).convexity
        return TestFunction(lambda *xs: scale * fn(*xs), len(w), dict(spec), False, conv)
    if name == "coordinate":
        _allowed(spec, {"index", "arity", "inner"})
        i, n = int(spec["index"]), int(spec["arity"])
        if not 0 <= i < n:
            raise DomainError("coordinate index out of range")
        inner = build(spec["inner"])
        return TestFunction(lambda *xs: scale * inner(xs[i]), n, dict(spec), False, inner.convexity)
    if name == "quadratic-form":
        _allowed(spec, {"matrix"})
        a = np.asarray(spec["matrix"], dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DomainError("quadratic-form needs a square matrix")
        a = 0.5 * (a + a.T)
        n = a.shape[0]

        def q(*xs):
            xs = [np.asarray(x, dtype=float) for x in xs]
            return scale * sum(a[i, j] * xs[i] * xs[j] for i in range(n) for j in range(n))

        return TestFunction(q, n, dict(spec))
    if name == "product":
        _allowed(spec, {"arity"})
        n = int(spec.get("arity", 2))

        def prod(*xs):
            out = scale * np.ones(np.broadcast(*xs).shape)
            for x in xs:
                out = out * x
            return out

        return TestFunction(prod, n, dict(spec))
    if name == "polynomial":
        # {"terms": [[coefficient, [p_1, ..., p_n]], ...]} means sum c x_1^p_1 ... x_n^p_n
        _allowed(spec, {"terms"})
        terms = [(float(c), [int(p) for p in ps]) for c, ps in spec["terms"]]
        if not terms or len({len(ps) for _, ps in terms}) != 1 or any(p < 0 for _, ps in terms for p in ps):
            raise DomainError("polynomial needs terms with equal-length nonnegative exponent lists")
        n = len(terms[0][1])

        def poly(*xs):
            xs = [np.asarray(x, dtype=float) for x in xs]
            out = 0.0
            for c, ps in terms:
                mono = c
                for x, p in zip(xs, ps):
                    mono = mono * x**p
                out = out + mono
            return scale * out

        return TestFunction(poly, n, dict(spec))
    if name == "separable-sum":
        _allowed(spec, {"terms"})
        terms = [build(t) for t in spec["terms"]]
        return TestFunction(lambda *xs: scale * sum(t(x) for t, x in zip(terms, xs)), len(terms), dict(spec))
    # witness: |x2 - x1| on {x1 > 0}, -|x1| on {x1 <= 0}
    _allowed(spec, set())

    def witness(x1, x2):
        x1 = np.asarray(x1, dtype=float)
        return scale * np.where(x1 > 0, np.abs(x2 - x1), -np.abs(x1))

    return TestFunction(witness, 2, dict(spec))


def from_callable(fn: Callable, arity: int = 1, name: str = "python", **flags) -> TestFunction:
    """Wrap an arbitrary vectorised Python callable (library use only)."""
    return TestFunction(fn, arity, {"name": name}, **flags)
