"""Declarative test-function catalogue."""

import numpy as np
import pytest

from gexpect.errors import DomainError
from gexpect.testfunctions import build, catalogue_names, from_callable

X = np.linspace(-3, 3, 61)


@pytest.mark.parametrize(
    "spec, expected",
    [
        ({"name": "power", "p": 4}, X**4),
        ({"name": "abs"}, np.abs(X)),
        ({"name": "call", "strike": 0.5}, np.maximum(X - 0.5, 0)),
        ({"name": "put", "strike": -0.2}, np.maximum(-0.2 - X, 0)),
        ({"name": "capped-abs", "cap": 1.0}, np.minimum(np.abs(X), 1.0)),
        ({"name": "constant", "value": 3.0}, np.full_like(X, 3.0)),
        ({"name": "linear", "slope": 2.0, "intercept": -1.0}, 2 * X - 1),
        ({"name": "sin", "frequency": 2.0}, np.sin(2 * X)),
        ({"name": "gaussian", "width": 0.5}, np.exp(-(X**2) / 0.5)),
        ({"name": "abs", "scale": -2.0, "shift": 1.0}, -2 * np.abs(X - 1)),
    ],
)
def test_scalar_values(spec, expected):
    np.testing.assert_allclose(build(spec)(X), expected, atol=1e-15)


def test_piecewise_linear_extends_slopes():
    f = build({"name": "piecewise-linear", "breakpoints": [-1, 0, 1], "values": [1, 0, 2]})
    np.testing.assert_allclose(f(np.array([-2.0, -0.5, 0.5, 3.0])), [2.0, 0.5, 1.0, 6.0])
    assert f.convexity == "convex"
    assert f.kinks == (-1.0, 0.0, 1.0)


@pytest.mark.parametrize(
    "spec, conv",
    [
        ({"name": "power", "p": 2}, "convex"),
        ({"name": "power", "p": 3}, None),
        ({"name": "abs", "scale": -1}, "concave"),
        ({"name": "call"}, "convex"),
        ({"name": "linear"}, "affine"),
        ({"name": "sin"}, None),
    ],
)
def test_convexity_tags(spec, conv):
    assert build(spec).convexity == conv


def test_negation_flips():
    f = build({"name": "call", "strike": 0.3})
    g = -f
    assert g.convexity == "concave" and g.kinks == (0.3,)
    np.testing.assert_array_equal(g(X), -f(X))
    assert g.spec["scale"] == -1.0


def test_shifted_kinks():
    assert build({"name": "capped-abs", "cap": 2.0, "shift": 0.5}).kinks == (-1.5, 0.5, 2.5)


def test_multi_argument_entries():
    x1, x2 = np.array([1.0, -2.0]), np.array([0.5, 3.0])
    q = build({"name": "quadratic-form", "matrix": [[1, 2], [0, 1]]})
    np.testing.assert_allclose(q(x1, x2), x1**2 + 2 * x1 * x2 + x2**2)
    np.testing.assert_allclose(build({"name": "product"})(x1, x2), x1 * x2)
    p = build({"name": "polynomial", "terms": [[1, [2, 1]], [-1, [3, 0]]]})
    np.testing.assert_allclose(p(x1, x2), x1**2 * (x2 - x1))
    w = build({"name": "witness"})
    np.testing.assert_allclose(w(x1, x2), [0.5, -2.0])
    c = build({"name": "coordinate", "index": 1, "arity": 2, "inner": {"name": "abs"}})
    np.testing.assert_allclose(c(x1, x2), np.abs(x2))
    lc = build({"name": "linear-combo", "weights": [-1, 1], "inner": {"name": "power", "p": 4}})
    np.testing.assert_allclose(lc(x1, x2), (x2 - x1) ** 4)
    s = build({"name": "separable-sum", "terms": [{"name": "abs"}, {"name": "power", "p": 2}]})
    np.testing.assert_allclose(s(x1, x2), np.abs(x1) + x2**2)


@pytest.mark.parametrize(
    "spec",
    [
        {"name": "nope"},
        {"name": "abs", "strike": 1},
        {"name": "power", "p": -1},
        {"name": "piecewise-linear", "breakpoints": [1, 0], "values": [0, 1]},
        {"name": "polynomial", "terms": [[1, [1, 2]], [1, [1]]]},
        {"name": "coordinate", "index": 2, "arity": 2, "inner": {"name": "abs"}},
        {"value": 1},
    ],
)
def test_rejects(spec):
    with pytest.raises(DomainError):
        build(spec)


def test_arity_checked():
    with pytest.raises(DomainError):
        build({"name": "abs"})(1.0, 2.0)


def test_catalogue_and_callable():
    assert {"abs", "call", "witness", "polynomial"} <= set(catalogue_names())
    f = from_callable(np.cos, decaying=False)
    assert f.name == "python" and f(0.0) == 1.0
