import math

import numpy as np
import pytest

from mckean.kernels import Kernel


def test_eval_reference_values():
    # standard normal density at 0, its 1/eps scaling, and the 2-d height
    assert Kernel(1, 1.0).eval(np.zeros(1)) == pytest.approx(0.3989423, abs=5e-8)
    assert Kernel(1, 0.5).eval(np.zeros(1)) == pytest.approx(0.7978846, abs=5e-8)
    assert Kernel(2, 1.0).eval(np.zeros(2)) == pytest.approx(0.1591549, abs=5e-8)


def test_eval_matches_closed_form_on_batch():
    k = Kernel(1, 0.7)
    xs = np.linspace(-3, 3, 101)[:, None]
    expected = np.exp(-xs[:, 0] ** 2 / (2 * 0.49)) / (0.7 * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(k.eval(xs), expected, rtol=1e-14)


def test_sup_bound():
    assert Kernel(1, 1.0).sup_bound() == pytest.approx(0.3989423, abs=5e-8)
    assert Kernel(1, 0.5).sup_bound() == pytest.approx(0.7978846, abs=5e-8)
    # sup bound is attained at the origin
    k = Kernel(3, 0.9)
    assert k.eval(np.zeros(3)) == k.sup_bound()


def test_lipschitz_bound_matches_numeric_gradient_max():
    # oracle: maximize |K'| on a fine grid by central differences
    k = Kernel(1, 1.0)
    xs = np.linspace(-4, 4, 200001)
    h = xs[1] - xs[0]
    vals = k.eval(xs[:, None])
    grad = (vals[2:] - vals[:-2]) / (2 * h)
    assert k.lipschitz_bound() == pytest.approx(np.max(np.abs(grad)), rel=1e-6)
    assert k.lipschitz_bound() == pytest.approx(0.2419707, abs=5e-8)


def test_nonfinite_input_rejected():
    k = Kernel(1, 1.0)
    with pytest.raises(ValueError):
        k.eval(np.array([np.nan]))
    with pytest.raises(ValueError):
        k.eval(np.array([[np.inf], [0.0]]))


def test_invalid_construction():
    with pytest.raises(ValueError):
        Kernel(0, 1.0)
    with pytest.raises(ValueError):
        Kernel(1, 0.0)
    with pytest.raises(ValueError):
        Kernel(1, -2.0)


def test_symmetry_randomized():
    rng = np.random.default_rng(42)
    for d in (1, 2, 3):
        k = Kernel(d, 0.8)
        x = rng.normal(size=(200, d))
        np.testing.assert_array_equal(k.eval(x), k.eval(-x))


def test_monotone_radial_decay():
    rng = np.random.default_rng(7)
    k = Kernel(2, 1.3)
    x = rng.normal(size=(500, 2))
    y = x * (1.0 + rng.random((500, 1)))  # same direction, larger norm
    assert np.all(k.eval(x) >= k.eval(y))


@pytest.mark.parametrize("dim,eps", [(1, 1.0), (1, 0.5), (2, 0.7)])
def test_quadrature_mass(dim, eps):
    k = Kernel(dim, eps)
    r = 10 * eps
    n = 4001 if dim == 1 else 801
    axis = np.linspace(-r, r, n)
    if dim == 1:
        mass = np.trapezoid(k.eval(axis[:, None]), axis)
    else:
        g0, g1 = np.meshgrid(axis, axis, indexing="ij")
        vals = k.eval(np.column_stack([g0.ravel(), g1.ravel()])).reshape(n, n)
        mass = np.trapezoid(np.trapezoid(vals, axis, axis=1), axis)
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_lipschitz_inequality_random_pairs():
    rng = np.random.default_rng(11)
    for d, eps in ((1, 0.4), (3, 1.1)):
        k = Kernel(d, eps)
        lk = k.lipschitz_bound()
        x = rng.normal(size=(300, d)) * 2
        y = rng.normal(size=(300, d)) * 2
        lhs = np.abs(k.eval(x) - k.eval(y))
        rhs = lk * np.linalg.norm(x - y, axis=1)
        assert np.all(lhs <= rhs * (1 + 1e-12))


def test_no_truncation_far_out():
    # evaluations stay strictly positive far beyond exp(-40)
    k = Kernel(1, 1.0)
    assert k.eval(np.array([12.0])) > 0.0
