import numpy as np
import pytest

from oscisep.chebyshev import CoeffFunction, cheb_nodes


def test_nodes_in_unit_interval():
    tau = cheb_nodes(48)
    assert tau.shape == (49,)
    assert np.all(np.diff(tau) > 0)
    assert 0.0 < tau[0] and tau[-1] < 1.0


def test_polynomial_roundtrip_exact():
    f = lambda t: np.array([t ** 3 - 2 * t + 1, 1j * t ** 2 + t])
    cf = CoeffFunction.from_callable(f, 48)
    for t in np.linspace(0, 1, 11):
        np.testing.assert_allclose(cf.eval(t), f(t), atol=1e-13)


def test_values_fit_roundtrip():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=(49, 2)) + 1j * rng.normal(size=(49, 2))
    cf = CoeffFunction.from_values(vals, chop=0.0)
    np.testing.assert_allclose(cf.eval(cheb_nodes(48)), vals, atol=1e-11)


def test_derivative_and_antiderivative():
    g = CoeffFunction.from_callable(lambda t: np.array([np.exp(2 * t)]), 48)
    tt = np.linspace(0, 1, 13)
    np.testing.assert_allclose(g.derivative().eval(tt).ravel(),
                               2 * np.exp(2 * tt), rtol=1e-10)
    np.testing.assert_allclose(g.derivative(2).eval(tt).ravel(),
                               4 * np.exp(2 * tt), rtol=1e-8)
    a = g.antiderivative()
    assert abs(a.eval(0.0)[0]) <= 1e-14
    np.testing.assert_allclose(a.eval(tt).ravel(), (np.exp(2 * tt) - 1) / 2,
                               rtol=1e-12, atol=1e-13)


def test_complex_rotation_derivative():
    lam = -0.3 + 0.9j
    g = CoeffFunction.from_callable(lambda t: np.array([np.exp(lam * t)]), 48)
    tt = np.linspace(0, 1, 9)
    np.testing.assert_allclose(g.derivative().eval(tt).ravel(),
                               lam * np.exp(lam * tt), rtol=1e-11)


def test_tail_decay_resolution_check():
    smooth = CoeffFunction.from_callable(lambda t: np.array([np.sin(3 * t)]), 48)
    assert smooth.tail_ratio() <= 1e-10
    assert smooth.is_resolved()
    rough = CoeffFunction.from_callable(
        lambda t: np.array([np.exp(-1.0 / (1e-3 + abs(t - 0.5)))]), 16)
    assert rough.tail_ratio() > 1e-10


def test_algebra_and_conjugate():
    f = CoeffFunction.from_callable(lambda t: np.array([t + 1j * t ** 2]), 24)
    g = CoeffFunction.from_callable(lambda t: np.array([np.cos(t)]), 24)
    tt = np.linspace(0, 1, 7)
    np.testing.assert_allclose((f + g).eval(tt), f.eval(tt) + g.eval(tt), atol=1e-13)
    np.testing.assert_allclose((f - g).eval(tt), f.eval(tt) - g.eval(tt), atol=1e-13)
    np.testing.assert_allclose((2.5 * f).eval(tt), 2.5 * f.eval(tt), atol=1e-13)
    np.testing.assert_allclose(f.conj().eval(tt), np.conj(f.eval(tt)), atol=1e-14)


def test_constant_and_zero():
    c = CoeffFunction.constant([1.0 + 2j, -3.0], 48)
    np.testing.assert_allclose(c.eval(0.77), [1.0 + 2j, -3.0])
    assert not c.derivative().eval(0.3).any()
    z = CoeffFunction.zero(48, 3)
    assert z.sup_norm() == 0.0
    assert z.tail_ratio() == 0.0


def test_chop_is_degree_stable():
    # fitting the same analytic function at doubled degree changes the
    # second derivative only at the chop floor
    tt = np.linspace(0, 1, 9)
    g48 = CoeffFunction.from_callable(lambda t: np.array([np.exp(2 * t)]), 48)
    g96 = CoeffFunction.from_callable(lambda t: np.array([np.exp(2 * t)]), 96)
    d48 = g48.derivative(2).eval(tt)
    d96 = g96.derivative(2).eval(tt)
    np.testing.assert_allclose(d48, d96, rtol=1e-8)
