import numpy as np
import pytest

from odcbf import autodiff as ad


def test_scalar_derivatives():
    val, grad = ad.gradient(lambda x: x[0] ** 2 + 3.0 * x[0], np.array([2.0]))
    assert val == pytest.approx(10.0)
    assert grad[0] == pytest.approx(7.0)


def test_trig_chain():
    f = lambda x: ad.sin(x[0]) * ad.cos(x[1]) + ad.atan(x[0] * x[1])
    x = np.array([0.7, -0.3])
    _, g = ad.gradient(f, x)
    g_fd = ad.fd_gradient(lambda y: float(np.sin(y[0]) * np.cos(y[1]) + np.arctan(y[0] * y[1])), x)
    assert np.allclose(g, g_fd, rtol=1e-8, atol=1e-10)


def test_division_and_sqrt():
    f = lambda x: ad.sqrt(x[0] * x[0] + 1.0) / (x[1] + 2.0)
    x = np.array([1.3, 0.4])
    _, g = ad.gradient(f, x)
    g_fd = ad.fd_gradient(lambda y: np.sqrt(y[0] ** 2 + 1) / (y[1] + 2), x)
    assert np.allclose(g, g_fd, rtol=1e-8)


def test_atan2_matches_atan_on_positive_x():
    x = np.array([0.5, 1.5])
    _, g1 = ad.gradient(lambda v: ad.atan2(v[0], v[1]), x)
    _, g2 = ad.gradient(lambda v: ad.atan(v[0] / v[1]), x)
    assert np.allclose(g1, g2, rtol=1e-12)


def test_jacobian_of_vector_function():
    def f(x):
        return ad.stack([x[0] * x[1], ad.sin(x[0]), x[1] ** 3])

    x = np.array([0.9, -1.1])
    val, jac = ad.jacobian(f, x)
    assert val.shape == (3,)
    expected = np.array([[x[1], x[0]], [np.cos(x[0]), 0.0], [0.0, 3 * x[1] ** 2]])
    assert np.allclose(jac, expected, rtol=1e-12)


def test_jacobian_constant_function_is_zero():
    _, jac = ad.jacobian(lambda x: np.array([1.0, 2.0]), np.array([0.3, 0.4, 0.5]))
    assert jac.shape == (2, 3)
    assert np.all(jac == 0)


def test_matvec_and_vecmat():
    rng = np.random.default_rng(7)
    mat = rng.normal(size=(3, 2))

    def f(x):
        return ad.matvec(mat, x)

    x = rng.normal(size=2)
    val, jac = ad.jacobian(f, x)
    assert np.allclose(val, mat @ x)
    assert np.allclose(jac, mat)

    def g(x):
        return ad.vecmat(x, mat.T)  # x^T mat^T = (mat x)^T

    val2, jac2 = ad.jacobian(g, x)
    assert np.allclose(val2, mat @ x)
    assert np.allclose(jac2, mat)


def test_vstack_dual_blocks():
    def f(x):
        top = ad.stack([x[0], 0.0])
        return ad.vstack([top, np.array([[1.0, 2.0]])])

    out = f(ad.seed(np.array([0.5])))
    assert out.val.shape == (2, 2)
    assert out.dot[0, 0, 0] == 1.0
    assert np.all(out.dot[1] == 0)


def test_numpy_interop_defers_to_dual():
    d = ad.seed(np.array([1.0, 2.0]))
    out = np.ones(2) + d * 2.0
    assert isinstance(out, ad.Dual)
    assert np.allclose(out.val, [3.0, 5.0])
    assert np.allclose(out.dot, 2.0 * np.eye(2))


def test_fd_jacobian_matches_ad():
    def f(x):
        return ad.stack([ad.exp(x[0]) * x[1], ad.log(x[1] + 2.0)])

    x = np.array([0.2, 0.8])
    _, jac = ad.jacobian(f, x)
    jac_fd = ad.fd_jacobian(lambda y: np.array([np.exp(y[0]) * y[1], np.log(y[1] + 2.0)]), x)
    assert np.allclose(jac, jac_fd, rtol=1e-7, atol=1e-9)
