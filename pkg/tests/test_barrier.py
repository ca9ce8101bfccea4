import math

import numpy as np
import pytest

from odcbf.barrier import (
    BarrierSpec,
    SafeSetGeometry,
    admissible_delta,
    atan_class_k,
    cubic_class_k,
    eval_lie,
    gamma_margin,
    linear_class_k,
    register_class_k,
)
from odcbf.dynamics import DisturbedSystem
from odcbf.errors import MarginUndefinedError, ParameterError, ShapeError


def pendulum_top(nu=0.5):
    # layer-1 subsystem: qdot = x2 + nu d, virtual input x2
    return DisturbedSystem(
        n=1, m=1, p=1,
        f=lambda x: np.zeros(1),
        g=lambda x: np.eye(1),
        w=lambda x: np.array([[nu]]),
    )


def h1_spec(eps=1.0, theta_d=1.0, p=1.0, alpha=None):
    return BarrierSpec(
        h=lambda x: 1.0 - x[0] ** 2,
        grad_h=lambda x: np.array([-2.0 * x[0]]),
        alpha=alpha or linear_class_k(1.0),
        epsilon=eps,
        theta_d=theta_d,
        p_weight=p,
        n=1,
    )


class TestExtendedClassK:
    def test_catalog_self_tests(self):
        for k in (linear_class_k(2.0), cubic_class_k(0.5), atan_class_k(1.5, 2.0)):
            assert k.self_test()

    def test_linear_inverse(self):
        k = linear_class_k(3.0)
        assert k.inverse(k(1.7)) == pytest.approx(1.7, abs=1e-12)

    def test_register_custom_pair(self):
        k = register_class_k(np.sinh, np.arcsinh, b=2.0, c=2.0)
        assert k(0.0) == 0.0
        assert k.inverse(k(1.3)) == pytest.approx(1.3, abs=1e-12)

    def test_register_rejects_broken_inverse(self):
        with pytest.raises(ParameterError):
            register_class_k(lambda s: s, lambda y: 2 * y)

    def test_rejects_nonmonotone(self):
        with pytest.raises(ParameterError):
            register_class_k(lambda s: -s, lambda y: -y)


class TestBarrierSpec:
    def test_positive_parameters_enforced(self):
        with pytest.raises(ParameterError):
            h1_spec(eps=0.0)
        with pytest.raises(ParameterError):
            h1_spec(theta_d=-1.0)
        with pytest.raises(ParameterError):
            h1_spec(p=0.0)

    def test_default_gradient_is_finite_difference(self):
        bar = BarrierSpec(h=lambda x: float(np.sin(x[0])), alpha=linear_class_k(), epsilon=1.0, theta_d=1.0, p_weight=1.0, n=1)
        g = bar.grad_h(np.array([0.3]))
        assert g[0] == pytest.approx(np.cos(0.3), rel=1e-8)


class TestEvalLie:
    def test_pendulum_layer1_lg(self):
        lie = eval_lie(pendulum_top(), h1_spec(), np.array([0.5]))
        assert lie.lg_h[0] == pytest.approx(-1.0)  # -2q at q = 0.5

    def test_zero_drift_gives_zero_lf(self):
        sys = DisturbedSystem(n=2, m=1, p=1, f=lambda x: np.zeros(2), g=lambda x: np.ones((2, 1)), w=lambda x: np.zeros((2, 1)))
        bar = BarrierSpec(h=lambda x: x[0], grad_h=lambda x: np.array([1.0, 0.0]), alpha=linear_class_k(), epsilon=1.0, theta_d=1.0, p_weight=1.0, n=2)
        for x in np.random.default_rng(1).normal(size=(10, 2)):
            assert eval_lie(sys, bar, x).lf_h == 0.0

    def test_pendulum_layer1_lw_chain_rule(self):
        lie = eval_lie(pendulum_top(nu=0.5), h1_spec(), np.array([0.5]))
        assert lie.lw_h[0] == pytest.approx(-0.5)  # -2 q nu

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            eval_lie(pendulum_top(), h1_spec(), np.array([0.1, 0.2]))


class TestGammaMargin:
    def test_zero_delta(self):
        assert gamma_margin(h1_spec(), 0.0) == 0.0

    def test_linear_alpha(self):
        bar = h1_spec(eps=2.0, theta_d=1.0)
        assert gamma_margin(bar, 1.0) == pytest.approx(1.0)

    def test_cubic_alpha_numeric_inversion(self):
        bar = h1_spec(eps=1.0, theta_d=0.5, alpha=cubic_class_k(1.0))
        gamma = gamma_margin(bar, 1.0)
        assert gamma == pytest.approx(1.0, abs=1e-10)
        # cross-check by inverting s^3 = -1 numerically
        roots = np.roots([1.0, 0.0, 0.0, 1.0])
        s_star = float(np.real(roots[np.isreal(roots)][0]))
        assert gamma == pytest.approx(-s_star, abs=1e-10)

    def test_out_of_range_raises(self):
        bar = h1_spec(eps=10.0, theta_d=1.0, alpha=atan_class_k(scale=1.0, gain=1.0))
        # required decay -5 below the saturating range (-pi/2, pi/2)
        with pytest.raises(MarginUndefinedError):
            gamma_margin(bar, 1.0)

    def test_monotone_in_delta(self):
        bar = h1_spec(eps=1.0, theta_d=1.0, alpha=cubic_class_k(2.0))
        deltas = np.linspace(0.0, 2.0, 21)
        gammas = [gamma_margin(bar, d) for d in deltas]
        assert all(g2 >= g1 for g1, g2 in zip(gammas, gammas[1:]))


class TestAdmissibleDelta:
    def test_linear_cases(self):
        geom = SafeSetGeometry(h=lambda x: 1.0 - x[0] ** 2, b=1.0)
        assert admissible_delta(h1_spec(eps=2.0, theta_d=1.0), geom) == pytest.approx(1.0)
        assert admissible_delta(h1_spec(eps=1.0, theta_d=2.0), geom) == pytest.approx(2.0)

    def test_infinite_b_sentinel(self):
        geom = SafeSetGeometry(h=lambda x: 1.0 - x[0] ** 2, b=math.inf)
        assert admissible_delta(h1_spec(), geom) == math.inf


class TestSafeSetGeometry:
    def test_membership_consistency(self):
        geom = SafeSetGeometry(h=lambda x: 1.0 - x[0] ** 2, b=1.0)
        assert geom.in_safe(np.array([0.5]))
        assert not geom.in_safe(np.array([1.5]))
        assert geom.on_boundary(np.array([1.0]))
        assert geom.in_domain(np.array([1.2]))  # h = -0.44 > -b
        assert not geom.in_domain(np.array([2.0]))  # h = -3 <= -1
        assert geom.in_inflated(np.array([1.2]), gamma=0.5)

    def test_set_nesting_below_admissible(self):
        bar = h1_spec(eps=1.0, theta_d=1.0)
        geom = SafeSetGeometry(h=bar.h, b=1.0)
        delta_max = admissible_delta(bar, geom)
        rng = np.random.default_rng(5)
        for delta in rng.uniform(0.0, delta_max * 0.999, size=20):
            gamma = gamma_margin(bar, delta)
            assert gamma < geom.b
            for x in rng.uniform(-1.0, 1.0, size=(50, 1)):
                if geom.in_safe(x):
                    assert geom.in_inflated(x, gamma)
                    assert geom.in_domain(x)


def test_finite_difference_consistency_random_states():
    bar = h1_spec()
    rng = np.random.default_rng(11)
    from odcbf import autodiff as ad

    for x in rng.uniform(-1.4, 1.4, size=(1000, 1)):
        analytic = bar.grad_h(x)
        fd = ad.fd_gradient(bar.h, x)
        assert np.allclose(analytic, fd, rtol=1e-6, atol=1e-9)
