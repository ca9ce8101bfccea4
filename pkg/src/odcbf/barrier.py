"""Barrier functions, extended class-K functions, safe-set geometry, and
Lie-derivative evaluation.

The candidate safe set is S = {h >= 0} with boundary {h = 0}; the barrier's
domain is D = {h + b > 0} where b = -inf h (declared, estimated, or +inf).
Robustness bookkeeping: the inflated set S_delta = {h + gamma(delta) >= 0}
with gamma(delta) = -alpha^{-1}(-eps*delta^2 / (2*theta_d)) stays invariant
for disturbances bounded by delta, provided delta^2 < -2*theta_d*alpha(-b)/eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .dynamics import DisturbedSystem
from .errors import MarginUndefinedError, ParameterError, ShapeError

_RANGE_PROBE = 1e12  # stand-in for an infinite domain endpoint when probing range


@dataclass(frozen=True)
class ExtendedClassK:
    """Strictly increasing alpha on (-b, c) with alpha(0) = 0 and an inverse.

    ``alpha`` must accept plain floats and autodiff duals. ``range_lo`` /
    ``range_hi`` bound the image of alpha; they are probed numerically at
    construction when not supplied.
    """

    alpha: Callable
    alpha_inv: Callable
    b: float = math.inf
    c: float = math.inf
    range_lo: float = field(default=None)  # type: ignore[assignment]
    range_hi: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (self.b > 0 and self.c > 0):
            raise ParameterError("class-K domain bounds b, c must be positive")
        if self.range_lo is None:
            object.__setattr__(self, "range_lo", float(self.alpha(-min(self.b, _RANGE_PROBE))))
        if self.range_hi is None:
            object.__setattr__(self, "range_hi", float(self.alpha(min(self.c, _RANGE_PROBE))))

    def __call__(self, s):
        return self.alpha(s)

    def inverse(self, y):
        return self.alpha_inv(y)

    def self_test(self, n_grid=101, tol=1e-10):
        """Check alpha(0)=0, strict monotonicity, and inverse consistency."""
        if abs(float(self.alpha(0.0))) > tol:
            raise ParameterError("alpha(0) != 0")
        lo = -min(self.b, 1e3) * (1 - 1e-9)
        hi = min(self.c, 1e3) * (1 - 1e-9)
        grid = np.linspace(lo, hi, n_grid)
        vals = np.array([float(self.alpha(s)) for s in grid])
        if not np.all(np.diff(vals) > 0):
            raise ParameterError("alpha not strictly increasing on sampled grid")
        back = np.array([float(self.alpha_inv(v)) for v in vals])
        err = np.max(np.abs(back - grid) / (1.0 + np.abs(grid)))
        if err > tol:
            raise ParameterError(f"alpha_inv(alpha(s)) != s: relative error {err:.3e}")
        return True


def linear_class_k(gain=1.0, b=math.inf, c=math.inf):
    """alpha(s) = gain * s."""
    if gain <= 0:
        raise ParameterError("gain must be positive")
    return ExtendedClassK(lambda s: gain * s, lambda y: y / gain, b, c)


def cubic_class_k(gain=1.0, b=math.inf, c=math.inf):
    """alpha(s) = gain * s^3."""
    if gain <= 0:
        raise ParameterError("gain must be positive")
    return ExtendedClassK(lambda s: gain * s**3, lambda y: float(np.cbrt(y / gain)), b, c)


def atan_class_k(scale=1.0, gain=1.0, b=math.inf, c=math.inf):
    """Saturating alpha(s) = scale * atan(gain * s); range (-scale*pi/2, scale*pi/2)."""
    if scale <= 0 or gain <= 0:
        raise ParameterError("scale and gain must be positive")
    return ExtendedClassK(
        lambda s: scale * ad.atan(gain * s),
        lambda y: math.tan(y / scale) / gain,
        b,
        c,
    )


def register_class_k(alpha, alpha_inv, b=math.inf, c=math.inf):
    """Wrap a custom (alpha, alpha_inv) pair, running the consistency self-test."""
    k = ExtendedClassK(alpha, alpha_inv, b, c)
    k.self_test()
    return k


@dataclass(frozen=True)
class BarrierSpec:
    """A barrier h with gradient access and its robustness parameters.

    grad_h defaults to central finite differences of h when not supplied.
    eps > 0 trades robustness against conservatism, theta_d > 0 is the
    minimum decay scale, p_weight > 0 weighs decay deviation in the filter.
    """

    h: Callable
    alpha: ExtendedClassK
    epsilon: float
    theta_d: float
    p_weight: float
    grad_h: Optional[Callable] = None
    n: Optional[int] = None
    fused: Optional[Callable] = None  # optional single-pass (h, grad_h) provider

    def __post_init__(self):
        if self.epsilon <= 0 or self.theta_d <= 0 or self.p_weight <= 0:
            raise ParameterError("epsilon, theta_d, p_weight must all be strictly positive")
        if self.grad_h is None:
            h = self.h
            object.__setattr__(self, "grad_h", lambda x: ad.fd_gradient(h, x))

    def value_and_grad(self, x):
        if self.fused is not None:
            hv, grad = self.fused(x)
            return float(hv), np.asarray(grad, dtype=float)
        return float(self.h(x)), np.asarray(self.grad_h(x), dtype=float)


@dataclass(frozen=True)
class SafeSetGeometry:
    """Membership tests for S, its boundary, D, and the inflated S_delta.

    b = -inf h, c = sup h; either may be declared finite or left +inf.
    Boundary membership uses |h(x)| <= boundary_tol * (1 + h_scale).
    """

    h: Callable
    b: float = math.inf
    c: float = math.inf
    boundary_tol: float = 1e-9
    h_scale: float = 1.0

    def in_safe(self, x):
        return float(self.h(x)) >= 0.0

    def on_boundary(self, x):
        return abs(float(self.h(x))) <= self.boundary_tol * (1.0 + self.h_scale)

    def in_domain(self, x):
        return not math.isfinite(self.b) or float(self.h(x)) + self.b > 0.0

    def in_inflated(self, x, gamma):
        return float(self.h(x)) + gamma >= 0.0


@dataclass(frozen=True)
class LieData:
    """h and its Lie derivatives along f, g, w at one state."""

    h_val: float
    lf_h: float
    lg_h: np.ndarray  # (m,)
    lw_h: np.ndarray  # (p,)


def eval_lie(sys: DisturbedSystem, bar: BarrierSpec, x) -> LieData:
    """Evaluate h, L_f h = grad_h . f, L_g h = grad_h g, L_w h = grad_h w."""
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.n,):
        raise ShapeError("x", (sys.n,), x.shape)
    h_val, grad = bar.value_and_grad(x)
    grad = grad.reshape(-1)
    if grad.shape != (sys.n,):
        raise ShapeError("grad_h(x)", (sys.n,), grad.shape)
    f = np.asarray(sys.f(x), dtype=float)
    g = np.asarray(sys.g(x), dtype=float)
    w = np.asarray(sys.w(x), dtype=float)
    if f.shape != (sys.n,):
        raise ShapeError("f(x)", (sys.n,), f.shape)
    if g.shape != (sys.n, sys.m):
        raise ShapeError("g(x)", (sys.n, sys.m), g.shape)
    if w.shape != (sys.n, sys.p):
        raise ShapeError("w(x)", (sys.n, sys.p), w.shape)
    return LieData(h_val=h_val, lf_h=float(grad @ f), lg_h=grad @ g, lw_h=grad @ w)


def gamma_margin(bar: BarrierSpec, delta: float) -> float:
    """Safe-set inflation gamma(delta) = -alpha^{-1}(-eps*delta^2/(2*theta_d)).

    Raises MarginUndefinedError when the argument leaves the range of alpha
    (disturbance too large for this alpha).
    """
    if delta < 0:
        raise ParameterError("delta must be nonnegative")
    if delta == 0:
        return 0.0
    arg = -bar.epsilon * delta**2 / (2.0 * bar.theta_d)
    if arg <= bar.alpha.range_lo:
        raise MarginUndefinedError(
            f"required decay {arg:.6g} below range of alpha (inf {bar.alpha.range_lo:.6g}); "
            f"disturbance bound {delta:.6g} too large for this alpha"
        )
    return -float(bar.alpha.inverse(arg))


def admissible_delta(bar: BarrierSpec, geom: SafeSetGeometry) -> float:
    """Supremal admissible disturbance bound sqrt(-2*theta_d*alpha(-b)/eps).

    Callers must compare with strict inequality. Returns +inf when the
    barrier is unbounded below (b infinite).
    """
    if not math.isfinite(geom.b):
        return math.inf
    val = -2.0 * bar.theta_d * float(bar.alpha(-geom.b)) / bar.epsilon
    return math.sqrt(max(val, 0.0))
