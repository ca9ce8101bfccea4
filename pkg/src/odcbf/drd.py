"""Dual-relative-degree barrier construction.

Two-layer systems

    zdot   = f_z(z) + g_z(z) psi(eta) u_z + w_z(z) d
    etadot = f_eta(eta) + g_eta(eta) u_eta + w_eta(eta) d

where the bottom state eta modulates the top layer's control directions
through psi. The top layer is safeguarded through the virtual input
v = psi(eta) u_z: a smooth k_v is synthesized for the top barrier, u_z is
aligned by least squares (u_z = psi^+ k_v), and an attitude map eta_d picks
the bottom state that makes the alignment exact. Penalizing the attitude
error with the Lyapunov-like V = 1/(2 mu) ||eta - eta_d(k_v(z))||^2 gives
the composite barrier h = h_z - V for the partial closed loop, whose input
is u_eta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .barrier import BarrierSpec
from .dynamics import DisturbedSystem
from .errors import AlignmentError, ParameterError, ThrustDomainError
from .synthesis import SmoothVirtualController

_SV_FLOOR = 1e-8


@dataclass(frozen=True)
class DrdSystem:
    """Dual-relative-degree system; psi(eta) has shape (r, m_top)."""

    n_top: int
    m_top: int
    n_bot: int
    m_bot: int
    p: int
    r: int
    f_top: Callable
    g_top: Callable  # z -> (n_top, r): multiplies the virtual input
    w_top: Callable
    f_bot: Callable
    g_bot: Callable
    w_bot: Callable
    psi: Callable


@dataclass(frozen=True)
class AttitudeMap:
    """eta_d: virtual input v -> bottom state aligning psi with v."""

    eta_d: Callable
    jacobian: Callable  # v -> (n_bot, r)

    def __call__(self, v):
        return self.eta_d(v)


def pinv_apply(mat, v, sv_floor=_SV_FLOOR):
    """Left pseudoinverse applied to v via normal equations.

    r and m are tiny here, so the normal equations are cheap; conditioning is
    monitored through the singular values and rank deficiency raises
    AlignmentError with the offending values.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    v = np.asarray(v, dtype=float).reshape(-1)
    gram = mat.T @ mat
    svals = np.sqrt(np.maximum(np.linalg.eigvalsh(gram), 0.0))
    if svals.min() <= sv_floor:
        raise AlignmentError(svals, sv_floor)
    return np.linalg.solve(gram, mat.T @ v)


def align_uz(dsys: DrdSystem, k_v_val, eta) -> np.ndarray:
    """Least-squares top input: u_z = psi(eta)^+ k_v, minimizing ||k_v - psi u||."""
    return pinv_apply(dsys.psi(np.asarray(eta, dtype=float)), k_v_val)


def quadrotor_eta_d(v, v_min=0.0):
    """Pitch angle atan(-v1 / v2) aligning planar thrust with the command v.

    Requires positive net thrust v2 > v_min (the map has a singularity at
    v2 = 0 which the synthesis must stay away from). Dual-aware.
    """
    v2val = float(ad.value(v[1]))
    if v2val <= v_min:
        raise ThrustDomainError(f"thrust component v2={v2val:.6g} <= v_min={v_min:.6g}")
    return ad.stack([ad.atan(-v[0] / v[1])])


def quadrotor_attitude_map(v_min=0.0) -> AttitudeMap:
    eta_d = lambda v: quadrotor_eta_d(v, v_min)
    return AttitudeMap(eta_d=eta_d, jacobian=lambda v: ad.jacobian(eta_d, v)[1])


def eta_d_rate(amap: AttitudeMap, v, vdot) -> np.ndarray:
    """Attitude-map rate d/dt eta_d(v(t)) = (d eta_d / d v) vdot.

    Differentiation byproduct used by the full-actuation stretch scenario
    (desired angular rate); not part of the core construction.
    """
    return np.asarray(amap.jacobian(np.asarray(v, dtype=float)), dtype=float) @ np.asarray(vdot, dtype=float)


@dataclass(frozen=True)
class DrdBarrier:
    """Composite h(z, eta) = h_z(z) - 1/(2 mu) ||eta - eta_d(k_v(z))||^2."""

    h_z: BarrierSpec
    k_v: SmoothVirtualController
    eta_d: AttitudeMap
    mu: float
    n_top: int
    n_bot: int

    def _split(self, x):
        return x[: self.n_top], x[self.n_top :]

    def attitude_error(self, x):
        z, eta = self._split(np.asarray(x, dtype=float))
        ref = np.asarray(ad.value(self.eta_d(ad.value(self.k_v.k1(z)))), dtype=float).reshape(-1)
        return eta - ref

    def lyapunov(self, x):
        e = self.attitude_error(x)
        return float(e @ e) / (2.0 * self.mu)

    def h(self, x):
        z, _ = self._split(np.asarray(x, dtype=float))
        return float(self.h_z.h(z)) - self.lyapunov(x)

    def value_and_grad(self, x):
        """(h, grad h) sharing one pass of each map's value-and-jacobian."""
        x = np.asarray(x, dtype=float)
        z, eta = self._split(x)
        v, j_kv = self.k_v.with_jacobian(z)
        ref_dual = ad.jacobian(self.eta_d.eta_d, v)
        ref, j_eta = ref_dual[0].reshape(-1), np.atleast_2d(ref_dual[1])
        e = eta - ref
        hz_val, hz_grad = self.h_z.value_and_grad(z)
        hv = hz_val - float(e @ e) / (2.0 * self.mu)
        dz = hz_grad + (e @ j_eta @ np.atleast_2d(j_kv)) / self.mu
        deta = -e / self.mu
        return hv, np.concatenate([dz, deta])

    def grad_h(self, x):
        return self.value_and_grad(x)[1]

    def to_spec(self) -> BarrierSpec:
        return BarrierSpec(
            h=self.h,
            grad_h=self.grad_h,
            alpha=self.h_z.alpha,
            epsilon=self.h_z.epsilon,
            theta_d=self.h_z.theta_d,
            p_weight=self.h_z.p_weight,
            n=self.n_top + self.n_bot,
            fused=self.value_and_grad,
        )


def drd_barrier(h_z: BarrierSpec, k_v: SmoothVirtualController, eta_d: AttitudeMap, mu: float, n_top=None, n_bot=None) -> DrdBarrier:
    if mu <= 0:
        raise ParameterError("mu must be strictly positive")
    if n_top is None:
        n_top = h_z.n
    if n_top is None:
        raise ParameterError("top-layer dimension unknown: set h_z.n or pass n_top")
    if n_bot is None:
        probe = np.asarray(ad.value(eta_d(np.asarray(ad.value(k_v.k1(np.zeros(n_top)))))), dtype=float).reshape(-1)
        n_bot = probe.size
    return DrdBarrier(h_z=h_z, k_v=k_v, eta_d=eta_d, mu=float(mu), n_top=n_top, n_bot=n_bot)


def partial_closed_loop(dsys: DrdSystem, k_v: SmoothVirtualController) -> DisturbedSystem:
    """Close the top input at its aligned value; u_eta remains the input.

    Drift: (f_z + g_z psi psi^+ k_v(z); f_eta); input matrix (0; g_eta);
    disturbance matrix (w_z; w_eta). Alignment errors propagate.
    """
    n = dsys.n_top + dsys.n_bot

    def split(x):
        return x[: dsys.n_top], x[dsys.n_top :]

    def f(x):
        x = np.asarray(x, dtype=float)
        z, eta = split(x)
        psi = np.atleast_2d(np.asarray(dsys.psi(eta), dtype=float))
        v = np.asarray(ad.value(k_v.k1(z)), dtype=float).reshape(-1)
        u_z = pinv_apply(psi, v)
        top = np.asarray(dsys.f_top(z), dtype=float) + np.asarray(dsys.g_top(z), dtype=float) @ (psi @ u_z)
        bot = np.asarray(dsys.f_bot(eta), dtype=float)
        return np.concatenate([top, bot])

    def g(x):
        _, eta = split(np.asarray(x, dtype=float))
        mat = np.zeros((n, dsys.m_bot))
        mat[dsys.n_top :, :] = np.atleast_2d(np.asarray(dsys.g_bot(eta), dtype=float))
        return mat

    def w(x):
        z, eta = split(np.asarray(x, dtype=float))
        return np.vstack(
            [
                np.atleast_2d(np.asarray(dsys.w_top(z), dtype=float)),
                np.atleast_2d(np.asarray(dsys.w_bot(eta), dtype=float)),
            ]
        )

    return DisturbedSystem(n=n, m=dsys.m_bot, p=dsys.p, f=f, g=g, w=w)


def alignment_residual(dsys: DrdSystem, k_v: SmoothVirtualController, eta_d: AttitudeMap, z) -> float:
    """|| psi(eta_d(k_v(z))) psi^+ k_v(z) - k_v(z) ||: the alignment identity."""
    v = np.asarray(ad.value(k_v.k1(np.asarray(z, dtype=float))), dtype=float).reshape(-1)
    eta = np.asarray(ad.value(eta_d(v)), dtype=float).reshape(-1)
    psi = np.atleast_2d(np.asarray(dsys.psi(eta), dtype=float))
    return float(np.linalg.norm(psi @ pinv_apply(psi, v) - v))


def check_attitude_alignment(dsys, k_v, eta_d, z_samples, tol=1e-9):
    """Worst alignment residual over samples; asserts the map's invariant."""
    worst, worst_z = 0.0, None
    for z in z_samples:
        res = alignment_residual(dsys, k_v, eta_d, z)
        if res > worst:
            worst, worst_z = res, np.asarray(z, dtype=float)
    return {"max_residual": worst, "argmax": worst_z, "ok": worst <= tol, "tol": tol}
