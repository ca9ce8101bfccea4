"""Closed-form optimal-decay safety filter.

Solves, in closed form, the pointwise QP

    min_{u, omega}  1/2 ||u - k_d(x)||^2 + 1/2 p (omega - theta_d)^2
    s.t.            L_f h + L_g h u >= -omega * alpha(h) + ||L_w h||^2 / eps
                    omega >= theta_d

by jointly optimizing the input u and the decay scale omega. With

    upsilon = L_f h + L_g h k_d + theta_d alpha(h) - ||L_w h||^2 / eps
    xi      = ||L_g h||
    zeta    = alpha(h) / p

the KKT solution is u = k_d + lambda * L_g h^T and omega = theta_d + psi,
where lambda = ReLU(-upsilon) / (xi^2 + p ReLU(zeta)^2) and
psi = ReLU(-upsilon) ReLU(zeta) / (xi^2 + p ReLU(zeta)^2), both zero in the
degenerate branch xi = 0 and zeta <= 0 (where a negative upsilon certifies
infeasibility). The solution is locally Lipschitz on the barrier's domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barrier import BarrierSpec, SafeSetGeometry, eval_lie
from .dynamics import DisturbedSystem, call_law
from .errors import DomainError, InfeasiblePointError


@dataclass(frozen=True)
class FilterResult:
    """Filtered input with the realized decay scale and KKT diagnostics."""

    u: np.ndarray
    theta_x: float
    upsilon: float
    xi: float
    zeta: float
    lambda_val: float
    constraint_active: bool


def solve_decay_filter(
    lf_h: float,
    lg_h: np.ndarray,
    lw_h: np.ndarray,
    alpha_h: float,
    u_nom: np.ndarray,
    epsilon: float,
    theta_d: float,
    p: float,
    x=None,
    legacy_psi_c: Optional[float] = None,
) -> FilterResult:
    """Closed-form filter on raw Lie-derivative terms.

    ``legacy_psi_c`` switches the decay-scale numerator/denominator to the
    alternative reading with a constant c in place of ReLU(zeta) in the
    denominator (comparison runs only; the default is the KKT-consistent
    form validated against the enumeration oracle).
    """
    lg_h = np.asarray(lg_h, dtype=float).reshape(-1)
    lw_h = np.asarray(lw_h, dtype=float).reshape(-1)
    u_nom = np.asarray(u_nom, dtype=float).reshape(-1)

    upsilon = float(lf_h + lg_h @ u_nom + theta_d * alpha_h - (lw_h @ lw_h) / epsilon)
    xi = float(np.linalg.norm(lg_h))
    zeta = float(alpha_h / p)

    if xi == 0.0 and zeta <= 0.0:
        if upsilon < 0.0:
            raise InfeasiblePointError(x, upsilon, xi, zeta)
        lam = 0.0
        psi = 0.0
    else:
        relu_neg_ups = max(0.0, -upsilon)
        relu_zeta = max(0.0, zeta)
        denom = xi**2 + p * relu_zeta**2
        lam = relu_neg_ups / denom
        if legacy_psi_c is None:
            psi = relu_neg_ups * relu_zeta / denom
        else:
            psi = relu_neg_ups * relu_zeta / (xi**2 + p * legacy_psi_c**2)

    u = u_nom + lam * lg_h
    return FilterResult(
        u=u,
        theta_x=theta_d + psi,
        upsilon=upsilon,
        xi=xi,
        zeta=zeta,
        lambda_val=lam,
        constraint_active=lam > 0.0,
    )


def od_issf_filter(
    sys: DisturbedSystem,
    bar: BarrierSpec,
    k_d,
    x,
    t: float = 0.0,
    geometry: Optional[SafeSetGeometry] = None,
    legacy_psi_c: Optional[float] = None,
) -> FilterResult:
    """Filter the nominal law k_d through the optimal-decay QP at state x."""
    x = np.asarray(x, dtype=float)
    if geometry is not None and not geometry.in_domain(x):
        raise DomainError(f"state outside barrier domain (h + b <= 0) at x={x}")
    lie = eval_lie(sys, bar, x)
    u_nom = call_law(k_d, x, t)
    return solve_decay_filter(
        lie.lf_h,
        lie.lg_h,
        lie.lw_h,
        float(bar.alpha(lie.h_val)),
        u_nom,
        bar.epsilon,
        bar.theta_d,
        bar.p_weight,
        x=x,
        legacy_psi_c=legacy_psi_c,
    )


def od_issf_virtual_filter(top: DisturbedSystem, bar: BarrierSpec, k_d, x1, **kw) -> FilterResult:
    """Same filter with the next state block treated as the (virtual) input.

    ``top`` must be the layer-restricted system whose g column space is the
    virtual channel; otherwise identical to :func:`od_issf_filter`.
    """
    return od_issf_filter(top, bar, k_d, x1, **kw)


class OdIssfController:
    """Stateful wrapper: a feedback law that filters a nominal through the QP.

    Exposes ``control(x, t)`` for closed-loop integration and ``result(x, t)``
    for diagnostics recording (realized decay scale, KKT multiplier).
    """

    time_varying = True

    def __init__(self, sys, bar, nominal, geometry=None, legacy_psi_c=None):
        self.sys = sys
        self.bar = bar
        self.nominal = nominal
        self.geometry = geometry
        self.legacy_psi_c = legacy_psi_c

    def result(self, x, t=0.0) -> FilterResult:
        return od_issf_filter(
            self.sys, self.bar, self.nominal, x, t=t,
            geometry=self.geometry, legacy_psi_c=self.legacy_psi_c,
        )

    def control(self, x, t=0.0) -> np.ndarray:
        return self.result(x, t).u
