"""Numerical certification: QP oracle and sampling-based barrier checks.

Every check here is sampling-based numerical evidence, not proof: rank
tolerance 1e-8, margin strictness threshold 1e-10, seeded reproducible
sampling. Verdicts are "pass", "fail", or "vacuous-pass" — the last meaning
the check found nothing to falsify (e.g. no zero-set point was located),
which is reported distinctly so suites can demand a genuine hit where the
theory predicts one.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .barrier import BarrierSpec, SafeSetGeometry, eval_lie
from .dynamics import DisturbedSystem
from .errors import SamplerError

RANK_TOL = 1e-8
MARGIN_TOL = 1e-10


# -- sampling ------------------------------------------------------------


@dataclass(frozen=True)
class BoxRegionSampler:
    """Rejection sampler: uniform on a box, filtered by a predicate.

    The sets D \\ Int(S) are implicit, so a user-declared bounding box is the
    carrier; the predicate keeps h <= 0 and h + b > 0.
    """

    lo: np.ndarray
    hi: np.ndarray
    predicate: Callable[[np.ndarray], bool]
    max_tries_factor: int = 200

    def draw(self, rng, count):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        out = []
        tries = 0
        budget = self.max_tries_factor * count
        while len(out) < count:
            if tries >= budget:
                raise SamplerError(
                    f"sampler exhausted: {len(out)}/{count} accepted after {tries} tries"
                )
            batch = rng.uniform(lo, hi, size=(min(count * 4, budget - tries), lo.size))
            tries += batch.shape[0]
            for x in batch:
                if self.predicate(x):
                    out.append(x)
                    if len(out) == count:
                        break
        return np.array(out)


def exterior_sampler(bar: BarrierSpec, geom: SafeSetGeometry, lo, hi) -> BoxRegionSampler:
    """Sampler for D \\ Int(S) = {h <= 0 < h + b} inside a declared box."""

    def pred(x):
        hv = float(bar.h(x))
        if hv > 0.0:
            return False
        return not math.isfinite(geom.b) or hv + geom.b > 0.0

    return BoxRegionSampler(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), pred)


# -- reports -------------------------------------------------------------


@dataclass
class SampleReport:
    """Outcome of a sampling check; violations are sorted worst-first."""

    samples_checked: int
    violations: list = field(default_factory=list)  # (state, margin)
    min_margin: float = math.inf
    verdict: str = "pass"
    zero_set_hits: int = 0
    note: str = "numerical evidence (sampling), not a proof"

    def finalize(self, vacuous_ok=False):
        self.violations.sort(key=lambda sm: sm[1])
        if self.violations:
            self.verdict = "fail"
        elif self.zero_set_hits == 0 and not vacuous_ok:
            self.verdict = "vacuous-pass"
        else:
            self.verdict = "pass"
        return self

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "min_margin": None if math.isinf(self.min_margin) else self.min_margin,
            "samples_checked": self.samples_checked,
            "zero_set_hits": self.zero_set_hits,
            "counterexamples": [
                {"state": np.asarray(x, dtype=float).tolist(), "margin": float(m)}
                for x, m in self.violations[:50]
            ],
            "note": self.note,
        }

    def to_json(self, path):
        write_json_atomic(path, self.to_dict())


def write_json_atomic(path, payload):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- QP oracle -----------------------------------------------------------


@dataclass(frozen=True)
class OracleSolution:
    u: Optional[np.ndarray]
    omega: Optional[float]
    objective: Optional[float]
    feasible: bool
    case: str


def qp_oracle(lf_h, lg_h, lw_h, alpha_h, epsilon, theta_d, p, k_d) -> OracleSolution:
    """Brute-force KKT case enumeration for the two-block decay QP.

    Enumerates the active sets of {barrier constraint, omega bound}, keeps
    the stationary points that satisfy primal and dual feasibility, and
    returns the one of least objective. Independent of the closed form: no
    lambda/psi expressions are reused beyond the constraint left-hand side.
    """
    b = np.asarray(lg_h, dtype=float).reshape(-1)
    lw = np.asarray(lw_h, dtype=float).reshape(-1)
    k_d = np.asarray(k_d, dtype=float).reshape(-1)
    alpha_h = float(alpha_h)
    bb = float(b @ b)

    # constraint at the shifted origin (u = k_d, omega = theta_d)
    r0 = float(lf_h + b @ k_d + theta_d * alpha_h - (lw @ lw) / epsilon)

    def objective(du, domega):
        return 0.5 * float(du @ du) + 0.5 * p * domega**2

    def feasible(du, domega, tol=1e-10):
        return (r0 + b @ du + alpha_h * domega >= -tol) and (domega >= -tol)

    candidates = []

    # case A: both constraints inactive
    if feasible(np.zeros_like(k_d), 0.0):
        candidates.append((np.zeros_like(k_d), 0.0, "inactive"))

    # case B: barrier active, omega bound slack (du = lam b, domega = lam alpha / p)
    denom = bb + alpha_h**2 / p
    if denom > 0.0:
        lam = -r0 / denom
        domega = lam * alpha_h / p
        if lam >= 0.0 and domega >= 0.0:
            candidates.append((lam * b, domega, "barrier"))

    # case C: barrier and omega bound both active (domega = 0, min-norm du)
    if bb > 0.0:
        du = -r0 * b / bb
        lam = -r0 / bb
        mu = -lam * alpha_h  # multiplier of the omega bound
        if lam >= 0.0 and mu >= -1e-14 and feasible(du, 0.0):
            candidates.append((du, 0.0, "both"))

    if not candidates:
        return OracleSolution(u=None, omega=None, objective=None, feasible=False, case="infeasible")

    du, domega, case = min(candidates, key=lambda c: objective(c[0], c[1]))
    return OracleSolution(
        u=k_d + du,
        omega=theta_d + domega,
        objective=objective(du, domega),
        feasible=True,
        case=case,
    )


# -- zero-set refinement ---------------------------------------------------


def _gauss_newton_zero(resfn, x0, iters=20, step=1e-7, tol=1e-12):
    """Drive a small residual vector to zero with min-norm Gauss-Newton steps.

    The Jacobian comes from central differences; underdetermined systems take
    the pseudoinverse (least-norm) step, so the iterate stays near the seed.
    """
    x = np.asarray(x0, dtype=float).copy()
    for _ in range(iters):
        r = np.atleast_1d(np.asarray(resfn(x), dtype=float))
        if np.linalg.norm(r) < tol:
            break
        cols = []
        for i in range(x.size):
            hs = step * (1.0 + abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += hs
            xm[i] -= hs
            cols.append((np.atleast_1d(resfn(xp)) - np.atleast_1d(resfn(xm))) / (2 * hs))
        jac = np.stack(cols, axis=-1)
        dx, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        if not np.all(np.isfinite(dx)):
            break
        x = x + dx
    return x


def lemma_margin(sys: DisturbedSystem, bar: BarrierSpec, x) -> float:
    """L_f h + theta_d alpha(h) - ||L_w h||^2 / eps, the strict-verification margin."""
    lie = eval_lie(sys, bar, x)
    return lie.lf_h + bar.theta_d * float(bar.alpha(lie.h_val)) - float(lie.lw_h @ lie.lw_h) / bar.epsilon


def check_od_issf(
    sys: DisturbedSystem,
    bar: BarrierSpec,
    geom: SafeSetGeometry,
    sampler: BoxRegionSampler,
    n_seeds=300,
    seed=0,
    rank_tol=RANK_TOL,
    margin_tol=MARGIN_TOL,
) -> SampleReport:
    """Falsification check of the zero-set implication.

    At points of D \\ Int(S) where ||L_g h|| <= rank_tol the margin
    L_f h + theta_d alpha(h) - ||L_w h||^2/eps must be strictly positive.
    Seeds from the sampler are refined onto the zero set by Gauss-Newton on
    L_g h; refined points that leave the region are discarded.
    """
    rng = np.random.default_rng(seed)
    seeds = sampler.draw(rng, n_seeds)
    report = SampleReport(samples_checked=len(seeds))

    def lg(x):
        return eval_lie(sys, bar, x).lg_h

    def in_region(x, slack=1e-10):
        hv = float(bar.h(x))
        if hv > slack:
            return False
        return not math.isfinite(geom.b) or hv + geom.b > 0.0

    def consider(x):
        m = lemma_margin(sys, bar, x)
        report.zero_set_hits += 1
        report.min_margin = min(report.min_margin, m)
        if m <= margin_tol:
            report.violations.append((x.copy(), m))

    for x0 in seeds:
        if float(np.linalg.norm(lg(x0))) <= rank_tol and in_region(x0):
            consider(x0)
            continue
        z = _gauss_newton_zero(lg, x0)
        if float(np.linalg.norm(lg(z))) <= rank_tol and in_region(z):
            consider(z)

    return report.finalize()


def check_prop1(
    sys: DisturbedSystem,
    bar: BarrierSpec,
    geom: SafeSetGeometry,
    sampler: BoxRegionSampler,
    n_samples=2000,
    seed=0,
    rank_tol=RANK_TOL,
) -> SampleReport:
    """Sufficient condition: L_g h never vanishes on D \\ Int(S).

    Pass iff min ||L_g h|| over the samples stays above the rank tolerance;
    a failing sample is reported with margin = ||L_g h|| - rank_tol < 0.
    """
    rng = np.random.default_rng(seed)
    samples = sampler.draw(rng, n_samples)
    report = SampleReport(samples_checked=len(samples))
    report.zero_set_hits = len(samples)  # every sample is a genuine probe here
    for x in samples:
        norm_lg = float(np.linalg.norm(eval_lie(sys, bar, x).lg_h))
        report.min_margin = min(report.min_margin, norm_lg - rank_tol)
        if norm_lg <= rank_tol:
            report.violations.append((x.copy(), norm_lg - rank_tol))
    return report.finalize()


def check_regular_values(
    bar: BarrierSpec,
    geom: SafeSetGeometry,
    kappas,
    center,
    ray_length=10.0,
    n_rays=200,
    seed=0,
    grad_tol=RANK_TOL,
) -> SampleReport:
    """Locate h = kappa points by root-tracing random rays; require grad != 0.

    kappa values must lie in (-b, 0]; levels with no located points leave the
    verdict vacuous for that kappa (reported through zero_set_hits).
    """
    rng = np.random.default_rng(seed)
    center = np.asarray(center, dtype=float)
    report = SampleReport(samples_checked=0)
    for kappa in kappas:
        if math.isfinite(geom.b) and not (-geom.b < kappa <= 0.0):
            raise ValueError(f"kappa={kappa} outside (-b, 0]")
        for _ in range(n_rays):
            direction = rng.normal(size=center.size)
            direction /= np.linalg.norm(direction)

            def along(t):
                return float(bar.h(center + t * direction)) - kappa

            report.samples_checked += 1
            t0, t1 = 0.0, ray_length
            f0 = along(t0)
            # march outward until the level is bracketed
            ts = np.linspace(0.0, t1, 33)
            bracket = None
            prev_t, prev_f = t0, f0
            for t in ts[1:]:
                ft = along(t)
                if prev_f == 0.0 or prev_f * ft <= 0.0:
                    bracket = (prev_t, t)
                    break
                prev_t, prev_f = t, ft
            if bracket is None:
                continue
            t_star = brentq(along, bracket[0], bracket[1], xtol=1e-12)
            x_star = center + t_star * direction
            grad_norm = float(np.linalg.norm(np.asarray(bar.grad_h(x_star), dtype=float)))
            report.zero_set_hits += 1
            report.min_margin = min(report.min_margin, grad_norm - grad_tol)
            if grad_norm <= grad_tol:
                report.violations.append((x_star, grad_norm - grad_tol))
    return report.finalize()


def matched_residual(sys: DisturbedSystem, x) -> float:
    """Largest least-squares residual of w(x) columns against range(g(x))."""
    g = np.atleast_2d(np.asarray(sys.g(np.asarray(x, dtype=float)), dtype=float))
    w = np.atleast_2d(np.asarray(sys.w(np.asarray(x, dtype=float)), dtype=float))
    phi, *_ = np.linalg.lstsq(g, w, rcond=None)
    resid = g @ phi - w
    return float(np.max(np.linalg.norm(resid, axis=0)))


def check_matched(
    sys: DisturbedSystem,
    samples,
    bar: Optional[BarrierSpec] = None,
    match_tol=1e-9,
    rank_tol=RANK_TOL,
):
    """Classify the disturbance channel as matched/unmatched per sample.

    Matched means every w column lies in span(g) (residual <= match_tol).
    When a barrier is supplied, additionally asserts the matched implication
    L_g h = 0 => ||L_w h|| <= match_tol at samples where it applies.
    """
    results = []
    implication_failures = []
    for x in samples:
        x = np.asarray(x, dtype=float)
        res = matched_residual(sys, x)
        is_matched = res <= match_tol
        results.append((x, res, is_matched))
        if bar is not None and is_matched:
            lie = eval_lie(sys, bar, x)
            if float(np.linalg.norm(lie.lg_h)) <= rank_tol and float(np.linalg.norm(lie.lw_h)) > match_tol:
                implication_failures.append((x, float(np.linalg.norm(lie.lw_h))))
    all_matched = all(m for _, _, m in results)
    return {
        "samples_checked": len(results),
        "matched": all_matched,
        "max_residual": max((r for _, r, _ in results), default=0.0),
        "per_sample": results,
        "implication_failures": implication_failures,
        "note": "numerical evidence (sampling), not a proof",
    }
