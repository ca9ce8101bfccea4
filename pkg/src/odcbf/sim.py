"""Fixed-step closed-loop integration, trajectory recording, safety metrics.

Fixed-step RK4 (default dt = 1e-3 s over a 10 s horizon) rather than an
adaptive scheme: reproducibility beats adaptivity for acceptance runs. The
disturbance is sampled at stage times inside the RK4 stages, so time-varying
signals like sin(t) integrate at full order. Discrete-time safety checks
carry a small slack (default 1e-6) because the continuous-time guarantees
degrade under sampling; the step-halving test guards against that slack
hiding real violations.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .barrier import BarrierSpec, SafeSetGeometry, gamma_margin
from .dynamics import DisturbanceSignal, DisturbedSystem, call_law, close_loop
from .errors import (
    InfeasiblePointError,
    IntegrationError,
    MarginUndefinedError,
    ParameterError,
    SimulationAbort,
)
from .verify import write_json_atomic


@dataclass(frozen=True)
class RolloutConfig:
    dt: float = 1e-3
    t_final: float = 10.0
    integrator: str = "rk4"  # "rk4" | "euler"
    record_every: int = 1
    safety_slack: float = 1e-6

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError("dt must be positive")
        if self.t_final < self.dt:
            raise ParameterError("t_final must be at least dt")
        if self.integrator not in ("rk4", "euler"):
            raise ParameterError(f"unknown integrator {self.integrator!r}")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")


def rk4_step(field, t, x, dt):
    """Classical 4-stage Runge-Kutta update."""
    if dt <= 0:
        raise ParameterError("dt must be positive")
    k1 = np.asarray(field(t, x), dtype=float)
    k2 = np.asarray(field(t + 0.5 * dt, x + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(field(t + 0.5 * dt, x + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(field(t + dt, x + dt * k3), dtype=float)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(t, x)
    return out


def euler_step(field, t, x, dt):
    out = x + dt * np.asarray(field(t, x), dtype=float)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(t, x)
    return out


@dataclass
class Trajectory:
    """Recorded rollout: one row per recorded step, columns share length."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    omegas: np.ndarray
    disturbances: np.ndarray
    h_values: np.ndarray
    layer_h_values: np.ndarray
    truncated: bool = False
    exit_reason: Optional[str] = None

    def to_csv(self, path):
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        p = self.disturbances.shape[1]
        header = (
            ["t"]
            + [f"x_{i + 1}" for i in range(n)]
            + [f"u_{i + 1}" for i in range(m)]
            + [f"d_{i + 1}" for i in range(p)]
            + ["h", "h_layer", "theta"]
        )
        d = os.path.dirname(os.path.abspath(os.fspath(path)))
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(header)
                for i in range(len(self.times)):
                    row = (
                        [self.times[i]]
                        + list(self.states[i])
                        + list(self.inputs[i])
                        + list(self.disturbances[i])
                        + [self.h_values[i], self.layer_h_values[i], self.omegas[i]]
                    )
                    writer.writerow([repr(float(v)) for v in row])
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def to_json(self, path):
        write_json_atomic(
            path,
            {
                "times": self.times.tolist(),
                "states": self.states.tolist(),
                "inputs": self.inputs.tolist(),
                "omegas": self.omegas.tolist(),
                "disturbances": self.disturbances.tolist(),
                "h": self.h_values.tolist(),
                "h_layer": self.layer_h_values.tolist(),
                "truncated": self.truncated,
                "exit_reason": self.exit_reason,
            },
        )


@dataclass
class SafetyMetrics:
    min_h: float
    min_layer_h: float
    max_violation: float
    issf_bound_satisfied: bool
    theta_floor_ok: bool
    gamma_delta: Optional[float] = None

    def to_dict(self):
        return {
            "min_h": self.min_h,
            "min_layer_h": self.min_layer_h,
            "max_violation": self.max_violation,
            "issf_bound_satisfied": self.issf_bound_satisfied,
            "theta_floor_ok": self.theta_floor_ok,
            "gamma_delta": self.gamma_delta,
        }


def rollout(
    sys: DisturbedSystem,
    law,
    disturbance: DisturbanceSignal,
    x0,
    cfg: RolloutConfig,
    bar: BarrierSpec,
    layer_h: Optional[Callable] = None,
    geometry: Optional[SafeSetGeometry] = None,
):
    """Integrate the closed loop, recording h, the decay scale, and inputs.

    Halts with a flagged, truncated trajectory if the state leaves the
    barrier domain; aborts with the step index on controller infeasibility.
    The declared disturbance bound is enforced at every recorded step.
    """
    x = np.asarray(x0, dtype=float).copy()
    n_steps = int(round(cfg.t_final / cfg.dt))
    field_fn = close_loop(sys, law, disturbance)
    stepper = rk4_step if cfg.integrator == "rk4" else euler_step
    has_result = hasattr(law, "result")

    times, states, inputs, omegas, dists, hs, layer_hs = [], [], [], [], [], [], []
    truncated = False
    exit_reason = None

    def check_bound(step, t, x):
        d = disturbance.at(t, x)
        if float(np.linalg.norm(d)) > disturbance.sup_norm + 1e-9:
            raise SimulationAbort(
                step, t,
                f"disturbance exceeds declared bound ||d||={np.linalg.norm(d):.6g} > {disturbance.sup_norm:.6g}",
            )
        return d

    def record(t, x):
        d = disturbance.at(t, x)
        if has_result:
            res = law.result(x, t)
            u, theta = res.u, res.theta_x
        else:
            u, theta = call_law(law, x, t), math.nan
        times.append(t)
        states.append(x.copy())
        inputs.append(np.asarray(u, dtype=float))
        omegas.append(theta)
        dists.append(d)
        hs.append(float(bar.h(x)))
        layer_hs.append(float(layer_h(x)) if layer_h is not None else math.nan)

    check_bound(0, 0.0, x)
    try:
        record(0.0, x)
    except InfeasiblePointError as exc:
        raise SimulationAbort(0, 0.0, f"controller infeasible: {exc}") from exc

    for k in range(n_steps):
        t = k * cfg.dt
        check_bound(k, t, x)
        try:
            x = stepper(field_fn, t, x, cfg.dt)
        except InfeasiblePointError as exc:
            raise SimulationAbort(k, t, f"controller infeasible: {exc}") from exc
        t_next = (k + 1) * cfg.dt
        if geometry is not None and not geometry.in_domain(x):
            truncated = True
            exit_reason = f"left barrier domain at t={t_next:.6g}"
        if (k + 1) % cfg.record_every == 0 or truncated or k + 1 == n_steps:
            try:
                record(t_next, x)
            except InfeasiblePointError as exc:
                raise SimulationAbort(k + 1, t_next, f"controller infeasible: {exc}") from exc
        if truncated:
            break

    traj = Trajectory(
        times=np.asarray(times, dtype=float),
        states=np.asarray(states, dtype=float),
        inputs=np.asarray(inputs, dtype=float),
        omegas=np.asarray(omegas, dtype=float),
        disturbances=np.asarray(dists, dtype=float),
        h_values=np.asarray(hs, dtype=float),
        layer_h_values=np.asarray(layer_hs, dtype=float),
        truncated=truncated,
        exit_reason=exit_reason,
    )
    return traj, compute_metrics(traj, bar, disturbance.sup_norm, cfg.safety_slack)


def compute_metrics(traj: Trajectory, bar: BarrierSpec, delta: float, slack=1e-6) -> SafetyMetrics:
    min_h = float(np.min(traj.h_values))
    min_layer = float(np.nanmin(traj.layer_h_values)) if np.any(np.isfinite(traj.layer_h_values)) else math.nan
    try:
        gamma = gamma_margin(bar, delta)
        issf_ok = min_h >= -gamma - slack
    except MarginUndefinedError:
        gamma = None
        issf_ok = False
    finite_omegas = traj.omegas[np.isfinite(traj.omegas)]
    theta_ok = bool(np.all(finite_omegas >= bar.theta_d - 1e-12)) if finite_omegas.size else True
    return SafetyMetrics(
        min_h=min_h,
        min_layer_h=min_layer,
        max_violation=max(0.0, -min_h),
        issf_bound_satisfied=issf_ok,
        theta_floor_ok=theta_ok,
        gamma_delta=gamma,
    )


@dataclass(frozen=True)
class RolloutSetup:
    """One sweep cell: everything rollout() needs, prebuilt."""

    sys: DisturbedSystem
    law: object
    disturbance: DisturbanceSignal
    x0: np.ndarray
    bar: BarrierSpec
    layer_h: Optional[Callable] = None
    geometry: Optional[SafeSetGeometry] = None


def sweep(cells: dict, cfg: RolloutConfig) -> dict:
    """One rollout per cell; per-cell errors are captured, not raised.

    Returns {label: SafetyMetrics | {"error": str}}; deterministic given the
    cells (rollouts draw no randomness).
    """
    table = {}
    for label, cell in cells.items():
        try:
            _, metrics = rollout(
                cell.sys, cell.law, cell.disturbance, cell.x0, cfg, cell.bar,
                layer_h=cell.layer_h, geometry=cell.geometry,
            )
            table[label] = metrics
        except Exception as exc:  # noqa: BLE001 - sweep must not abort on one cell
            table[label] = {"error": f"{type(exc).__name__}: {exc}"}
    return table


def sweep_table_to_dict(table: dict) -> dict:
    out = {}
    for label, entry in table.items():
        out[str(label)] = entry.to_dict() if isinstance(entry, SafetyMetrics) else entry
    return out
