"""Composite barrier construction for strict-feedback systems.

Given a top-layer barrier h1 over x1 and a smooth safeguarding virtual
controller k1, the composite

    h(x) = h1(x1) - 1/(2 mu) ||x2 - k1(x1)||^2

is a valid optimal-decay barrier for the two-layer cascade whenever the
bottom input matrix has full row rank off the safe set's interior. Its
gradient follows the chain rule:

    dh/dx1 = dh1/dx1 + (1/mu) (x2 - k1)^T dk1/dx1
    dh/dx2 = -(1/mu) (x2 - k1)^T

The construction nests: recursing over layers penalizes each block's
deviation from the safeguarding controller synthesized for the composite
one level up.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .barrier import BarrierSpec
from .dynamics import DisturbedSystem
from .errors import ParameterError, SamplerError, SynthesisInfeasibleError
from .synthesis import SmoothVirtualController, synth_virtual


@dataclass(frozen=True)
class Layer:
    """One block of a strict-feedback cascade.

    f, g, w take the stacked prefix state (x1, ..., xi); g multiplies the
    next block (or the input at the bottom layer) and w may depend only on
    the prefix.
    """

    f: Callable
    g: Callable
    w: Callable
    dim: int


@dataclass(frozen=True)
class StrictFeedbackSystem:
    layers: tuple
    m: int  # input dimension at the bottom layer
    p: int  # disturbance dimension

    @property
    def dims(self):
        return [layer.dim for layer in self.layers]

    @property
    def n(self):
        return sum(self.dims)

    def split(self, x):
        """Split a stacked state into per-layer blocks (Dual-aware)."""
        out, k = [], 0
        for layer in self.layers:
            out.append(x[k : k + layer.dim])
            k += layer.dim
        return out

    def prefix(self, x, i):
        """Stacked state of layers 0..i inclusive."""
        return x[: sum(self.dims[: i + 1])]

    def assemble(self) -> DisturbedSystem:
        """Full block-form system: drift chains g_i x_{i+1}, input at the bottom."""
        dims = self.dims
        n, m, p = self.n, self.m, self.p
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)

        def f(x):
            parts = []
            for i, layer in enumerate(self.layers):
                fi = np.asarray(layer.f(self.prefix(x, i)), dtype=float)
                if i + 1 < len(self.layers):
                    gi = np.asarray(layer.g(self.prefix(x, i)), dtype=float)
                    nxt = x[offsets[i + 1] : offsets[i + 2]]
                    fi = fi + gi @ np.asarray(nxt, dtype=float)
                parts.append(fi)
            return np.concatenate(parts)

        def g(x):
            mat = np.zeros((n, m))
            mat[offsets[-2] :, :] = np.asarray(self.layers[-1].g(x), dtype=float)
            return mat

        def w(x):
            return np.vstack(
                [np.asarray(layer.w(self.prefix(x, i)), dtype=float) for i, layer in enumerate(self.layers)]
            )

        return DisturbedSystem(n=n, m=m, p=p, f=f, g=g, w=w)

    def virtual_top(self, i) -> DisturbedSystem:
        """Layers 0..i as a system whose input is block i+1 (the virtual channel).

        Drift stacks the already-closed chain terms; only the last block's g
        feeds the virtual input.
        """
        dims = self.dims
        n_top = sum(dims[: i + 1])
        m_virt = dims[i + 1] if i + 1 < len(dims) else self.m
        offsets = np.concatenate([[0], np.cumsum(dims)]).astype(int)

        def f(x):
            parts = []
            for j in range(i + 1):
                fj = self.layers[j].f(self.prefix(x, j))
                if j < i:
                    gj = self.layers[j].g(self.prefix(x, j))
                    nxt = x[offsets[j + 1] : offsets[j + 2]]
                    fj = fj + ad.matvec(gj, nxt)
                parts.append(fj)
            return _concat(parts)

        def g(x):
            gi = self.layers[i].g(self.prefix(x, i))
            zero = np.zeros((n_top - dims[i], m_virt))
            return ad.vstack([zero, gi])

        def w(x):
            return ad.vstack([self.layers[j].w(self.prefix(x, j)) for j in range(i + 1)])

        return DisturbedSystem(n=n_top, m=m_virt, p=self.p, f=f, g=g, w=w)


def _concat(parts):
    """Concatenate 1-D blocks, Dual-aware."""
    if not any(isinstance(p, ad.Dual) for p in parts):
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])
    items = []
    for p in parts:
        if isinstance(p, ad.Dual):
            items.extend(p[i] for i in range(len(p)))
        else:
            items.extend(np.atleast_1d(np.asarray(p, dtype=float)))
    return ad.stack(items)


@dataclass(frozen=True)
class CompositeBarrier:
    """Backstepped barrier h = h1(x1) - 1/(2 mu) ||x2 - k1(x1)||^2."""

    h1: BarrierSpec
    k1: SmoothVirtualController
    mu: float
    n1: int
    n2: int

    def h(self, x):
        x1, x2 = x[: self.n1], x[self.n1 :]
        e = x2 - self.k1.k1(x1)
        return self.h1.h(x1) - ad.dot(e, e) / (2.0 * self.mu)

    def value_and_grad(self, x):
        """(h, grad h) sharing one controller value-and-jacobian pass."""
        x = np.asarray(x, dtype=float)
        x1, x2 = x[: self.n1], x[self.n1 :]
        k_val, jac = self.k1.with_jacobian(x1)
        e = x2 - k_val
        h1_val, h1_grad = self.h1.value_and_grad(x1)
        hv = h1_val - float(e @ e) / (2.0 * self.mu)
        d1 = h1_grad + (e @ jac.reshape(self.n2, self.n1)) / self.mu
        d2 = -e / self.mu
        return hv, np.concatenate([d1, d2])

    def grad_h(self, x):
        return self.value_and_grad(x)[1]

    def to_spec(self) -> BarrierSpec:
        return BarrierSpec(
            h=self.h,
            grad_h=self.grad_h,
            alpha=self.h1.alpha,
            epsilon=self.h1.epsilon,
            theta_d=self.h1.theta_d,
            p_weight=self.h1.p_weight,
            n=self.n1 + self.n2,
            fused=self.value_and_grad,
        )


def compose_barrier(h1: BarrierSpec, k1: SmoothVirtualController, mu: float, n1=None, n2=None) -> CompositeBarrier:
    """Penalize deviation of the virtual input from the safeguarding controller."""
    if mu <= 0:
        raise ParameterError("mu must be strictly positive")
    if n1 is None:
        n1 = h1.n
    if n1 is None:
        raise ParameterError("layer-1 state dimension unknown: set h1.n or pass n1")
    if n2 is None:
        try:
            probe = np.asarray(ad.value(k1.k1(np.zeros(n1))), dtype=float).reshape(-1)
        except SynthesisInfeasibleError:
            raise ParameterError("could not infer virtual-input dimension; pass n2 explicitly") from None
        n2 = probe.size
    return CompositeBarrier(h1=h1, k1=k1, mu=float(mu), n1=n1, n2=n2)


@dataclass(frozen=True)
class RankReport:
    """Minimum singular value of the bottom input matrix over a sample set."""

    samples_checked: int
    min_singular_value: float
    flagged: list  # (state, sigma_min) below tolerance
    tol: float

    @property
    def ok(self):
        return not self.flagged


def check_full_row_rank(matfn, samples, tol=1e-8) -> RankReport:
    samples = list(samples)
    if not samples:
        raise SamplerError("empty sample set for rank check")
    flagged, min_sv = [], np.inf
    for x in samples:
        mat = np.atleast_2d(np.asarray(matfn(np.asarray(x, dtype=float)), dtype=float))
        sv = np.linalg.svd(mat, compute_uv=False)
        smin = float(sv[min(mat.shape) - 1])
        min_sv = min(min_sv, smin)
        if smin < tol:
            flagged.append((np.asarray(x, dtype=float), smin))
    return RankReport(samples_checked=len(samples), min_singular_value=min_sv, flagged=flagged, tol=tol)


def check_row_rank_g2(sfs: StrictFeedbackSystem, samples, tol=1e-8) -> RankReport:
    """Full-row-rank check of the bottom layer's input matrix over samples.

    The samples should cover the region outside the safe set's interior,
    where the rank condition is needed.
    """
    return check_full_row_rank(sfs.layers[-1].g, samples, tol=tol)


def recursive_compose(
    sfs: StrictFeedbackSystem,
    h1: BarrierSpec,
    mus: Sequence[float],
    sigmas: Sequence[float],
) -> CompositeBarrier:
    """Peel layers one at a time: synthesize, penalize deviation, repeat.

    Layer 1 controllers are differentiated by forward AD; deeper layers fall
    back to central differences for their jacobians (composite gradients are
    not dual-evaluable). Synthesis failure propagates with the layer index.
    """
    n_layers = len(sfs.layers)
    if n_layers < 2:
        raise ParameterError("recursive composition needs at least two layers")
    if len(mus) != n_layers - 1 or len(sigmas) != n_layers - 1:
        raise ParameterError(f"need {n_layers - 1} mus/sigmas for {n_layers} layers")
    bar = h1
    composite = None
    for i in range(n_layers - 1):
        top = sfs.virtual_top(i)
        k_i = _tag_layer(synth_virtual(top, bar, sigmas[i], jac_mode="ad" if i == 0 else "fd"), i + 1)
        composite = compose_barrier(bar, k_i, mus[i], n1=top.n, n2=top.m)
        bar = composite.to_spec()
    return composite


def _tag_layer(ctrl: SmoothVirtualController, layer: int) -> SmoothVirtualController:
    """Annotate lazy synthesis failures with the layer they came from."""

    def k1(x1):
        try:
            return ctrl.k1(x1)
        except SynthesisInfeasibleError as exc:
            raise SynthesisInfeasibleError(exc.x, exc.a, layer=layer) from None

    def jacobian(x1):
        try:
            return ctrl.jacobian(x1)
        except SynthesisInfeasibleError as exc:
            raise SynthesisInfeasibleError(exc.x, exc.a, layer=layer) from None

    def fused(x1):
        try:
            return ctrl.with_jacobian(x1)
        except SynthesisInfeasibleError as exc:
            raise SynthesisInfeasibleError(exc.x, exc.a, layer=layer) from None

    return SmoothVirtualController(k1=k1, jacobian=jacobian, sigma=ctrl.sigma, value_and_jacobian=fused)
