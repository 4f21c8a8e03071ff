"""Expected receiver observations over a Poisson field of transmitters.

Expectations follow from Campbell's theorem (all transmitters) and the
nearest-distance law (nearest transmitter); the remaining transmitters'
share is computed as its own double integral rather than by subtraction,
so ``E_nearest + E_others == E_all`` is a genuine check.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import channel
from .core import ConvergenceError, Deployment, DomainError, Medium, ReceiverKind
from .quadrature import PRODUCTION_QUAD, QuadratureConfig, QuadResult, _W20, _X20, integrate_semi_infinite


@dataclass(frozen=True)
class PhiKernel:
    """Per-transmitter observed fraction over one sampling window.

    Absorbing: fraction absorbed during ``[t, t + T_ss]``.
    Passive: change in the fraction inside the receiver between ``t`` and
    ``t + T_ss``; at ``t = 0`` the first sample is identically zero so only
    ``F_PS(T_ss)`` is evaluated. ``PhiKernel(kind, 0, t)`` therefore gives
    the *current* observation at time ``t`` for both receivers.
    """

    kind: ReceiverKind
    t: float
    T_ss: float
    medium: Medium
    r_r: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ReceiverKind(self.kind))
        if self.t < 0 or self.T_ss < 0:
            raise DomainError("kernel window must have t >= 0 and T_ss >= 0")

    def __call__(self, r):
        if self.kind is ReceiverKind.ABSORBING:
            return channel.fa_net_fraction(r, self.t, self.T_ss, self.medium, self.r_r)
        if self.T_ss == 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        upper = channel.ps_fraction(r, self.t + self.T_ss, self.medium, self.r_r)
        if self.t == 0:
            return upper
        return upper - channel.ps_fraction(r, self.t, self.medium, self.r_r)

    @property
    def length_scale(self) -> float:
        """Diffusion length reached by the end of the window."""
        return max(math.sqrt(4.0 * self.medium.D * (self.t + self.T_ss)), 0.05 * self.r_r)


def _nearest_scale(lambda_a: float, r_r: float) -> float:
    """Width of the nearest-distance law (median minus r_r)."""
    median = (r_r**3 + 3.0 * math.log(2.0) / (4.0 * math.pi * lambda_a)) ** (1.0 / 3.0)
    return max(median - r_r, 1e-9 * r_r)


def _r2_integral(kernel: PhiKernel, quad: QuadratureConfig) -> QuadResult:
    return integrate_semi_infinite(lambda r: kernel(r) * r * r, kernel.r_r, quad, scale=kernel.length_scale)


def expected_all(kernel: PhiKernel, deployment: Deployment, N_tx: float, quad: QuadratureConfig = PRODUCTION_QUAD) -> float:
    """Expected observation due to all transmitters, 4 pi N_tx lambda int Phi r^2 dr."""
    res = _r2_integral(kernel, quad)
    return 4.0 * math.pi * N_tx * deployment.lambda_a * float(res.value)


def expected_nearest(kernel: PhiKernel, deployment: Deployment, N_tx: float, quad: QuadratureConfig = PRODUCTION_QUAD) -> float:
    """Expected observation due to the nearest transmitter only."""
    lam, r_r = deployment.lambda_a, kernel.r_r
    c = 4.0 * math.pi * lam / 3.0

    def integrand(r):
        return kernel(r) * r * r * np.exp(-c * (r**3 - r_r**3))

    scale = min(kernel.length_scale, _nearest_scale(lam, r_r))
    res = integrate_semi_infinite(integrand, r_r, quad, scale=scale)
    return 4.0 * math.pi * lam * N_tx * float(res.value)


class TailIntegral:
    """x -> int_x^inf f(r) dr, built from one adaptive sweep of ``f``.

    The accepted mesh of the sweep is reused: each query integrates only the
    partial interval containing ``x`` and adds the precomputed suffix sum.
    """

    def __init__(self, f, lower: float, quad: QuadratureConfig, scale: float):
        self._f = f
        res = integrate_semi_infinite(f, lower, quad, scale=scale)
        self.total = float(res.value)
        self.lo, self.hi = res.lo, res.hi
        self._suffix = np.concatenate([np.cumsum(res.parts[::-1])[::-1], [0.0]])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        out = np.zeros(flat.shape)
        k = np.searchsorted(self.lo, flat, side="right") - 1
        inside = (k >= 0) & (flat < self.hi[-1])
        below = k < 0
        out[below] = self.total
        if np.any(inside):
            ki, xi = k[inside], flat[inside]
            b = self.hi[ki]
            half = 0.5 * (b - xi)
            mid = 0.5 * (b + xi)
            nodes = mid[:, None] + half[:, None] * _X20[None, :]
            partial = half * (self._f(nodes.ravel()).reshape(nodes.shape) @ _W20)
            out[inside] = partial + self._suffix[ki + 1]
        return out.reshape(x.shape)


def expected_others(kernel: PhiKernel, deployment: Deployment, N_tx: float, quad: QuadratureConfig = PRODUCTION_QUAD) -> float:
    """Expected observation due to every transmitter except the nearest one.

    (4 pi lambda)^2 N_tx int_{r_r}^inf T(x) x^2 exp(-c(x^3 - r_r^3)) dx with
    T(x) = int_x^inf Phi(r) r^2 dr held as a :class:`TailIntegral`.
    """
    lam, r_r = deployment.lambda_a, kernel.r_r
    c = 4.0 * math.pi * lam / 3.0
    tail = TailIntegral(lambda r: kernel(r) * r * r, r_r, quad, kernel.length_scale)

    def outer(x):
        return tail(x) * x * x * np.exp(-c * (x**3 - r_r**3))

    scale = min(kernel.length_scale, _nearest_scale(lam, r_r))
    res = integrate_semi_infinite(outer, r_r, quad, scale=scale)
    return (4.0 * math.pi * lam) ** 2 * N_tx * float(res.value)


@dataclass(frozen=True)
class Expectation:
    t: float
    nearest: float
    others: float
    all: float


def expected_breakdown(kernel: PhiKernel, deployment: Deployment, N_tx: float, quad: QuadratureConfig = PRODUCTION_QUAD) -> Expectation:
    return Expectation(
        kernel.t,
        expected_nearest(kernel, deployment, N_tx, quad),
        expected_others(kernel, deployment, N_tx, quad),
        expected_all(kernel, deployment, N_tx, quad),
    )


def sweep_expected(kind, times, T_ss, medium: Medium, r_r: float, deployment: Deployment, N_tx: float,
                   quad: QuadratureConfig = PRODUCTION_QUAD, threads: int = 1) -> list[Expectation]:
    """Breakdown for each window start in ``times``; results keep input order."""
    kernels = [PhiKernel(kind, float(t), T_ss, medium, r_r) for t in times]

    def work(k):
        return expected_breakdown(k, deployment, N_tx, quad)

    if threads <= 1:
        return [work(k) for k in kernels]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, kernels))


def _require_no_degradation(medium: Medium):
    if medium.k_d != 0:
        raise DomainError("closed form only holds without degradation (k_d = 0)")


def fa_closed_net(t, T_ss, deployment: Deployment, N_tx: float, medium: Medium, r_r: float):
    """Closed-form expected net absorption during ``[t, t + T_ss]`` (k_d = 0)."""
    _require_no_degradation(medium)
    D, lam = medium.D, deployment.lambda_a
    t = np.asarray(t, dtype=float)
    val = 4 * N_tx * math.sqrt(math.pi) * lam * r_r * (
        D * math.sqrt(math.pi) * T_ss + 2 * math.sqrt(D) * r_r * (np.sqrt(T_ss + t) - np.sqrt(t))
    )
    return float(val) if val.ndim == 0 else val


def fa_closed_cumulative(t, deployment: Deployment, N_tx: float, medium: Medium, r_r: float):
    """Closed-form expected total absorption by time ``t`` (k_d = 0)."""
    _require_no_degradation(medium)
    D, lam = medium.D, deployment.lambda_a
    t = np.asarray(t, dtype=float)
    val = 4 * N_tx * math.sqrt(math.pi) * lam * r_r * (D * t * math.sqrt(math.pi) + 2 * r_r * np.sqrt(D * t))
    return float(val) if val.ndim == 0 else val


def fa_asymptotic_net(deployment: Deployment, N_tx: float, medium: Medium, r_r: float, T_ss: float) -> float:
    """Long-time limit of the net absorption per window: 4 pi N_tx lambda r_r D T_ss."""
    _require_no_degradation(medium)
    return 4.0 * math.pi * N_tx * deployment.lambda_a * r_r * medium.D * T_ss


__all__ = [
    "ConvergenceError",
    "Expectation",
    "PhiKernel",
    "TailIntegral",
    "expected_all",
    "expected_breakdown",
    "expected_nearest",
    "expected_others",
    "fa_asymptotic_net",
    "fa_closed_cumulative",
    "fa_closed_net",
    "sweep_expected",
]
