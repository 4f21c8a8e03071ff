"""Observation models, bit error probabilities and threshold demodulation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from . import channel
from .core import ConvergenceError, Deployment, DetectorMode, DetectorSpec, DomainError, LinkParams, ReceiverKind
from .geometry import TxField
from .quadrature import PRODUCTION_QUAD, QuadratureConfig, integrate_semi_infinite

CLAMP_REPORT = 1e-9


class ObservationModel(str, enum.Enum):
    BINOMIAL = "binomial"
    POISSON = "poisson"


def pulse_response(r, n_bits: int, link: LinkParams) -> np.ndarray:
    """Per-pulse observed fraction ``G[m](r)`` for a pulse sent ``m`` bits earlier.

    Absorbing: fraction absorbed during ``[m T_b, (m+1) T_b]``.
    Passive: fraction inside at ``(m+1) T_b``. Shape ``(n_bits,) + r.shape``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < link.r_r):
        raise DomainError(f"distance must be >= receiver radius {link.r_r}")
    T_b = link.protocol.T_b
    edges = T_b * np.arange(n_bits + 1).reshape((-1,) + (1,) * r.ndim)
    if link.kind is ReceiverKind.ABSORBING:
        cum = channel.fa_cum_fraction(r[None], edges, link.medium, link.r_r)
        return np.maximum(np.diff(cum, axis=0), 0.0)
    return channel.ps_fraction(r[None], edges[1:], link.medium, link.r_r)


def _bits(bits, j: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64)[:j]
    if b.size < j:
        raise DomainError(f"need at least {j} bits, got {b.size}")
    return b


def r_kernel(j: int, bits: Sequence[int], r, link: LinkParams):
    """Aggregate fraction R(j | r) = sum_i b_i G[j - i](r) seen in bit ``j`` (1-based)."""
    if j < 1:
        raise DomainError("bit index starts at 1")
    b = _bits(bits, j)
    g = pulse_response(r, j, link)
    # b_i pairs with a pulse sent j - i bits earlier
    weights = b[::-1].astype(float)
    out = np.tensordot(weights, g, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


def observation_sample(field: TxField, j: int, bits, link: LinkParams, model: ObservationModel,
                       rng: np.random.Generator, size=None):
    """Draw the demodulation variable of bit ``j`` for a fixed field.

    Returns an int, or an array of ``size`` independent draws.
    """
    model = ObservationModel(model)
    shape = () if size is None else tuple(np.atleast_1d(size))
    if len(field) == 0:
        return 0 if size is None else np.zeros(shape, dtype=np.int64)
    b = _bits(bits, j)
    N_tx = link.protocol.N_tx
    g = pulse_response(field.distances, j, link)  # (j, n)
    if model is ObservationModel.POISSON:
        mean = N_tx * float(np.tensordot(b[::-1].astype(float), g, axes=(0, 0)).sum())
        out = rng.poisson(mean, size=shape)
    else:
        lags = j - 1 - np.flatnonzero(b)
        p = np.clip(g[lags], 0.0, 1.0).ravel()
        out = rng.binomial(N_tx, p, size=shape + p.shape).sum(axis=-1)
    return int(out) if size is None else np.asarray(out, dtype=np.int64)


def _scale(link: LinkParams, j: int) -> float:
    return max(math.sqrt(4.0 * link.medium.D * j * link.protocol.T_b), 0.05 * link.r_r)


def laplace_rtot(s: float, j: int, bits, link: LinkParams, deployment: Deployment,
                 quad: QuadratureConfig = PRODUCTION_QUAD) -> float:
    """Laplace transform E[exp(-s R_tot)] of the aggregate fraction via the PGFL."""
    if s < 0:
        raise DomainError("Laplace argument must be >= 0")
    b = _bits(bits, j)
    if s == 0 or not b.any():
        return 1.0
    res = integrate_semi_infinite(
        lambda r: -np.expm1(-s * r_kernel(j, b, r, link)) * r * r, link.r_r, quad, scale=_scale(link, j)
    )
    return math.exp(-4.0 * math.pi * deployment.lambda_a * float(res.value))


def complete_bell(x: Sequence[float]) -> np.ndarray:
    """Complete Bell polynomials B_0..B_n of ``x = (x_1, ..., x_n)``.

    B_n = sum_{i=1}^{n} C(n-1, i-1) x_i B_{n-i}, B_0 = 1.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    B = np.zeros(n + 1)
    B[0] = 1.0
    for m in range(1, n + 1):
        B[m] = sum(math.comb(m - 1, i - 1) * x[i - 1] * B[m - i] for i in range(1, m + 1))
    return B


def bell_by_partitions(n: int, x: Sequence[float]) -> float:
    """B_n as the explicit sum over (n_1..n_n) with sum k n_k = n.

    Exponential in ``n``; kept for cross-checking :func:`complete_bell`.
    """
    if n == 0:
        return 1.0
    total = 0.0
    ranges = [range(n // k + 1) for k in range(1, n + 1)]
    for counts in product(*ranges):
        if sum(k * c for k, c in enumerate(counts, start=1)) != n:
            continue
        term = math.factorial(n)
        for k, c in enumerate(counts, start=1):
            term *= x[k - 1] ** c / (math.factorial(c) * math.factorial(k) ** c)
        total += term
    return total


def _bell_over_factorial(x: np.ndarray, n_max: int) -> np.ndarray:
    """y_n = B_n / n! for n = 0..n_max, via n y_n = sum_i i (x_i / i!) y_{n-i}."""
    x = np.asarray(x, dtype=float)
    scaled = np.array([x[i - 1] / math.factorial(i) for i in range(1, n_max + 1)])
    return _bell_scaled(scaled, n_max)


def _bell_scaled(a: np.ndarray, n_max: int) -> np.ndarray:
    """Same recursion taking ``a_i = x_i / i!`` directly (no factorial overflow)."""
    y = np.zeros(n_max + 1)
    y[0] = 1.0
    for n in range(1, n_max + 1):
        i = np.arange(1, n + 1)
        y[n] = float(np.dot(i * a[:n], y[n - i])) / n
    return y


@dataclass(frozen=True)
class BerResult:
    miss: float
    false_alarm: float
    p_error: float
    P1: float
    P0: float
    clamped: bool = False


@dataclass(frozen=True)
class _Moments:
    exponent: float  # lambda * int (1 - e^{-N R}) 4 pi r^2 dr
    scaled: np.ndarray  # x_k / k! = 4 pi lambda int Poisson(k; N R) r^2 dr, k = 1..K

    @property
    def x(self) -> np.ndarray:
        return np.array([v * math.factorial(k) for k, v in enumerate(self.scaled, start=1)])


def _moments(j: int, bits: np.ndarray, link: LinkParams, deployment: Deployment, K: int,
             quad: QuadratureConfig) -> _Moments:
    if not bits.any():
        return _Moments(0.0, np.zeros(K))
    N_tx = link.protocol.N_tx
    k = np.arange(1, K + 1)[:, None]
    log_fact = gammaln(k + 1.0)

    def integrand(r):
        nr = N_tx * r_kernel(j, bits, r, link)
        rows = [-np.expm1(-nr)]
        if K:
            with np.errstate(divide="ignore"):
                log_nr = np.log(nr)[None, :]
            rows.extend(np.exp(k * log_nr - nr[None, :] - log_fact))
        return np.vstack(rows) * (r * r)

    res = integrate_semi_infinite(integrand, link.r_r, quad, scale=_scale(link, j))
    lam4pi = 4.0 * math.pi * deployment.lambda_a
    vals = np.atleast_1d(res.value)
    return _Moments(lam4pi * float(vals[0]), lam4pi * vals[1:])


def _below_threshold(m: _Moments, thresholds: np.ndarray) -> np.ndarray:
    """P[N < N_th] for each threshold under the Poisson-mixture model."""
    y = _bell_scaled(m.scaled, int(thresholds.max()) - 1)
    cdf = np.cumsum(y)
    return math.exp(-m.exponent) * cdf[thresholds - 1]


def _clamp(p: np.ndarray):
    clipped = np.clip(p, 0.0, 1.0)
    return clipped, bool(np.any(np.abs(clipped - p) > CLAMP_REPORT))


def ber_sweep(j: int, bits, link: LinkParams, deployment: Deployment, thresholds,
              quad: QuadratureConfig = PRODUCTION_QUAD, P1: float | None = None) -> list[BerResult]:
    """Analytic BER of bit ``j`` for several fixed thresholds.

    The moment integrals are computed once on a shared mesh for the largest
    threshold. ``bits[:j-1]`` is the history; ``b_j`` is set to 1 for the
    miss probability and to 0 for the false-alarm probability.
    """
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=np.int64))
    if np.any(thresholds < 1):
        raise DomainError("fixed threshold must be >= 1")
    if j < 1:
        raise DomainError("bit index starts at 1")
    hist = np.asarray(bits, dtype=np.int64)[: j - 1]
    if hist.size < j - 1:
        raise DomainError(f"need {j - 1} history bits, got {hist.size}")
    P1 = link.protocol.P1 if P1 is None else P1
    K = int(thresholds.max()) - 1
    with_one = np.append(hist, 1)
    with_zero = np.append(hist, 0)
    miss = _below_threshold(_moments(j, with_one, link, deployment, K, quad), thresholds)
    fa = 1.0 - _below_threshold(_moments(j, with_zero, link, deployment, K, quad), thresholds)
    miss, c1 = _clamp(miss)
    fa, c2 = _clamp(fa)
    pe = P1 * miss + (1 - P1) * fa
    return [BerResult(float(m), float(f), float(p), P1, 1 - P1, c1 or c2) for m, f, p in zip(miss, fa, pe)]


def ber_theorem2(j: int, bits, link: LinkParams, deployment: Deployment, N_th: int,
                 quad: QuadratureConfig = PRODUCTION_QUAD, P1: float | None = None) -> BerResult:
    """Analytic BER of bit ``j`` under a fixed threshold ``N_th`` (Poisson approximation)."""
    if N_th < 1:
        raise DomainError("fixed threshold must be >= 1")
    return ber_sweep(j, bits, link, deployment, [N_th], quad, P1)[0]


def ber_lemma3(j: int, bits, link: LinkParams, deployment: Deployment,
               quad: QuadratureConfig = PRODUCTION_QUAD, P1: float | None = None) -> BerResult:
    """BER for ``N_th = 1``: miss is the Laplace transform of R_tot at N_tx."""
    hist = np.asarray(bits, dtype=np.int64)[: j - 1]
    P1 = link.protocol.P1 if P1 is None else P1
    N_tx = link.protocol.N_tx
    miss = laplace_rtot(N_tx, j, np.append(hist, 1), link, deployment, quad)
    fa = 1.0 - laplace_rtot(N_tx, j, np.append(hist, 0), link, deployment, quad)
    (miss, fa), clamped = _clamp(np.array([miss, fa]))
    return BerResult(float(miss), float(fa), float(P1 * miss + (1 - P1) * fa), P1, 1 - P1, clamped)


def demodulate(values, detector: DetectorSpec) -> np.ndarray:
    """Threshold decisions along the last axis of ``values``.

    Fixed: 1 iff N[j] >= N_th. DFD: 1 iff N[j] - N[j-1] >= N_th with N[0] = 0.
    """
    v = np.asarray(values)
    if v.shape[-1] == 0:
        return np.zeros(v.shape, dtype=np.int64)
    if detector.mode is DetectorMode.DFD:
        v = np.diff(v, axis=-1, prepend=0)
    return (v >= detector.N_th).astype(np.int64)


__all__ = [
    "BerResult",
    "ConvergenceError",
    "ObservationModel",
    "bell_by_partitions",
    "ber_lemma3",
    "ber_sweep",
    "ber_theorem2",
    "complete_bell",
    "demodulate",
    "laplace_rtot",
    "observation_sample",
    "pulse_response",
    "r_kernel",
]
