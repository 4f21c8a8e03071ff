"""Vectorized adaptive quadrature on [a, b] and [a, inf).

Integrands take a 1-D array of abscissae and return either an array of the
same length or an ``(m, n)`` array for ``m`` simultaneous integrands sharing
one mesh. Each interval is estimated with 20-point Gauss-Legendre and its
error with the 10-point rule; intervals failing their share of the
tolerance are bisected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss

from .core import ConvergenceError

_X10, _W10 = leggauss(10)
_X20, _W20 = leggauss(20)
_NODES = np.concatenate([_X10, _X20])
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureConfig:
    epsabs: float = 1e-300
    epsrel: float = 1e-10
    max_subdivisions: int = 2000
    growth: float = 2.0
    min_panels: int = 4
    max_panels: int = 80

    def __post_init__(self):
        if self.epsabs <= 0 or self.epsrel <= 0:
            raise ValueError("tolerances must be > 0")
        if self.growth <= 1:
            raise ValueError("panel growth factor must be > 1")


DEFAULT_QUAD = QuadratureConfig()
PRODUCTION_QUAD = QuadratureConfig(epsrel=1e-6)


@dataclass
class QuadResult:
    """Integral estimate with its accepted mesh.

    ``lo``/``hi`` are sorted, contiguous interval bounds and ``parts`` holds
    the per-interval integrals (shape ``(m, k)`` for vector integrands).
    """

    value: np.ndarray
    error: np.ndarray
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)
    parts: np.ndarray = field(repr=False)

    def __float__(self):
        return float(self.value)


def _eval(f, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = (mid[:, None] + half[:, None] * _NODES[None, :]).ravel()
    fx = np.asarray(f(x), dtype=float)
    vector = fx.ndim == 2
    fx = fx.reshape((-1, lo.size, _NODES.size))
    g10 = half * (fx[..., :10] @ _W10)
    g20 = half * (fx[..., 10:] @ _W20)
    a20 = half * (np.abs(fx[..., 10:]) @ _W20)
    return g20, np.abs(g20 - g10), a20, vector


def integrate(f: Callable, a: float, b: float, cfg: QuadratureConfig = DEFAULT_QUAD, epsabs=None) -> QuadResult:
    """Adaptive integral of ``f`` over the finite interval ``[a, b]``.

    ``epsabs`` (scalar or per-component array) overrides ``cfg.epsabs``.
    """
    if not b > a:
        z = np.zeros(1)
        return QuadResult(np.zeros(()), np.zeros(()), np.array([a]), np.array([a]), z)
    floor = cfg.epsabs if epsabs is None else np.maximum(epsabs, cfg.epsabs)
    length = b - a
    lo, hi = np.array([a]), np.array([b])
    done_lo, done_hi, done_val, done_err, done_abs = [], [], [], [], []
    subdivisions = 0
    vector = False
    while lo.size:
        val, err, absval, vector = _eval(f, lo, hi)
        total = sum(v.sum(axis=-1) for v in done_val) + val.sum(axis=-1)
        abstotal = sum(v.sum(axis=-1) for v in done_abs) + absval.sum(axis=-1)
        tol = np.maximum(np.maximum(floor, cfg.epsrel * np.abs(total)), 50 * _EPS * abstotal)
        share = (hi - lo) / length
        ok = np.all(err <= tol[:, None] * share[None, :], axis=0)
        if np.any(ok):
            done_lo.append(lo[ok])
            done_hi.append(hi[ok])
            done_val.append(val[:, ok])
            done_err.append(err[:, ok])
            done_abs.append(absval[:, ok])
        bad = ~ok
        subdivisions += int(bad.sum())
        if subdivisions > cfg.max_subdivisions:
            partial = total if vector else total[0]
            esterr = sum(e.sum(axis=-1) for e in done_err) + err.sum(axis=-1)
            raise ConvergenceError(
                f"quadrature on [{a}, {b}] did not converge after {subdivisions} subdivisions",
                partial=partial,
                error=esterr if vector else esterr[0],
            )
        mid = 0.5 * (lo[bad] + hi[bad])
        lo = np.concatenate([lo[bad], mid])
        hi = np.concatenate([mid, hi[bad]])
    lo = np.concatenate(done_lo)
    order = np.argsort(lo)
    hi = np.concatenate(done_hi)[order]
    parts = np.concatenate(done_val, axis=1)[:, order]
    errs = np.concatenate(done_err, axis=1)[:, order]
    value, error = parts.sum(axis=1), errs.sum(axis=1)
    if not vector:
        return QuadResult(value[0], error[0], lo[order], hi, parts[0])
    return QuadResult(value, error, lo[order], hi, parts)


def integrate_semi_infinite(
    f: Callable, lower: float, cfg: QuadratureConfig = DEFAULT_QUAD, scale: Optional[float] = None
) -> QuadResult:
    """Integral of ``f`` over ``[lower, inf)`` using geometrically growing panels.

    The first panel has width ``scale`` (default 1); each next panel is
    ``cfg.growth`` times wider. Stops once a panel and the integrand at its
    right end are both negligible against the running total, after at least
    ``cfg.min_panels`` panels, so ``scale`` should be comparable to the
    integrand's natural length.
    """
    width = float(scale) if scale else 1.0
    a = float(lower)
    total = None
    error = None
    pieces = []
    for k in range(cfg.max_panels):
        b = a + width
        floor = None if total is None else 0.1 * cfg.epsrel * np.abs(total)
        res = integrate(f, a, b, cfg, epsabs=floor)
        pieces.append(res)
        total = res.value if total is None else total + res.value
        error = res.error if error is None else error + res.error
        edge = np.abs(np.asarray(f(np.array([b])), dtype=float)).reshape(np.shape(total) or (1,))
        thresh = np.maximum(cfg.epsabs, cfg.epsrel * np.abs(total))
        small_panel = np.all(np.abs(res.value) <= thresh)
        small_edge = np.all(edge * b <= thresh)
        if k + 1 >= cfg.min_panels and small_panel and small_edge:
            break
        a = b
        width *= cfg.growth
    else:
        raise ConvergenceError(f"tail of integral from {lower} did not decay", partial=total, error=error)
    lo = np.concatenate([p.lo for p in pieces])
    hi = np.concatenate([p.hi for p in pieces])
    parts = np.concatenate([np.atleast_1d(p.parts) if np.ndim(total) == 0 else p.parts for p in pieces], axis=-1)
    return QuadResult(total, error, lo, hi, parts)
