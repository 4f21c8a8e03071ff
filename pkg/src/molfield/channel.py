"""Point-to-point channel responses for one transmitter at distance ``r0``.

All functions broadcast over ``r0`` and ``t`` and return a float for scalar
input. Distances are in um, times in s.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, erfc, erfcx

from .core import DomainError, Medium

_SQRT_PI = math.sqrt(math.pi)


def _prepare(r0, t):
    scalar = np.ndim(r0) == 0 and np.ndim(t) == 0
    r0, t = np.broadcast_arrays(np.asarray(r0, dtype=float), np.asarray(t, dtype=float))
    return r0, t, scalar


def _out(values, scalar):
    return float(values) if scalar else values


def _check_outside(r0, r_r):
    if np.any(r0 < r_r):
        raise DomainError(f"transmitter distance must be >= receiver radius {r_r}")


def fa_hit_rate(r0, t, medium: Medium, r_r: float):
    """First-hitting rate density K(t | r0) of a fully absorbing sphere, 1/s.

    Degradation is not included; multiply by ``exp(-k_d t)`` for the
    surviving flux.
    """
    r0, t, scalar = _prepare(r0, t)
    _check_outside(r0, r_r)
    if np.any(t < 0):
        raise DomainError("time must be >= 0")
    D = medium.D
    d = r0 - r_r
    out = np.zeros(r0.shape)
    pos = t > 0
    tp = t[pos]
    out[pos] = (r_r / r0[pos]) / np.sqrt(4 * np.pi * D * tp) * (d[pos] / tp) * np.exp(-d[pos] ** 2 / (4 * D * tp))
    return _out(out, scalar)


def fa_cum_fraction(r0, t, medium: Medium, r_r: float):
    """Fraction of one pulse absorbed by time ``t`` (with degradation).

    Written as (r_r / 2 r0) [e^{-a} erfc(u - v) + e^{a} erfc(u + v)] with
    u = (r0 - r_r)/sqrt(4Dt), v = sqrt(k_d t), a = 2uv, and evaluated through
    erfcx so that e^{a} never overflows for distant transmitters.
    """
    r0, t, scalar = _prepare(r0, t)
    _check_outside(r0, r_r)
    if np.any(t < 0):
        raise DomainError("time must be >= 0")
    out = np.zeros(r0.shape)
    pos = t > 0
    if np.any(pos):
        rp, tp = r0[pos], t[pos]
        u = (rp - r_r) / np.sqrt(4 * medium.D * tp)
        v = np.sqrt(medium.k_d * tp)
        with np.errstate(over="ignore"):
            g = np.exp(-u * u - v * v)
        if medium.k_d == 0:
            # both terms coincide
            total = 2.0 * erfcx(u) * g
        else:
            total = erfcx(u + v) * g
            ahead = u >= v
            total[ahead] += erfcx(u[ahead] - v[ahead]) * g[ahead]
            behind = ~ahead
            total[behind] += np.exp(-2 * u[behind] * v[behind]) * erfc(u[behind] - v[behind])
        out[pos] = r_r / (2 * rp) * total
    return _out(out, scalar)


def _weighted_erfc_diff(x_late, x_early, s, g_late, g_early):
    """exp(s) * [erfc(x_late) - erfc(x_early)] without cancellation or overflow.

    ``g`` is exp(s - x^2), known in closed form by the caller. Right of 0.5
    the scaled erfcx form is used, left of -0.5 the reflected erfc, and erf
    in between (where s is small).
    """
    out = np.empty(x_late.shape)
    lo = np.minimum(x_late, x_early)
    hi = np.maximum(x_late, x_early)
    right = lo >= 0.5
    left = hi <= -0.5
    mid = ~(right | left)
    out[right] = erfcx(x_late[right]) * g_late[right] - erfcx(x_early[right]) * g_early[right]
    with np.errstate(under="ignore"):
        out[left] = np.exp(s[left]) * (erfc(-x_early[left]) - erfc(-x_late[left]))
        out[mid] = np.exp(s[mid]) * (erf(x_early[mid]) - erf(x_late[mid]))
    return out


def fa_net_fraction(r0, t, T_ss, medium: Medium, r_r: float):
    """Fraction absorbed during ``[t, t + T_ss]``.

    Evaluated as a difference of erfc terms rather than of two cumulative
    fractions, so late windows keep full relative accuracy.
    """
    if np.any(np.asarray(T_ss) < 0):
        raise DomainError("sampling interval must be >= 0")
    r0, t, scalar = _prepare(r0, t)
    r0, t, T_ss = np.broadcast_arrays(r0, t, np.asarray(T_ss, dtype=float))
    _check_outside(r0, r_r)
    if np.any(t < 0):
        raise DomainError("time must be >= 0")
    out = np.zeros(r0.shape)
    first = (t == 0) & (T_ss > 0)
    if np.any(first):
        out[first] = fa_cum_fraction(r0[first], T_ss[first], medium, r_r)
    # a molecule released on the surface is absorbed at once: later windows stay 0
    later = (t > 0) & (T_ss > 0) & (r0 > r_r)
    if np.any(later):
        rp, t1 = r0[later], t[later]
        t2 = t1 + T_ss[later]
        D, k_d = medium.D, medium.k_d
        u1, u2 = (rp - r_r) / np.sqrt(4 * D * t1), (rp - r_r) / np.sqrt(4 * D * t2)
        v1, v2 = np.sqrt(k_d * t1), np.sqrt(k_d * t2)
        a = 2 * u1 * v1  # same at both times
        with np.errstate(over="ignore"):
            g1, g2 = np.exp(-u1 * u1 - v1 * v1), np.exp(-u2 * u2 - v2 * v2)
        near = _weighted_erfc_diff(u2 - v2, u1 - v1, -a, g2, g1)
        far = near if k_d == 0 else _weighted_erfc_diff(u2 + v2, u1 + v1, a, g2, g1)
        out[later] = r_r / (2 * rp) * (near + far)
    out = np.maximum(out, 0.0)
    return _out(out, scalar)


def ps_point_concentration(t, distance, medium: Medium):
    """Point concentration (per emitted molecule, um^-3) at ``distance`` from the source."""
    distance, t, scalar = _prepare(distance, t)
    if np.any(t <= 0):
        raise DomainError("time must be > 0")
    D = medium.D
    c = (4 * np.pi * D * t) ** -1.5 * np.exp(-(distance**2) / (4 * D * t) - medium.k_d * t)
    return _out(c, scalar)


def ps_fraction(r0, t, medium: Medium, r_r: float):
    """Fraction of one pulse inside a passive sphere at time ``t``.

    Exact integral of the Gaussian kernel over the ball (no uniform
    concentration assumption). ``r0 = 0`` uses the analytic limit.
    """
    r0, t, scalar = _prepare(r0, t)
    if np.any(r0 < 0):
        raise DomainError("distance must be >= 0")
    if np.any(t <= 0):
        raise DomainError("time must be > 0")
    s = np.sqrt(medium.D * t)
    a = (r0 - r_r) / (2 * s)
    b = (r0 + r_r) / (2 * s)
    # the centre limit is exact to O((r0/s)^2); it also avoids overflow for tiny r0
    centre = r0 <= 1e-8 * s
    rs = np.where(centre, 1.0, r0)
    # erf(-a) + erf(b) == erfc(a) - erfc(b); exp(-b^2) - exp(-a^2) via expm1
    with np.errstate(under="ignore", over="ignore", invalid="ignore"):
        body = 0.5 * (erfc(a) - erfc(b)) + s / (_SQRT_PI * rs) * np.exp(-a * a) * np.expm1(-rs * r_r / (s * s))
        limit = erf(r_r / (2 * s)) - r_r / (_SQRT_PI * s) * np.exp(-(r_r**2) / (4 * s * s))
    frac = np.where(centre, limit, body)
    frac = np.clip(frac, 0.0, 1.0) * np.exp(-medium.k_d * t)
    return _out(frac, scalar)


def ps_fraction_uniform(r0, t, medium: Medium, r_r: float):
    """Uniform-concentration approximation: centre concentration times volume.

    Only valid far from the receiver; can exceed 1 close to it.
    """
    volume = 4.0 * np.pi * r_r**3 / 3.0
    return ps_point_concentration(t, r0, medium) * volume
