"""Monte Carlo and particle-based simulation.

Randomness: every realization (or particle chunk) owns a generator derived
from ``(seed, index)``, so results do not depend on the number of worker
threads or on the order in which work units finish.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .analytic import PhiKernel
from .core import ConfigError, Deployment, DetectorSpec, DomainError, LinkParams, ReceiverKind
from .detection import demodulate, pulse_response
from .geometry import TxField, sample_field

CHUNK = 512
PARTICLE_CHUNK = 4096


def stream(seed: int, index: int, tier: int = 0) -> np.random.Generator:
    """Independent generator for work unit ``index`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(tier, index))))


def _map_chunks(fn, n: int, chunk: int, threads: int):
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)]
    if threads <= 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))


@dataclass(frozen=True)
class ObservationTrace:
    """Per-bit demodulation variables of one realization."""

    counts: np.ndarray
    sample_times: np.ndarray
    kind: ReceiverKind

    def __len__(self):
        return len(self.counts)


@dataclass
class Type1Result:
    """Mean and standard error of expected observations across realizations."""

    times: np.ndarray
    mean_all: np.ndarray
    se_all: np.ndarray
    mean_nearest: np.ndarray
    se_nearest: np.ndarray
    mean_others: np.ndarray
    se_others: np.ndarray
    realizations: int


def _mean_se(samples: np.ndarray):
    n = samples.shape[0]
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    return mean, se


def mc_type1(link: LinkParams, deployment: Deployment, realizations: int, times, seed: int = 0,
             threads: int = 1, current: bool = False) -> Type1Result:
    """Expectation-sum Monte Carlo: sum N_tx * Phi(|x|) over each sampled field.

    With ``current=False`` each time ``t`` is the window ``[t, t + T_ss]``;
    with ``current=True`` the observation is the current one at ``t``.
    """
    if realizations < 1:
        raise DomainError("need at least one realization")
    times = np.asarray(times, dtype=float)
    N_tx = link.protocol.N_tx
    T_ss = link.protocol.T_ss
    if current:
        kernels = [PhiKernel(link.kind, 0.0, float(t), link.medium, link.r_r) for t in times]
    else:
        kernels = [PhiKernel(link.kind, float(t), T_ss, link.medium, link.r_r) for t in times]

    def run(a, b):
        dists, owner = [], []
        for i in range(a, b):
            d = sample_field(deployment, link.r_r, stream(seed, i)).distances
            dists.append(d)
            owner.append(np.full(d.size, i - a))
        d = np.concatenate(dists)
        owner = np.concatenate(owner)
        n = b - a
        tot = np.zeros((n, times.size))
        near = np.zeros((n, times.size))
        if d.size:
            sizes = np.array([x.size for x in dists])
            starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
            has = sizes > 0
            nearest_idx = np.array([s0 + np.argmin(x) for s0, x in zip(starts, dists) if x.size], dtype=np.int64)
            for k, kern in enumerate(kernels):
                phi = N_tx * kern(d)
                tot[:, k] = np.bincount(owner, weights=phi, minlength=n)
                near[has, k] = phi[nearest_idx]
        return tot, near

    parts = _map_chunks(run, realizations, CHUNK, threads)
    tot = np.concatenate([p[0] for p in parts])
    near = np.concatenate([p[1] for p in parts])
    ma, sa = _mean_se(tot)
    mn, sn = _mean_se(near)
    mo, so = _mean_se(tot - near)
    return Type1Result(times, ma, sa, mn, sn, mo, so, realizations)


@dataclass
class Type2Result:
    """Poisson-draw traces: ``counts[r, j]`` and transmitted ``bits[r, j]``."""

    counts: np.ndarray
    bits: np.ndarray
    means: np.ndarray
    kind: ReceiverKind
    sample_times: np.ndarray

    def __len__(self):
        return self.counts.shape[0]

    def traces(self):
        for row in self.counts:
            yield ObservationTrace(row, self.sample_times, self.kind)


def mc_type2(link: LinkParams, deployment: Deployment, n_bits: int, realizations: int, seed: int = 0,
             threads: int = 1) -> Type2Result:
    """Poisson-draw Monte Carlo of ``n_bits`` consecutive demodulation variables.

    Each realization draws its bit sequence (explicit prefix, then i.i.d.
    with prior P1), samples one field reused for all bits, and draws
    N[j] ~ Poisson(N_tx * sum_x R(j | |x|)).
    """
    if realizations < 1:
        raise DomainError("need at least one realization")
    N_tx = link.protocol.N_tx

    def run(a, b):
        gens, bits, dists, owner = [], [], [], []
        for i in range(a, b):
            rng = stream(seed, i)
            bits.append(link.protocol.draw_bits(n_bits, rng))
            d = sample_field(deployment, link.r_r, rng).distances
            dists.append(d)
            owner.append(np.full(d.size, i - a))
            gens.append(rng)
        d = np.concatenate(dists)
        owner = np.concatenate(owner)
        n = b - a
        # S[r, m] = sum over the field of G[m](|x|)
        S = np.zeros((n, n_bits))
        if d.size:
            g = pulse_response(d, n_bits, link)
            for m in range(n_bits):
                S[:, m] = np.bincount(owner, weights=g[m], minlength=n)
        bits = np.array(bits)
        means = np.zeros((n, n_bits))
        for j in range(n_bits):
            # bit i (0-based) contributes with lag j - i
            lags = j - np.arange(j + 1)
            means[:, j] = N_tx * np.sum(bits[:, : j + 1] * S[:, lags], axis=1)
        counts = np.array([rng.poisson(mu) for rng, mu in zip(gens, means)], dtype=np.int64)
        return counts, bits, means

    parts = _map_chunks(run, realizations, CHUNK, threads)
    times = link.protocol.T_b * np.arange(1, n_bits + 1)
    return Type2Result(
        np.concatenate([p[0] for p in parts]),
        np.concatenate([p[1] for p in parts]),
        np.concatenate([p[2] for p in parts]),
        link.kind,
        times,
    )


@dataclass(frozen=True)
class BerEstimate:
    p_error: float
    ci_low: float
    ci_high: float
    errors: int
    n: int


def estimate_ber(counts, detector: DetectorSpec, true_bits, test_index: int = -1,
                 confidence: float = 0.99) -> BerEstimate:
    """Empirical error rate on one bit position with a Wilson interval."""
    counts = np.atleast_2d(np.asarray(counts))
    true_bits = np.atleast_2d(np.asarray(true_bits))
    if counts.shape[0] == 0:
        raise DomainError("no traces to evaluate")
    if counts.shape != true_bits.shape:
        raise DomainError("traces and bit sequences are not aligned")
    decided = demodulate(counts, detector)[:, test_index]
    errors = int(np.sum(decided != true_bits[:, test_index]))
    n = counts.shape[0]
    ci = binomtest(errors, n).proportion_ci(confidence_level=confidence, method="wilson")
    return BerEstimate(errors / n, float(ci.low), float(ci.high), errors, n)


@dataclass
class ParticleResult:
    """Particle simulation output at the requested sample times.

    ``trace`` holds the demodulation variables: net absorptions per sample
    interval (absorbing) or current counts (passive).
    """

    trace: ObservationTrace
    absorbed: np.ndarray
    inside: np.ndarray
    live: np.ndarray
    degraded: np.ndarray
    emitted: np.ndarray
    step_balance: Optional[np.ndarray] = field(default=None, repr=False)


def _particle_chunk(origin, t_emit, n, link: LinkParams, dt, sample_steps, total_steps, rng, hit_test, record):
    """Simulate ``n`` molecules released at ``origin`` at ``t_emit``.

    Returns per-sample arrays (absorbed, inside, live, degraded, emitted) and
    optionally the per-step balance (emitted, live, absorbed, degraded).
    """
    D, k_d, r_r = link.medium.D, link.medium.k_d, link.r_r
    absorbing = link.kind is ReceiverKind.ABSORBING
    sigma = math.sqrt(2.0 * D * dt)
    p_degrade = -math.expm1(-k_d * dt)
    start = int(round(t_emit / dt))
    pos = np.tile(np.asarray(origin, dtype=float), (n, 1))
    live = np.ones(n, dtype=bool)
    n_abs = n_deg = 0
    ns = len(sample_steps)
    out = np.zeros((5, ns), dtype=np.int64)
    balance = np.zeros((total_steps + 1, 4), dtype=np.int64) if record else None
    si = int(np.searchsorted(sample_steps, start))
    if record:
        balance[start : start + 1] = [n, n, 0, 0]
    while si < ns and sample_steps[si] == start:
        inside = 0 if absorbing else int(np.sum(np.einsum("ij,ij->i", pos, pos) <= r_r * r_r))
        out[:, si] = [0, inside, n, 0, n]
        si += 1
    for step in range(start + 1, total_steps + 1):
        idx = np.flatnonzero(live)
        if idx.size == 0 and si >= ns and not record:
            break
        if idx.size:
            p = pos[idx]
            old_r = np.sqrt(np.einsum("ij,ij->i", p, p)) if hit_test == "bridge" else None
            p += rng.normal(0.0, sigma, size=p.shape)
            pos[idx] = p
            if absorbing:
                new_r = np.sqrt(np.einsum("ij,ij->i", p, p))
                hit = new_r <= r_r
                if hit_test == "bridge":
                    # crossing probability of a Brownian bridge past a locally flat surface
                    gap = (old_r - r_r) * np.maximum(new_r - r_r, 0.0)
                    hit |= rng.random(idx.size) < np.exp(-gap / (D * dt))
                live[idx[hit]] = False
                n_abs += int(hit.sum())
                idx = idx[~hit]
            if p_degrade > 0 and idx.size:
                dead = rng.random(idx.size) < p_degrade
                live[idx[dead]] = False
                n_deg += int(dead.sum())
        if record:
            balance[step] = [n, live.sum(), n_abs, n_deg]
        while si < ns and sample_steps[si] == step:
            if absorbing:
                inside = 0
            else:
                q = pos[live]
                inside = int(np.sum(np.einsum("ij,ij->i", q, q) <= r_r * r_r))
            out[:, si] = [n_abs, inside, int(live.sum()), n_deg, n]
            si += 1
    return out, balance


def particle_sim(field: TxField, link: LinkParams, dt: float, sample_times, seed: int = 0,
                 bits: Optional[Sequence[int]] = None, threads: int = 1, hit_test: str = "naive",
                 record_steps: bool = False) -> ParticleResult:
    """Brownian-motion simulation of every emitted molecule.

    Each transmitter releases ``N_tx`` molecules at the start of every
    bit-1 interval (default ``bits=[1]``: one pulse at t = 0). Molecules
    take Gaussian steps of per-axis std sqrt(2 D dt); after the move an
    absorbing receiver captures any molecule whose end position lies in the
    ball (``hit_test="naive"``), or additionally any molecule whose
    Brownian bridge probably crossed the surface (``hit_test="bridge"``).
    Live molecules then degrade with probability 1 - exp(-k_d dt).
    """
    T_ss = link.protocol.T_ss
    if not dt > 0:
        raise ConfigError("dt", "time step must be > 0")
    if dt >= T_ss:
        raise ConfigError("dt", f"time step {dt} must be smaller than the sampling interval {T_ss}")
    if hit_test not in ("naive", "bridge"):
        raise ConfigError("hit_test", f"unknown hit test {hit_test!r}")
    sample_times = np.asarray(sample_times, dtype=float)
    steps = np.rint(sample_times / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - sample_times) > 1e-9 * np.maximum(1.0, sample_times)):
        raise ConfigError("sample_times", "sample times must be multiples of dt")
    if np.any(np.diff(steps) < 0):
        raise ConfigError("sample_times", "sample times must be increasing")
    bits = [1] if bits is None else [int(b) for b in bits]
    N_tx = link.protocol.N_tx
    total_steps = int(steps.max()) if steps.size else 0

    units = []
    for t_idx, origin in enumerate(field.points):
        for i, b in enumerate(bits):
            if not b:
                continue
            t_emit = i * link.protocol.T_b
            for c0 in range(0, N_tx, PARTICLE_CHUNK):
                units.append((origin, t_emit, min(PARTICLE_CHUNK, N_tx - c0)))

    def work(u):
        k, (origin, t_emit, n) = u
        return _particle_chunk(origin, t_emit, n, link, dt, steps, total_steps, stream(seed, k, tier=1),
                               hit_test, record_steps)

    if threads <= 1:
        results = [work(u) for u in enumerate(units)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, enumerate(units)))

    acc = np.zeros((5, steps.size), dtype=np.int64)
    balance = np.zeros((total_steps + 1, 4), dtype=np.int64) if record_steps else None
    for out, bal in results:
        acc += out
        if record_steps:
            balance += bal
    absorbed, inside, live, degraded, emitted = acc
    if link.kind is ReceiverKind.ABSORBING:
        demod = np.diff(absorbed, prepend=0)
    else:
        demod = inside.copy()
    trace = ObservationTrace(demod, sample_times, link.kind)
    return ParticleResult(trace, absorbed, inside, live, degraded, emitted, balance)
