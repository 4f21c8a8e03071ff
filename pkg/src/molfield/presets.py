"""Figure presets: parameter sets and the tables each figure is built from.

A figure is a bundle of CSV tables. Every preset is a pure function of its
resolved parameters plus ``seed``, so re-running with the recorded
parameters reproduces the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import analytic, detection, sim
from .core import (
    ConfigError,
    Deployment,
    DetectorMode,
    DetectorSpec,
    EmissionProtocol,
    LinkParams,
    Medium,
    ReceiverKind,
    ReceiverSpec,
)
from .geometry import sample_field

R_R = 5.0
KINDS = (ReceiverKind.ABSORBING, ReceiverKind.PASSIVE)


@dataclass
class Table:
    """One CSV table: ``name`` becomes the file stem."""

    name: str
    columns: list
    rows: list = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(values)


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    params: dict
    build: Callable
    needs_lambda: bool = False
    default_realizations: int = 10_000

    def resolve(self, lambda_a: Optional[float] = None, realizations: Optional[int] = None,
                dt: Optional[float] = None) -> dict:
        """Parameters after overrides; raises ConfigError when lambda is required but missing."""
        params = dict(self.params)
        if lambda_a is not None:
            if not lambda_a > 0:
                raise ConfigError("lambda", f"density must be > 0, got {lambda_a}")
            params["lambda_per_um3"] = lambda_a
        elif self.needs_lambda:
            raise ConfigError(
                "lambda",
                f"{self.name} needs --lambda: the transmitter density behind this figure was never "
                "stated with its parameters, so it must be chosen explicitly",
            )
        params["realizations"] = self.default_realizations if realizations is None else int(realizations)
        if params["realizations"] < 0:
            raise ConfigError("realizations", "must be >= 0")
        if dt is not None:
            params["dt_s"] = dt
        return params

    def run(self, params: dict, seed: int, threads: int = 1) -> list:
        return self.build(params, seed, threads)


def _link(kind, p, k_d=None, N_tx=None, bits=None, T_ss=None) -> LinkParams:
    medium = Medium(p["D_um2_per_s"], p.get("k_d_per_s", 0.0) if k_d is None else k_d)
    T_b = p.get("T_b_s", p.get("T_ss_s"))
    protocol = EmissionProtocol(
        N_tx=p["N_tx"] if N_tx is None else N_tx,
        T_b=T_b,
        T_ss=p.get("T_ss_s", T_b) if T_ss is None else T_ss,
        bits=tuple(p.get("bits", ())) if bits is None else tuple(bits),
        P1=p.get("P1", 0.5),
    )
    return LinkParams(medium, ReceiverSpec(kind, p.get("r_r_um", R_R)), protocol)


def _deployment(p, lambda_a=None) -> Deployment:
    return Deployment(p["lambda_per_um3"] if lambda_a is None else lambda_a, p["R_max_um"])


def _grid(start, stop, step):
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 12)


def _expectation_tables(prefix, p, seed, threads, times, current):
    tables = []
    for kind in KINDS:
        link = _link(kind, p)
        dep = _deployment(p)
        N_tx = link.protocol.N_tx
        if current:
            kernels = [analytic.PhiKernel(kind, 0.0, float(t), link.medium, link.r_r) for t in times]
            exp = [analytic.expected_breakdown(k, dep, N_tx) for k in kernels]
        else:
            exp = analytic.sweep_expected(kind, times, link.protocol.T_ss, link.medium, link.r_r, dep, N_tx,
                                          threads=threads)
        cols = ["t_s", "E_nearest", "E_others", "E_all"]
        n_mc = p["realizations"]
        if n_mc:
            mc = sim.mc_type1(link, dep, n_mc, times, seed=seed, threads=threads, current=current)
            cols += ["mc_nearest", "mc_nearest_se", "mc_others", "mc_others_se", "mc_all", "mc_all_se"]
        t = Table(f"{prefix}_{kind.value}", cols)
        for i, (ti, e) in enumerate(zip(times, exp)):
            row = [float(ti), e.nearest, e.others, e.all]
            if n_mc:
                row += [mc.mean_nearest[i], mc.se_nearest[i], mc.mean_others[i], mc.se_others[i],
                        mc.mean_all[i], mc.se_all[i]]
            t.add(*row)
        tables.append(t)
    return tables


def _particle_table(prefix, p, seed, threads, times):
    """Particle averages over ``particle_fields`` sampled fields (first transmitter emission at t=0)."""
    dt = p["dt_s"]
    n_fields = p.get("particle_fields", 4)
    tables = []
    for kind in KINDS:
        link = _link(kind, p, bits=(1,))
        dep = _deployment(p)
        T_ss = link.protocol.T_ss
        # window [t, t + T_ss] is read at its end
        sample_times = np.round((times + T_ss) / dt) * dt
        acc = np.zeros(sample_times.size)
        for f in range(n_fields):
            fld = sample_field(dep, link.r_r, sim.stream(seed, f, tier=2))
            res = sim.particle_sim(fld, link, dt, sample_times, seed=[seed, f], threads=threads)
            acc += res.trace.counts if kind is ReceiverKind.ABSORBING else np.diff(res.inside, prepend=0)
        t = Table(f"{prefix}_particle_{kind.value}", ["t_s", "particle_mean"])
        for ti, v in zip(times, acc / max(n_fields, 1)):
            t.add(float(ti), float(v))
        tables.append(t)
    return tables


def build_fig2(p, seed, threads):
    times = _grid(0.0, p["t_max_s"], p["T_ss_s"])
    tables = _expectation_tables("fig2", p, seed, threads, times, current=False)
    scaling = Table("fig2_scaling", ["receiver", "curve", "max_analytic"])
    for tab in tables:
        arr = np.array([r[1:4] for r in tab.rows], dtype=float)
        kind = tab.name.split("_")[1]
        scaling.add(kind, "nearest", float(arr[:, 0].max()))
        scaling.add(kind, "others", float(arr[:, 1].max()))
        scaling.add(kind, "all", float(arr[:, 2].max()))
    tables.append(scaling)
    if p.get("dt_s"):
        tables += _particle_table("fig2", p, seed, threads, times)
    return tables


def build_fig3(p, seed, threads):
    times = _grid(0.0, p["t_max_s"], p["T_ss_s"])
    return _expectation_tables("fig3", p, seed, threads, times, current=True)


def build_fig4(p, seed, threads):
    densities = np.geomspace(p["lambda_min"], p["lambda_max"], p["lambda_points"])
    densities = [float(f"{x:.12g}") for x in densities]
    dens = Table("fig4_density", ["lambda_per_um3", "receiver", "E_nearest", "E_others", "E_all"])
    for kind in KINDS:
        link = _link(kind, p)
        kernel = analytic.PhiKernel(kind, 0.0, p["t_obs_s"], link.medium, link.r_r)
        for lam in densities:
            e = analytic.expected_breakdown(kernel, _deployment(p, lam), link.protocol.N_tx)
            dens.add(float(lam), kind.value, e.nearest, e.others, e.all)
    link = _link(ReceiverKind.ABSORBING, p)
    dep = _deployment(p)
    T_ss = link.protocol.T_ss
    times = _grid(0.0, p["t_max_s"], T_ss)
    exp = analytic.sweep_expected(ReceiverKind.ABSORBING, times, T_ss, link.medium, link.r_r, dep,
                                  link.protocol.N_tx, threads=threads)
    closed = analytic.fa_closed_net(times, T_ss, dep, link.protocol.N_tx, link.medium, link.r_r)
    asym = analytic.fa_asymptotic_net(dep, link.protocol.N_tx, link.medium, link.r_r, T_ss)
    net = Table("fig4_net", ["t_s", "E_all", "E_closed_form", "E_asymptote"])
    for ti, e, c in zip(times, exp, closed):
        net.add(float(ti), e.all, float(c), asym)
    return [dens, net]


def build_fig5(p, seed, threads):
    n_bits = p["n_bits"]
    dep = _deployment(p)
    cols = ["bit", "t_end_s", "E_analytic", "E_asymptote", "mc_mean", "mc_se"]
    tables = []
    for kind in KINDS:
        link = _link(kind, p)
        T_b, N_tx = link.protocol.T_b, link.protocol.N_tx
        asym = (analytic.fa_asymptotic_net(dep, N_tx, link.medium, link.r_r, T_b)
                if kind is ReceiverKind.ABSORBING else math.nan)
        mc = None
        if p["realizations"]:
            mc = sim.mc_type2(link, dep, n_bits, p["realizations"], seed=seed, threads=threads)
        t = Table(f"fig5_{kind.value}", cols)
        for j in range(1, n_bits + 1):
            if kind is ReceiverKind.ABSORBING:
                kernel = analytic.PhiKernel(kind, (j - 1) * T_b, T_b, link.medium, link.r_r)
            else:
                kernel = analytic.PhiKernel(kind, 0.0, j * T_b, link.medium, link.r_r)
            e = analytic.expected_all(kernel, dep, N_tx)
            if mc is not None:
                c = mc.counts[:, j - 1]
                mean, se = float(c.mean()), float(c.std(ddof=1) / math.sqrt(c.size)) if c.size > 1 else 0.0
            else:
                mean = se = math.nan
            t.add(j, round(j * T_b, 12), e, asym, mean, se)
        tables.append(t)
    return tables


BER_COLUMNS = ["N_th", "P_miss", "P_fa", "P_e_analytic", "P_e_montecarlo", "ci_low", "ci_high"]


def ber_table(name, link, dep, thresholds, n_bits, realizations, seed, threads, mode=DetectorMode.FIXED):
    """BER sweep on the last bit of an ``n_bits`` sequence; analytic columns only for fixed thresholds."""
    thresholds = [int(n) for n in thresholds]
    t = Table(name, list(BER_COLUMNS))
    analytic_rows = None
    if mode is DetectorMode.FIXED:
        bits = list(link.protocol.bits or ())[: n_bits - 1]
        if len(bits) < n_bits - 1:
            raise ConfigError("protocol.bits", f"analytic BER needs the {n_bits - 1} bits before the test bit")
        analytic_rows = detection.ber_sweep(n_bits, bits, link, dep, thresholds)
    mc = sim.mc_type2(link, dep, n_bits, realizations, seed=seed, threads=threads) if realizations else None
    for i, n in enumerate(thresholds):
        a = analytic_rows[i] if analytic_rows else None
        row = [n] + ([a.miss, a.false_alarm, a.p_error] if a else [math.nan] * 3)
        if mc is not None:
            est = sim.estimate_ber(mc.counts, DetectorSpec(mode, n), mc.bits)
            row += [est.p_error, est.ci_low, est.ci_high]
        else:
            row += [math.nan] * 3
        t.add(*row)
    return t


def build_fig6(p, seed, threads):
    dep = _deployment(p)
    return [
        ber_table(f"fig6_{kind.value}", _link(kind, p, bits=()), dep, p["thresholds"], 1, p["realizations"],
                  seed, threads)
        for kind in KINDS
    ]


def _kd_sweep(prefix, kind, p, seed, threads):
    dep = _deployment(p)
    return [
        ber_table(f"{prefix}_kd{k_d:g}", _link(kind, p, k_d=k_d), dep, p["thresholds"], len(p["bits"]) + 1,
                  p["realizations"], seed, threads)
        for k_d in p["k_d_values"]
    ]


def build_fig7(p, seed, threads):
    return _kd_sweep("fig7", ReceiverKind.ABSORBING, p, seed, threads)


def build_fig8(p, seed, threads):
    return _kd_sweep("fig8", ReceiverKind.PASSIVE, p, seed, threads)


def dfd_comparison(link, dep, n_bits, realizations, seed, threads, n_thresholds=80):
    """Simulated BER of fixed and DFD detection on a shared threshold grid.

    Returns ``(thresholds, fixed_estimates, dfd_estimates)``.
    """
    mc = sim.mc_type2(link, dep, n_bits, realizations, seed=seed, threads=threads)
    last = mc.counts[:, -1]
    diff = mc.counts[:, -1] - mc.counts[:, -2]
    lo = min(1, int(np.floor(np.quantile(diff, 0.001))))
    hi = max(2, int(np.ceil(np.quantile(last, 0.999))) + 1)
    grid = np.unique(np.round(np.linspace(lo, hi, n_thresholds)).astype(np.int64))
    fixed, dfd = [], []
    for n in grid:
        fixed.append(sim.estimate_ber(mc.counts, DetectorSpec(DetectorMode.FIXED, max(int(n), 1)), mc.bits)
                     if n >= 1 else None)
        dfd.append(sim.estimate_ber(mc.counts, DetectorSpec(DetectorMode.DFD, int(n)), mc.bits))
    return grid, fixed, dfd


def build_fig9(p, seed, threads):
    dep = _deployment(p)
    n_bits = len(p["bits"]) + 1
    cols = ["N_th", "P_e_fixed", "fixed_ci_low", "fixed_ci_high", "P_e_dfd", "dfd_ci_low", "dfd_ci_high"]
    tables = []
    for kind in KINDS:
        link = _link(kind, p)
        grid, fixed, dfd = dfd_comparison(link, dep, n_bits, max(p["realizations"], 1), seed, threads)
        t = Table(f"fig9_{kind.value}", cols)
        for n, f, d in zip(grid, fixed, dfd):
            fx = [f.p_error, f.ci_low, f.ci_high] if f else [math.nan] * 3
            t.add(int(n), *fx, d.p_error, d.ci_low, d.ci_high)
        tables.append(t)
    return tables


_BER_BASE = {"D_um2_per_s": 800.0, "T_b_s": 0.2, "R_max_um": 250.0, "r_r_um": R_R, "P1": 0.5}

PRESETS = {
    "fig2": ExperimentPreset(
        "fig2",
        "net observation per sampling window vs time, nearest/others/all, both receivers",
        {"D_um2_per_s": 80.0, "k_d_per_s": 0.0, "lambda_per_um3": 1e-4, "R_max_um": 50.0, "T_ss_s": 0.01,
         "N_tx": 10_000, "r_r_um": R_R, "t_max_s": 1.19, "particle_fields": 4},
        build_fig2,
    ),
    "fig3": ExperimentPreset(
        "fig3",
        "current observation vs time, both receivers",
        {"D_um2_per_s": 120.0, "k_d_per_s": 0.0, "lambda_per_um3": 1e-3, "R_max_um": 100.0, "T_ss_s": 0.1,
         "N_tx": 10_000, "r_r_um": R_R, "t_max_s": 3.0},
        build_fig3,
        default_realizations=1000,
    ),
    "fig4": ExperimentPreset(
        "fig4",
        "current observation at t = 2 s vs density, and net absorption vs time with its asymptote",
        {"D_um2_per_s": 120.0, "k_d_per_s": 0.0, "lambda_per_um3": 1e-3, "R_max_um": 100.0, "T_ss_s": 0.1,
         "N_tx": 10_000, "r_r_um": R_R, "t_obs_s": 2.0, "lambda_min": 1e-5, "lambda_max": 1e-2,
         "lambda_points": 13, "t_max_s": 10.0},
        build_fig4,
        default_realizations=0,
    ),
    "fig5": ExperimentPreset(
        "fig5",
        "observation per bit after a single pulse, with the net-absorption asymptote",
        {**_BER_BASE, "k_d_per_s": 0.0, "N_tx": 20, "bits": [1], "P1": 0.0, "n_bits": 10},
        build_fig5,
        needs_lambda=True,
    ),
    "fig6": ExperimentPreset(
        "fig6",
        "single-bit error probability vs threshold, both receivers",
        {**_BER_BASE, "k_d_per_s": 0.0, "N_tx": 20, "thresholds": list(range(1, 21))},
        build_fig6,
        needs_lambda=True,
        default_realizations=100_000,
    ),
    "fig7": ExperimentPreset(
        "fig7",
        "absorbing receiver error probability vs threshold with and without degradation",
        {**_BER_BASE, "N_tx": 20, "bits": [1, 0, 1, 0], "k_d_values": [0.0, 0.8],
         "thresholds": list(range(1, 21))},
        build_fig7,
        needs_lambda=True,
        default_realizations=100_000,
    ),
    "fig8": ExperimentPreset(
        "fig8",
        "passive receiver error probability vs threshold with and without degradation",
        {**_BER_BASE, "N_tx": 300, "bits": [1, 0, 1, 0], "k_d_values": [0.0, 0.8],
         "thresholds": list(range(1, 41))},
        build_fig8,
        needs_lambda=True,
        default_realizations=100_000,
    ),
    "fig9": ExperimentPreset(
        "fig9",
        "fixed-threshold vs difference (DFD) detection with degradation, both receivers",
        {**_BER_BASE, "N_tx": 10_000, "k_d_per_s": 0.8, "lambda_per_um3": 5e-6, "bits": [1, 0, 1, 0]},
        build_fig9,
        default_realizations=100_000,
    ),
}


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError("preset", f"unknown figure {name!r}; choose from {', '.join(PRESETS)}") from None
