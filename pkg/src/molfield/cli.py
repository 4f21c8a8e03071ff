"""Command-line interface.

Every command writes CSV files whose first line is ``# `` followed by a JSON
record of the command, resolved configuration, options and seed. ``rerun``
replays such a record and produces byte-identical files.

Exit status: 0 success, 1 configuration or input error, 2 numerical
non-convergence. Nothing is written unless the whole command succeeds.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, analytic, channel, sim
from .core import ConfigError, ConvergenceError, DetectorMode, DomainError, ReceiverKind, load_config, validate
from .geometry import TxField, sample_field
from .presets import PRESETS, Table, ber_table, get_preset

THREADS_ENV = "MOLFIELD_THREADS"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def render(table: Table, meta: dict) -> str:
    lines = ["# " + json.dumps(meta, sort_keys=True, separators=(",", ":")), ",".join(table.columns)]
    lines += [",".join(_fmt(v) for v in row) for row in table.rows]
    return "\n".join(lines) + "\n"


def write_tables(tables, meta: dict, out: Path) -> list:
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in tables:
        path = out / f"{t.name}.csv"
        path.write_text(render(t, meta))
        paths.append(path)
    return paths


def read_metadata(path) -> dict:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ConfigError("rerun", f"{path} has no metadata line")
    try:
        return json.loads(first[2:])
    except json.JSONDecodeError as exc:
        raise ConfigError("rerun", f"unreadable metadata in {path}: {exc}") from None


def _thresholds(spec: str) -> list:
    """``"1:10"`` (inclusive) or ``"1,2,5"``."""
    try:
        if ":" in spec:
            a, b = spec.split(":")
            return list(range(int(a), int(b) + 1))
        return [int(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("thresholds", f"expected 'a:b' or a comma list of integers, got {spec!r}") from None


def _floats(spec: str, name: str) -> list:
    try:
        return [float(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(name, f"expected a comma list of numbers, got {spec!r}") from None


# Commands take (config, options, seed, threads) and return tables. Options
# hold every argument that changes the output; threads never do.


def cmd_channel(cfg, o, seed, threads):
    link = cfg.link
    T_ss = link.protocol.T_ss
    times = np.asarray(o["times"], dtype=float)
    if link.kind is ReceiverKind.ABSORBING:
        t = Table("channel", ["t_s", "r0_um", "hit_rate_per_s", "cum_fraction", "net_fraction"])
        for r0 in o["r0"]:
            rate = channel.fa_hit_rate(r0, times, link.medium, link.r_r) * np.exp(-link.medium.k_d * times)
            cum = channel.fa_cum_fraction(r0, times, link.medium, link.r_r)
            net = channel.fa_net_fraction(r0, times, T_ss, link.medium, link.r_r)
            for row in zip(times, [r0] * times.size, rate, cum, net):
                t.add(*row)
    else:
        if np.any(times <= 0):
            raise DomainError("passive responses need t > 0")
        t = Table("channel", ["t_s", "r0_um", "fraction", "fraction_uniform", "point_concentration_per_um3"])
        for r0 in o["r0"]:
            frac = channel.ps_fraction(r0, times, link.medium, link.r_r)
            uni = channel.ps_fraction_uniform(r0, times, link.medium, link.r_r)
            conc = channel.ps_point_concentration(times, r0, link.medium)
            for row in zip(times, [r0] * times.size, frac, uni, conc):
                t.add(*row)
    return [t]


def cmd_expected(cfg, o, seed, threads):
    link = cfg.link
    times = np.asarray(o["times"], dtype=float)
    N_tx = link.protocol.N_tx
    t = Table("expected", ["t_s", "E_nearest", "E_others", "E_all"])
    if o["current"]:
        for ti in times:
            k = analytic.PhiKernel(link.kind, 0.0, float(ti), link.medium, link.r_r)
            e = analytic.expected_breakdown(k, cfg.deployment, N_tx)
            t.add(float(ti), e.nearest, e.others, e.all)
    else:
        for e in analytic.sweep_expected(link.kind, times, link.protocol.T_ss, link.medium, link.r_r,
                                         cfg.deployment, N_tx, threads=threads):
            t.add(e.t, e.nearest, e.others, e.all)
    return [t]


def cmd_ber(cfg, o, seed, threads):
    n_bits = o["n_bits"]
    return [ber_table("ber", cfg.link, cfg.deployment, o["thresholds"], n_bits, o["realizations"], seed,
                      threads, mode=cfg.detector.mode)]


def cmd_sim_mc(cfg, o, seed, threads):
    link = cfg.link
    if o["realizations"] < 1:
        raise ConfigError("realizations", "simulation needs at least one realization")
    if o["type"] == 1:
        times = np.asarray(o["times"], dtype=float)
        r = sim.mc_type1(link, cfg.deployment, o["realizations"], times, seed=seed, threads=threads,
                         current=o["current"])
        t = Table("sim-mc", ["t_s", "mean_nearest", "se_nearest", "mean_others", "se_others", "mean_all",
                             "se_all"])
        for row in zip(times, r.mean_nearest, r.se_nearest, r.mean_others, r.se_others, r.mean_all, r.se_all):
            t.add(*row)
        return [t]
    r = sim.mc_type2(link, cfg.deployment, o["n_bits"], o["realizations"], seed=seed, threads=threads)
    t = Table("sim-mc", ["realization", "bit_index", "bit", "count"])
    for i in range(len(r)):
        for j in range(o["n_bits"]):
            t.add(i, j + 1, int(r.bits[i, j]), int(r.counts[i, j]))
    return [t]


def cmd_sim_particle(cfg, o, seed, threads):
    link = cfg.link
    dt = o["dt"]
    if o["r0"] is not None:
        field = TxField.from_points([[r, 0.0, 0.0] for r in o["r0"]], cfg.deployment)
    elif o["field"] is not None:
        field = TxField(np.asarray(o["field"], dtype=float), cfg.deployment)
    else:
        field = sample_field(cfg.deployment, link.r_r, sim.stream(seed, 0, tier=2))
    bits = list(link.protocol.bits) if link.protocol.bits else [1]
    T_ss = link.protocol.T_ss
    n_samples = int(round(o["t_max"] / T_ss))
    times = np.round(T_ss * np.arange(1, n_samples + 1), 12)
    res = sim.particle_sim(field, link, dt, times, seed=seed, bits=bits, threads=threads, hit_test=o["hit_test"])
    # analytic expectation for the same field and emissions
    expected = np.zeros(times.size)
    d = field.distances
    for i, b in enumerate(bits):
        if not b:
            continue
        since = times - i * link.protocol.T_b
        ok = since > 0
        if not d.size or not ok.any():
            continue
        if link.kind is ReceiverKind.ABSORBING:
            f = channel.fa_cum_fraction(d[None, :], since[ok][:, None], link.medium, link.r_r)
        else:
            f = channel.ps_fraction(d[None, :], since[ok][:, None], link.medium, link.r_r)
        expected[ok] += link.protocol.N_tx * f.sum(axis=1)
    observed = res.absorbed if link.kind is ReceiverKind.ABSORBING else res.inside
    t = Table("sim-particle", ["t_s", "demod", "observed", "expected", "live", "absorbed", "degraded", "emitted"])
    for row in zip(times, res.trace.counts, observed, expected, res.live, res.absorbed, res.degraded, res.emitted):
        t.add(*row)
    pts = Table("sim-particle_field", ["x_um", "y_um", "z_um"], [tuple(p) for p in field.points])
    return [t, pts]


COMMANDS = {
    "channel": cmd_channel,
    "expected": cmd_expected,
    "ber": cmd_ber,
    "sim-mc": cmd_sim_mc,
    "sim-particle": cmd_sim_particle,
}


def _default_times(cfg, o_tmax, o_tstep, include_zero=True):
    step = o_tstep or cfg.protocol.T_ss
    t_max = o_tmax if o_tmax is not None else 1.0
    n = int(round(t_max / step))
    start = 0 if include_zero else 1
    return [round(step * k, 12) for k in range(start, n + 1)]


def options_for(args, cfg) -> dict:
    """Collect the output-relevant options of a config-driven command."""
    c = args.command
    if c == "channel":
        r0 = _floats(args.r0, "r0") if args.r0 else [2.0 * cfg.receiver.r_r]
        include_zero = cfg.receiver.kind is ReceiverKind.ABSORBING
        return {"r0": r0, "times": _default_times(cfg, args.t_max, args.t_step, include_zero)}
    if c == "expected":
        return {"times": _default_times(cfg, args.t_max, args.t_step, not args.current), "current": args.current}
    if c == "ber":
        n_bits = (len(cfg.protocol.bits) + 1) if cfg.protocol.bits is not None else 1
        thresholds = _thresholds(args.thresholds)
        if cfg.detector.mode is DetectorMode.FIXED and min(thresholds) < 1:
            raise ConfigError("thresholds", "fixed-threshold detection needs N_th >= 1")
        reals = 10_000 if args.realizations is None else args.realizations
        return {"n_bits": n_bits, "thresholds": thresholds, "realizations": reals}
    if c == "sim-mc":
        n_bits = args.n_bits or ((len(cfg.protocol.bits) + 1) if cfg.protocol.bits is not None else 1)
        reals = 10_000 if args.realizations is None else args.realizations
        return {"type": args.type, "realizations": reals, "n_bits": n_bits, "current": args.current,
                "times": _default_times(cfg, args.t_max, args.t_step, not args.current)}
    if c == "sim-particle":
        field = None
        if args.field:
            field = TxField.from_csv(args.field).points.tolist()
        bits = cfg.protocol.bits or (1,)
        t_max = args.t_max if args.t_max is not None else len(bits) * cfg.protocol.T_b
        dt = args.dt if args.dt is not None else cfg.protocol.T_ss / 100.0
        return {"dt": dt, "t_max": t_max, "r0": _floats(args.r0, "r0") if args.r0 else None, "field": field,
                "hit_test": args.hit_test}
    raise ConfigError("command", f"unknown command {c!r}")


def execute(meta: dict, threads: int):
    """Run the command described by a metadata record; returns tables."""
    seed = meta["seed"]
    if meta["command"] == "figure":
        preset = get_preset(meta["preset"])
        return preset.run(meta["params"], seed, threads)
    cfg = validate(meta["config"])
    return COMMANDS[meta["command"]](cfg, meta["options"], seed, threads)


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(THREADS_ENV, f"expected an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("threads", "must be >= 1")
    return n


def build_meta(args) -> dict:
    if args.command == "rerun":
        meta = read_metadata(args.csv)
        if args.seed is not None:
            raise ConfigError("seed", "rerun takes the seed from the metadata line")
        return meta
    if args.command == "figure":
        preset = get_preset(args.preset)
        params = preset.resolve(args.lam, args.realizations, args.dt)
        seed = 0 if args.seed is None else args.seed
        return {"command": "figure", "preset": preset.name, "params": params, "seed": seed, "version": __version__}
    if not args.config:
        raise ConfigError("config", "--config is required")
    cfg = load_config(args.config)
    if args.lam is not None:
        cfg = validate({**cfg.to_dict(), "deployment": {**cfg.to_dict()["deployment"], "lambda_per_um3": args.lam}})
    seed = cfg.seed if args.seed is None else args.seed
    if seed < 0:
        raise ConfigError("seed", "must be >= 0")
    cfg_dict = {**cfg.to_dict(), "seed": seed}
    return {"command": args.command, "config": cfg_dict, "options": options_for(args, cfg), "seed": seed,
            "version": __version__}


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors (exit 1); exit 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="molfield", description="Molecular signals from Poisson fields of transmitters.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, metavar="N", help=f"worker threads (fallback: ${THREADS_ENV})")
        p.add_argument("--lambda", dest="lam", type=float, metavar="PER_UM3", help="transmitter density override")

    p = sub.add_parser("channel", help="single-transmitter channel responses")
    common(p)
    p.add_argument("--r0", help="comma list of transmitter distances, um (default 2 r_r)")
    p.add_argument("--t-max", type=float, help="last time, s (default 1)")
    p.add_argument("--t-step", type=float, help="time step, s (default T_ss)")

    p = sub.add_parser("expected", help="expected observations over the Poisson field")
    common(p)
    p.add_argument("--t-max", type=float, help="last window start, s (default 1)")
    p.add_argument("--t-step", type=float, help="time step, s (default T_ss)")
    p.add_argument("--current", action="store_true", help="current observation at t instead of the window")

    p = sub.add_parser("ber", help="analytic and simulated error probability vs threshold")
    common(p)
    p.add_argument("--thresholds", default="1:10", help="'a:b' or comma list (default 1:10)")
    p.add_argument("--realizations", type=int, metavar="N", help="Monte Carlo realizations (default 10000; 0 skips)")

    p = sub.add_parser("sim-mc", help="Monte Carlo over sampled fields")
    common(p)
    p.add_argument("--type", type=int, choices=(1, 2), default=2, help="1: expectation sum, 2: Poisson draws")
    p.add_argument("--realizations", type=int, metavar="N", help="realizations (default 10000)")
    p.add_argument("--n-bits", type=int, help="bits per trace for type 2")
    p.add_argument("--t-max", type=float, help="type 1: last time, s")
    p.add_argument("--t-step", type=float, help="type 1: time step, s")
    p.add_argument("--current", action="store_true", help="type 1: current instead of window observation")

    p = sub.add_parser("sim-particle", help="Brownian particle simulation")
    common(p)
    p.add_argument("--dt", type=float, metavar="SECONDS", help="time step (default T_ss/100)")
    p.add_argument("--t-max", type=float, help="simulated duration, s (default: length of the bit sequence)")
    p.add_argument("--r0", help="place transmitters on the x axis at these distances instead of sampling")
    p.add_argument("--field", metavar="CSV", help="transmitter positions (x_um,y_um,z_um)")
    p.add_argument("--hit-test", choices=("naive", "bridge"), default="naive", help="absorption test")

    p = sub.add_parser("figure", help="datasets behind a figure preset")
    p.add_argument("preset", choices=sorted(PRESETS))
    common(p, config=False)
    p.add_argument("--realizations", type=int, metavar="N", help="Monte Carlo realizations")
    p.add_argument("--dt", type=float, metavar="SECONDS", help="fig2: also run particle simulations at this step")

    p = sub.add_parser("rerun", help="regenerate CSV files from the metadata line of an earlier output")
    p.add_argument("csv", help="any CSV written by this tool")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory")
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.add_argument("--threads", type=int, metavar="N")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        threads = _threads(args)
        meta = build_meta(args)
        tables = execute(meta, threads)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"numerical error: {exc} (partial value {exc.partial})", file=sys.stderr)
        return 2
    for path in write_tables(tables, meta, Path(args.out)):
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
