"""Command-line front end: synthesis, certification, simulation, repro.

All numeric console output is printed at six significant digits; files are
written at full precision. Every run drops a manifest next to its outputs
so a result can be regenerated from the recorded flags alone, and CSV
schemas are version-tagged in their headers for golden-file comparisons.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .gainmargin import design_chain, max_gain_margin, upper_bound_gamma
from .margins import crossing_frequencies, stability_partition
from .model import load_system
from .simulate import DEMO_VARIANTS, SimConfig, integrate, run_demo_variant
from .spectrum import Quasipolynomial, default_certification_rect, roots_in_region
from .synthesis import GainVector, gain_star, multiplicity_at, scale_gain
from .tradeoff import ahmed_conditions, lei_conditions

__all__ = ["main", "dispatch", "emit_plot_script", "RunManifest"]


@dataclass(frozen=True)
class RunManifest:
    subcommand: str
    flags: dict
    config_path: str | None
    outdir: str
    seed: int
    version: str


def _fmt(value):
    return "%.6g" % value


def _full(value):
    return "%.17g" % value


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _write_manifest(args, extra=None):
    flags = {
        k: v
        for k, v in vars(args).items()
        if k not in ("func",) and not k.startswith("_")
    }
    manifest = RunManifest(
        subcommand=args.subcommand,
        flags=flags,
        config_path=getattr(args, "config", None),
        outdir=args.outdir,
        seed=args.seed,
        version=__version__,
    )
    payload = asdict(manifest)
    if extra:
        payload.update(extra)
    path = os.path.join(args.outdir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_plot_script(kind, data_path, out_path=None):
    """Write a gnuplot script rendering one of the known CSV schemas."""
    if not os.path.exists(data_path):
        raise FileNotFoundError("data file %s does not exist" % data_path)
    rel = os.path.basename(data_path)
    if kind == "spectrum":
        body = (
            "set datafile separator ','\n"
            "set xlabel 'Re s'\nset ylabel 'Im s'\nset grid\n"
            "plot '%s' using 1:2 with points pt 7 ps 1.2 title 'roots', \\\n"
            "     '%s' using 1:2:3 with labels offset 1,1 notitle\n" % (rel, rel)
        )
    elif kind == "error_norm":
        body = (
            "set datafile separator ','\n"
            "set xlabel 't'\nset ylabel '|e_pred(t)|'\nset logscale y\nset grid\n"
            "plot for [col=2:*] '%s' using 1:col with lines title columnheader(col)\n"
            % rel
        )
    elif kind == "partition":
        body = (
            "set datafile separator ','\n"
            "set xlabel 'delay'\nset ylabel 'n'\nset grid\n"
            "plot '%s' using (($2+$3)/2):1:(($3-$2)/2):(0.35):($4 == 0 ? 1 : 2) "
            "with boxxyerror fc variable title 'unstable-root count (dark = 0)'\n" % rel
        )
    elif kind == "margin_bounds":
        body = (
            "set datafile separator ','\n"
            "set xlabel 'n'\nset ylabel 'gain margin'\nset logscale y\nset grid\n"
            "plot '%s' using 1:2 with linespoints title 'certified lower', \\\n"
            "     '%s' using 1:3 with linespoints title 'analytic upper'\n" % (rel, rel)
        )
    else:
        raise ValueError("unknown plot kind '%s'" % kind)
    if out_path is None:
        out_path = os.path.splitext(data_path)[0] + ".gp"
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# generated by midpredict %s\n" % __version__)
        fh.write(body)
    return out_path


def _write_csv(path, schema, header_cols, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema: %s\n" % schema)
        fh.write(",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(_full(v) if isinstance(v, float) else str(v) for v in row))
            fh.write("\n")
    return path


def _cmd_synth(args):
    gain = gain_star(args.n)
    rows = [("sigma_star", gain.sigma_star)]
    for i, v in enumerate(gain.l, start=1):
        rows.append(("l%d_star" % i, v))
    scaled = None
    if args.delta is not None:
        scaled = scale_gain(gain, args.delta)
        for i, v in enumerate(scaled.l, start=1):
            rows.append(("l%d_at_delta" % i, v))
    mult = multiplicity_at(gain, 1.0, gain.sigma_star)
    print("dimension %d" % args.n)
    for name, value in rows:
        print("  %-14s %s" % (name, _fmt(value)))
    print("  %-14s %d (target %d)" % ("multiplicity", mult, args.n + 1))
    if scaled is not None:
        mult_scaled = multiplicity_at(scaled, args.delta, gain.sigma_star / args.delta)
        print(
            "  %-14s %d at root %s (delay %s)"
            % ("multiplicity", mult_scaled, _fmt(gain.sigma_star / args.delta), _fmt(args.delta))
        )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# schema: synth.v1\n")
            for name, value in rows:
                fh.write("%s = %s\n" % (name, _full(value)))
            fh.write("multiplicity = %d\n" % mult)
    _write_manifest(args)
    return 0


def _parse_rect(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("rect must be re_min,re_max,im_min,im_max")
    return tuple(parts)


def _cmd_spectrum(args):
    gain = gain_star(args.n)
    qp = Quasipolynomial(args.n, gain.l, args.delta)
    rect = _parse_rect(args.rect) if args.rect else default_certification_rect(
        gain.sigma_star / max(args.delta, 1e-9) if args.delta > 0 else gain.sigma_star,
        args.delta,
    )
    result = roots_in_region(qp, rect, args.density)
    print(
        "region [%s, %s] x [%s, %s]: %d roots (with multiplicity)"
        % tuple([_fmt(v) for v in rect] + [result.count_by_argument_principle])
    )
    for s, m in result.roots:
        print("  %s %+sj  multiplicity %d" % (_fmt(s.real), _fmt(s.imag), m))
    if result.dominant is not None:
        print("dominant: %s %+sj" % (_fmt(result.dominant.real), _fmt(result.dominant.imag)))
    path = _write_csv(
        os.path.join(args.outdir, "spectrum.csv"),
        "spectrum.v1",
        ("re", "im", "multiplicity"),
        [(float(s.real), float(s.imag), m) for s, m in result.roots],
    )
    emit_plot_script("spectrum", path)
    _write_manifest(args)
    return 0


def _cmd_margins(args):
    part = stability_partition(args.n, args.delta_max)
    cs = crossing_frequencies(part.gain)
    print("dimension %d, crossing frequencies:" % args.n)
    for c in cs.crossings:
        print(
            "  w = %-10s arg %-10s direction %+d"
            % (_fmt(c.frequency), _fmt(c.argument), c.direction)
        )
    print("partition up to delta_max = %s:" % _fmt(part.delta_max))
    rows = []
    for (lo, hi), count in zip(part.intervals, part.unstable_counts):
        marker = "stable" if count == 0 else "%d unstable" % count
        print("  (%s, %s): %s" % (_fmt(lo), _fmt(hi), marker))
        rows.append((args.n, float(lo), float(hi), count))
    path = _write_csv(
        os.path.join(args.outdir, "partition.csv"),
        "partition.v1",
        ("n", "delta_lo", "delta_hi", "unstable_count"),
        rows,
    )
    emit_plot_script("partition", path)
    _write_manifest(args)
    return 0


def _cmd_gainmargin(args):
    bracket = max_gain_margin(args.n, tol=args.tol)
    print("dimension %d" % args.n)
    print("  certified lower bound %s" % _fmt(bracket.lower))
    print("  analytic upper bound  %s" % _fmt(bracket.upper))
    if bracket.certificate is None:
        print("  no certificate (degenerate bracket)")
    else:
        cert_path = os.path.join(args.outdir, "certificate.txt")
        with open(cert_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# schema: lmi-certificate.v1\n")
            fh.write("gamma_m = %s\n" % _full(bracket.lower))
            for name in ("P", "R", "S", "P2", "P3", "P4"):
                fh.write("%s =\n" % name)
                for row in getattr(bracket.certificate, name):
                    fh.write("  " + " ".join(_full(float(v)) for v in row) + "\n")
    _write_csv(
        os.path.join(args.outdir, "gainmargin.csv"),
        "gainmargin.v1",
        ("n", "lower", "upper"),
        [(args.n, bracket.lower, bracket.upper)],
    )
    _write_manifest(args)
    return 0


def _cmd_design(args):
    gamma_m = args.gamma_m
    if gamma_m is None:
        gamma_m = max_gain_margin(args.n).lower
        print("certified gain margin %s" % _fmt(gamma_m))
    chain = design_chain(args.n, args.gamma_phi, args.h, gamma_m)
    print("threshold gain lambda_star = %s" % _fmt(chain.lambda_star))
    print("sub-predictors N = %d" % chain.N)
    print("scalar gain lambda = %s" % _fmt(chain.lam))
    print("dominant decay rate per time unit = %s" % _fmt(chain.sigma_star_per_t))
    _write_manifest(args)
    return 0


def _trace_rows(trace):
    rows = []
    for k, t in enumerate(trace.times):
        row = [float(t)]
        row.extend(float(v) for v in trace.x[k])
        row.extend(float(v) for v in trace.e_chain[k])
        row.append(float(trace.e_pred[k]))
        rows.append(tuple(row))
    return rows


def _trace_header(trace):
    n = trace.x.shape[1]
    stages = trace.e_chain.shape[1]
    cols = ["t"]
    cols.extend("x%d" % (i + 1) for i in range(n))
    cols.extend("e_stage%d" % (j + 1) for j in range(stages))
    cols.append("e_pred")
    return cols


def _cmd_simulate(args):
    if args.variant:
        trace = run_demo_variant(args.variant, args.h, t_end=args.t_end, dt=args.dt)
        label = args.variant
    elif args.config:
        system = load_system(args.config)
        gain = gain_star(system.n)
        lam = args.lam if args.lam is not None else args.N / system.h
        cfg = SimConfig(
            system=system, gain=gain, lam=lam, N=args.N, t_end=args.t_end, dt=args.dt
        )
        trace = integrate(cfg)
        label = "config"
    else:
        print("simulate requires --config or --variant", file=sys.stderr)
        return 2
    final = trace.e_pred[np.isfinite(trace.e_pred)]
    print("run '%s': %d nodes, divergent=%s" % (label, len(trace.times), trace.divergent))
    if len(final):
        print("final prediction error %s" % _fmt(float(final[-1])))
    path = _write_csv(
        os.path.join(args.outdir, "trace.csv"),
        "trace.v1",
        _trace_header(trace),
        _trace_rows(trace),
    )
    emit_plot_script("error_norm", path)
    _write_manifest(args, extra={"divergent": trace.divergent})
    return 0


def _cmd_compare(args):
    gain = GainVector(tuple(float(v) for v in args.L.split(",")), args.n)
    verdicts = [
        ahmed_conditions(args.n, gain, args.lam, args.h, args.gamma_phi),
        lei_conditions(args.n, gain, args.lam, args.h),
    ]
    gamma_m = args.gamma_m if args.gamma_m is not None else max_gain_margin(args.n).lower
    chain = design_chain(args.n, args.gamma_phi, args.h, gamma_m) if gamma_m > 0 else None
    print("%-8s %-10s %s" % ("method", "satisfied", "details"))
    for v in verdicts:
        detail = ", ".join("%s=%s" % (k, _fmt(r)) for k, r in v.details.items())
        print("%-8s %-10s %s" % (v.method, str(v.satisfied), detail))
    if chain is not None:
        ours_ok = args.lam >= chain.lambda_star and args.lam * args.h / max(
            round(args.lam * args.h), 1
        ) <= 1.0 + 1e-12
        print(
            "%-8s %-10s lambda_star=%s, N=%d, lambda=N/h=%s"
            % ("ours", str(bool(ours_ok)), _fmt(chain.lambda_star), chain.N, _fmt(chain.lam))
        )
    _write_manifest(args)
    return 0


def _cmd_repro(args):
    figure = args.figure
    if figure == "spectrum025":
        gain = gain_star(2)
        scaled = scale_gain(gain, 0.25)
        qp = Quasipolynomial(2, scaled.l, 0.25)
        rect = default_certification_rect(gain.sigma_star / 0.25, 0.25)
        result = roots_in_region(qp, rect, 32)
        path = _write_csv(
            os.path.join(args.outdir, "spectrum025.csv"),
            "spectrum.v1",
            ("re", "im", "multiplicity"),
            [(float(s.real), float(s.imag), m) for s, m in result.roots],
        )
        emit_plot_script("spectrum", path)
    elif figure == "d_vs_n":
        n_values = list(range(1, args.n_max + 1))
        with ThreadPoolExecutor(max_workers=4) as pool:
            parts = list(pool.map(stability_partition, n_values))
        rows = []
        for part in parts:
            for (lo, hi), count in zip(part.intervals, part.unstable_counts):
                rows.append((part.n, float(lo), float(hi), count))
        path = _write_csv(
            os.path.join(args.outdir, "d_vs_n.csv"),
            "partition.v1",
            ("n", "delta_lo", "delta_hi", "unstable_count"),
            rows,
        )
        emit_plot_script("partition", path)
    elif figure == "gamma_vs_n":
        n_values = list(range(1, min(args.n_max, 8) + 1))
        rows = []
        for n in n_values:
            bracket = max_gain_margin(n)
            rows.append((n, bracket.lower, bracket.upper))
        path = _write_csv(
            os.path.join(args.outdir, "gamma_vs_n.csv"),
            "gainmargin.v1",
            ("n", "lower", "upper"),
            rows,
        )
        emit_plot_script("margin_bounds", path)
    elif figure in ("normError025", "normError050"):
        h = 0.25 if figure == "normError025" else 0.5
        with ThreadPoolExecutor(max_workers=3) as pool:
            traces = list(pool.map(lambda v: run_demo_variant(v, h), DEMO_VARIANTS))
        # variants run at different steps; resample onto the coarsest grid
        # (the steps divide each other exactly, all being h/(50 N))
        dt_common = max(tr.metadata["dt"] for tr in traces)
        strides = []
        for tr in traces:
            stride = round(dt_common / tr.metadata["dt"])
            if abs(stride * tr.metadata["dt"] - dt_common) > 1e-12 * dt_common:
                raise RuntimeError("variant grids do not nest; cannot overlay traces")
            strides.append(stride)
        count = max(
            (len(tr.times) + s - 1) // s for tr, s in zip(traces, strides)
        )
        rows = []
        for k in range(count):
            row = [k * dt_common]
            for tr, stride in zip(traces, strides):
                idx = k * stride
                row.append(float(tr.e_pred[idx]) if idx < len(tr.times) else math.nan)
            rows.append(tuple(row))
        path = _write_csv(
            os.path.join(args.outdir, "%s.csv" % figure),
            "error-norms.v1",
            ("t",) + DEMO_VARIANTS,
            rows,
        )
        emit_plot_script("error_norm", path)
        for tr, name in zip(traces, DEMO_VARIANTS):
            if tr.divergent:
                print("variant %s diverged (trace truncated)" % name)
    else:
        print("unknown figure '%s'" % figure, file=sys.stderr)
        return 2
    print("wrote %s outputs to %s" % (figure, args.outdir))
    _write_manifest(args)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="midpredict",
        description="Design and validate high-gain sub-predictor chains for input-delayed systems.",
    )
    parser.add_argument(
        "--outdir",
        default=os.environ.get("MIDPREDICT_OUTDIR", "midpredict-out"),
        help="output directory (env MIDPREDICT_OUTDIR)",
    )
    parser.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("synth", help="compute the multiplicity-assigning gains")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--out", default=None, help="machine-readable key-value output file")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("spectrum", help="locate characteristic roots in a region")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--rect", default=None, help="re_min,re_max,im_min,im_max")
    p.add_argument("--density", type=int, default=32)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("margins", help="delay-axis stability partition")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta-max", dest="delta_max", type=float, default=None)
    p.set_defaults(func=_cmd_margins)

    p = sub.add_parser("gainmargin", help="bracket the certified gain margin")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=_cmd_gainmargin)

    p = sub.add_parser("design", help="size the sub-predictor cascade")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma-phi", dest="gamma_phi", type=float, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--gamma-m", dest="gamma_m", type=float, default=None)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("simulate", help="integrate the closed prediction loop")
    p.add_argument("--config", default=None, help="system definition file")
    p.add_argument("--variant", choices=DEMO_VARIANTS, default=None)
    p.add_argument("--h", type=float, default=0.25)
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--t-end", dest="t_end", type=float, default=60.0)
    p.add_argument("--dt", type=float, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("compare", help="evaluate competing sufficient conditions")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--L", required=True, help="comma-separated injection gains")
    p.add_argument("--gamma-phi", dest="gamma_phi", type=float, required=True)
    p.add_argument("--gamma-m", dest="gamma_m", type=float, default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("repro", help="regenerate a bundled figure dataset")
    p.add_argument(
        "--figure",
        required=True,
        choices=("spectrum025", "d_vs_n", "gamma_vs_n", "normError025", "normError050"),
    )
    p.add_argument("--n-max", dest="n_max", type=int, default=30)
    p.set_defaults(func=_cmd_repro)
    return parser


def dispatch(argv):
    """Route argv to a subcommand; 0 ok, 1 domain error, 2 usage error."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "subcommand", None):
        parser.print_usage(sys.stderr)
        return 2
    _ensure_outdir(args.outdir)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))
