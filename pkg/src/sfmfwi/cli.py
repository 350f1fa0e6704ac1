"""Command line entry point: ``sfmfwi <command> [options]``.

Exit codes: 0 success, 2 config validation, 3 numeric divergence, 4 I/O.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

from . import metrics
from .benchmarks import KINDS, generate_synthetic_benchmark
from .errors import (ArchitectureError, ConfigError, DivergenceError, FormatError, InvalidArgument, NumericError,
                     ResourceError, StabilityError)
from .harness.compare import compare_runs
from .harness.config import load_config
from .harness.experiment import build_setup, configure_determinism, inversion_config_of, run_experiment
from .inversion import Method, WaveProblem, ablation_grid, write_ablation_csv
from .io import load_field, save_field, save_gather
from .model import Grid2D

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--out", help="output directory (or file for gen-model)")
    p.add_argument("--seed", type=int, help="overrides method.seed")
    p.add_argument("--threads", type=int, default=1, help="shot-parallel worker threads")
    p.add_argument("--deterministic", action="store_true",
                   help="single thread, deterministic kernels, zeroed wall-time column")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config key (repeatable)")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="sfmfwi", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("forward", parents=[common], help="synthesize observed gathers for a config")
    sub.add_parser("invert", parents=[common], help="run the configured inversion")
    p = sub.add_parser("metrics", parents=[common], help="rel_l2, SSIM and rank of a model against a truth")
    p.add_argument("model")
    p.add_argument("truth")
    p = sub.add_parser("deblur", parents=[common], help="spectral and sharpness report between two fields")
    p.add_argument("corrupt")
    p.add_argument("corrected")
    p.add_argument("--band-lo", type=float, default=0.03, help="cycles/m")
    p.add_argument("--band-hi", type=float, default=0.10, help="cycles/m")
    p.add_argument("--k-c", type=float, default=0.0375, help="cycles/m")
    p = sub.add_parser("compare", parents=[common], help="compare completed run directories")
    p.add_argument("runs", nargs="+")
    p = sub.add_parser("ablate", parents=[common], help="SFM (T, K) grid at a fixed budget")
    p.add_argument("--pairs", required=True, help="comma-separated TxK pairs, e.g. 2x150,10x30,30x10")
    p = sub.add_parser("gen-model", parents=[common], help="write a synthetic benchmark model")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--nz", type=int, default=64)
    p.add_argument("--dx", type=float, default=10.0)
    p.add_argument("--dz", type=float, default=10.0)
    return parser


def _overrides(args):
    out = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError([f"--set {item!r}: expected SECTION.KEY=VALUE"])
        out[key.strip()] = value.strip()
    if args.seed is not None:
        out["method.seed"] = str(args.seed)
    return out


def _values(args):
    if not args.config:
        raise ConfigError(["--config: required for this command"])
    return load_config(args.config, _overrides(args))


def _need_out(args):
    if not args.out:
        raise ConfigError(["--out: required for this command"])
    return args.out


def cmd_forward(args):
    values = _values(args)
    out = _need_out(args)
    configure_determinism(args.deterministic, args.threads)
    setup = build_setup(values, 1 if args.deterministic else args.threads)
    os.makedirs(os.path.join(out, "gathers"), exist_ok=True)
    if setup.truth is not None:
        save_field(setup.truth, os.path.join(out, "truth.sfwi"))
    save_field(setup.model0, os.path.join(out, "initial.sfwi"))
    save_gather(setup.d_obs, os.path.join(out, "gathers", "d_obs.sgth"))
    if setup.d_obs is not setup.d_clean:
        save_gather(setup.d_clean, os.path.join(out, "gathers", "d_obs_clean.sgth"))
    print(f"wrote {setup.d_obs.n_shots} shots x {setup.d_obs.n_receivers} receivers x {setup.d_obs.nt} samples")


def cmd_invert(args):
    values = _values(args)
    manifest = run_experiment(values, _need_out(args), threads=args.threads, deterministic=args.deterministic,
                              log=print)
    s = manifest["summary"]
    print(f"{manifest['method']}: evaluations={manifest['evaluations']} final_misfit={s['final_misfit']:.6g}"
          + (f" rel_l2={s['rel_l2']:.5f} ssim={s['ssim']:.4f}" if s["rel_l2"] is not None else "")
          + f" rank={s['rank']}")


def cmd_metrics(args):
    m, t = load_field(args.model), load_field(args.truth)
    row = {"rel_l2": metrics.rel_l2(m.values, t.values), "ssim": metrics.ssim(m.values, t.values),
           "rank": metrics.effective_rank(m.values)}
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            w.writeheader()
            w.writerow(row)
    print(",".join(f"{k}={v}" for k, v in row.items()))


def cmd_deblur(args):
    a, b = load_field(args.corrupt), load_field(args.corrected)
    if a.grid != b.grid:
        raise InvalidArgument(f"grids differ: {a.grid} vs {b.grid}")
    report = metrics.deblur_report(a.values, b.values, a.grid, args.band_lo, args.band_hi, args.k_c)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report.write_csv(os.path.join(args.out, "deblur.csv"))
    print(",".join(f"{k}={v:.6g}" for k, v in report.ratios().items()))


def cmd_compare(args):
    rows = compare_runs(args.runs, _need_out(args))
    for r in rows:
        print(",".join(str(r[k]) for k in ("method", "rel_l2", "ssim", "final_misfit", "rank")))


def _pairs(text):
    pairs = []
    for item in text.split(","):
        t, sep, k = item.strip().lower().partition("x")
        try:
            pairs.append((int(t), int(k)))
        except ValueError:
            raise ConfigError([f"--pairs: cannot read {item!r} as TxK"]) from None
    return pairs


def cmd_ablate(args):
    values = _values(args)
    out = _need_out(args)
    pairs = _pairs(args.pairs)
    budget = pairs[0][0] * pairs[0][1]
    values["method"].update(name="SFM", T=pairs[0][0], K=pairs[0][1], total_physics_steps=budget)
    configure_determinism(args.deterministic, args.threads)
    setup = build_setup(values, 1 if args.deterministic else args.threads)
    cfg, _ = inversion_config_of(values)
    rows = ablation_grid(cfg, pairs, setup.model0,
                         lambda: WaveProblem(setup.geom, setup.wavelet, setup.d_obs, setup.solver_cfg),
                         truth=setup.truth)
    os.makedirs(out, exist_ok=True)
    write_ablation_csv(rows, os.path.join(out, "ablation.csv"))
    for r in rows:
        print(f"({r['T']},{r['K']}) rel_l2={r['rel_l2']:.5f} ssim={r['ssim']:.4f}")


def cmd_gen_model(args):
    out = _need_out(args)
    model = generate_synthetic_benchmark(args.kind, Grid2D(args.nx, args.nz, args.dx, args.dz),
                                         seed=args.seed or 0)
    save_field(model, out)
    print(f"{args.kind}: {args.nx}x{args.nz}, {model.vmin:.0f}-{model.vmax:.0f} m/s -> {out}")


COMMANDS = {"forward": cmd_forward, "invert": cmd_invert, "metrics": cmd_metrics, "deblur": cmd_deblur,
            "compare": cmd_compare, "ablate": cmd_ablate, "gen-model": cmd_gen_model}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, InvalidArgument, StabilityError, ArchitectureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
