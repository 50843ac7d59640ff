"""``kss`` command line tool.

Exit status: 0 on success, 1 when a library error stops the run (the
message names the error), 2 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import HELP, Config, load_config
from .errors import KSSError

WIDTH = 88


def _formatter(prog):
    return argparse.RawDescriptionHelpFormatter(prog, width=WIDTH, max_help_position=32)


def _config_epilog() -> str:
    lines = ["configuration fields (flag > --config file > default):"]
    for f in fields(Config):
        lines.append(f"  {f.name:<20} default {f.default!s:<14} {HELP[f.name]}")
    return "\n".join(lines)


def _config_parent(default=None) -> argparse.ArgumentParser:
    # subcommands use SUPPRESS so they do not overwrite values given before the command
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", metavar="FILE", default=default, help="flat key = value file")
    for f in fields(Config):
        kind = {"int": int, "float": float}.get(f.type, str)
        flag = "--" + f.name.replace("_", "-")
        kwargs = dict(dest=f.name, type=kind, default=default, help=HELP[f.name])
        if f.name == "energy":
            kwargs["choices"] = ["directed_mean", "directed_max", "symmetric_max", "mean", "max", "symmetric"]
        elif f.name == "scale_def":
            kwargs["choices"] = ["frobenius", "as-printed"]
        g.add_argument(flag, **kwargs)
    return p


def build_parser() -> argparse.ArgumentParser:
    parent = _config_parent()
    sub_parent = _config_parent(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(
        prog="kss", formatter_class=_formatter, parents=[parent],
        description="Similarity-invariant point cloud registration.",
        epilog=_config_epilog())
    parser.add_argument("--version", action="store_true", help="print version and config digest")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, parents=[sub_parent], formatter_class=_formatter,
                              epilog=_config_epilog())

    p = add("register", "register a source cloud onto a target cloud")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True, help="transform JSON")
    p.add_argument("--aligned", help="write the transformed source here")
    p.add_argument("--partial", action="store_true", help="source is a partial scan")
    p.add_argument("--exhaustive", action="store_true", help="partial mode without early abandoning")

    p = add("simplify", "reduce a cloud to a fixed number of its points")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)

    p = add("perturb", "apply a seeded perturbation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True,
                   choices=["similarity", "gaussian", "nonzero_mean", "density", "defect"])
    p.add_argument("--r", type=float, default=0.5, help="noise range (multiples of mean kNN distance)")
    p.add_argument("--fraction", type=float, default=0.25, help="defect fraction")
    p.add_argument("--strength", type=float, default=0.6, help="density dropout strength")
    p.add_argument("--scale-lo", type=float, default=0.8)
    p.add_argument("--scale-hi", type=float, default=1.2)
    p.add_argument("--min-rot-deg", type=float, default=30.0)
    p.add_argument("--gt", help="write the ground-truth 4x4 (similarity only) here")

    p = add("evaluate", "index-matched error metrics between two clouds")
    p.add_argument("--registered", required=True)
    p.add_argument("--target", required=True)

    p = add("suite", "run a JSONL manifest of benchmark pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-timings", action="store_true", help="leave ms_* columns empty")
    return parser


def _run(args, config: Config) -> int:
    from .io import load_cloud, save_cloud

    if args.command == "register":
        from .align import register
        from .bench import transform_record
        from .partial import register_partial

        source = load_cloud(args.source)
        target = load_cloud(args.target)
        if args.partial:
            result = register_partial(source, target, config, exhaustive=args.exhaustive)
        else:
            result = register(source, target, config)
        Path(args.out).write_text(json.dumps(transform_record(result, config.theta_deg, config),
                                             indent=2, sort_keys=True) + "\n")
        if args.aligned:
            save_cloud(result.apply(source), args.aligned)
        print(f"E_d {result.energy:.6g}  additional process: {'yes' if result.used_additional_process else 'no'}")
    elif args.command == "simplify":
        from .simplify import simplify

        save_cloud(simplify(load_cloud(args.inp), args.count, config.workers), args.out)
    elif args.command == "perturb":
        from . import bench

        cloud = load_cloud(args.inp)
        seed = config.seed
        gt = None
        if args.kind == "similarity":
            out, gt = bench.perturb_similarity(cloud, seed, args.scale_lo, args.scale_hi, args.min_rot_deg)
        elif args.kind in ("gaussian", "nonzero_mean"):
            out = bench.add_noise(cloud, args.kind, args.r, seed=seed)
        elif args.kind == "density":
            out = bench.perturb_density(cloud, seed, args.strength)
        else:
            out = bench.delete_defect(cloud, args.fraction, seed)
        save_cloud(out, args.out)
        if args.gt and gt is not None:
            Path(args.gt).write_text(json.dumps({"ground_truth": gt.tolist()}, indent=2) + "\n")
    elif args.command == "evaluate":
        from .bench import evaluate

        rep = evaluate(load_cloud(args.registered), load_cloud(args.target))
        print(json.dumps({k: getattr(rep, k) for k in ("mse", "rmse", "mae", "mse_r", "rmse_r", "mae_r")},
                         indent=2))
    elif args.command == "suite":
        from .bench import run_suite

        path = run_suite(args.manifest, args.out, config, timings=not args.no_timings,
                         log=lambda m: print(m, file=sys.stderr))
        print(path)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="kss: %(message)s")
    overrides = {f.name: getattr(args, f.name) for f in fields(Config)}
    try:
        config = load_config(args.config, overrides)
    except OSError as exc:
        print(f"kss: IOError: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"kss: error: {exc}", file=sys.stderr)
        return 2
    if args.version:
        print(f"kss {__version__} config {config.digest()}")
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        print("kss: error: a command is required", file=sys.stderr)
        return 2
    try:
        return _run(args, config)
    except OSError as exc:
        print(f"kss: IOError: {exc}", file=sys.stderr)
        return 1
    except KSSError as exc:
        print(f"kss: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except np.linalg.LinAlgError as exc:
        print(f"kss: LinAlgError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
