"""Command line front end.

Each experiment subcommand resolves a preset (or a config JSON), applies
flag overrides, runs all requested seeds and writes the run directory.
Flags win over config-file values; both are recorded in the summary.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .bench import RunConfig

_EXPERIMENTS = {
    "fit-function": "fit-function",
    "lorenz-map": "lorenz-map",
    "solve-pde": "solve-pde",
    "solve-separable": "solve-separable",
    "lorenz-pi": "lorenz-pi",
    "forgetting": "forgetting",
    "ntk": "ntk",
}


def _add_run_args(p):
    p.add_argument("--preset", help="preset name (see `fekan list-presets`)")
    p.add_argument("--config", help="JSON file with a full RunConfig")
    p.add_argument("--seeds", type=int, default=None,
                   help="number of seeds (0..N-1), overrides the preset list")
    p.add_argument("--seed-list", type=int, nargs="+", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--n-res", type=int, default=None)
    p.add_argument("--n-bc", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")


def _resolve(args, experiment) -> RunConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = RunConfig.from_dict(json.load(fh))
    elif args.preset:
        presets = bench.load_presets()
        if args.preset not in presets:
            near = [k for k in presets if experiment == presets[k].experiment]
            raise SystemExit(f"unknown preset {args.preset!r}; options for this "
                             f"experiment: {', '.join(sorted(near))}")
        cfg = presets[args.preset]
    else:
        raise SystemExit("either --preset or --config is required")
    if cfg.experiment != experiment:
        raise SystemExit(f"preset {cfg.name!r} is a {cfg.experiment} config, "
                         f"not {experiment}")
    return cfg


def _run(args, experiment) -> int:
    cfg = _resolve(args, experiment)
    seeds = cfg.seeds
    if args.seed_list is not None:
        seeds = args.seed_list
    elif args.seeds is not None:
        seeds = list(range(args.seeds))
    overrides = {}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.n_res is not None:
        overrides["n_res"] = args.n_res
    if args.n_bc is not None:
        overrides["n_bc"] = args.n_bc
    row, out_dir = bench.run_experiment(cfg, seeds=seeds, overrides=overrides,
                                        out_dir=args.out)
    mean = row["rel_l2_mean"]
    mean_s = "n/a (all diverged)" if mean is None else f"{mean:.6f}"
    print(f"{cfg.name}: rel_l2 {mean_s} over {row['n_seeds']} seed(s), "
          f"{row['diverged_count']} diverged -> {out_dir}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="fekan",
                                 description="feature-enriched KAN experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} experiment")
        _add_run_args(p)

    p = sub.add_parser("make-reference", help="generate a stored PDE reference")
    p.add_argument("--problem", default="allen_cahn")
    p.add_argument("--out", default=None, help="directory for the CSV")

    p = sub.add_parser("compare", help="tabulate summary.json files")
    p.add_argument("summaries", nargs="+")

    sub.add_parser("list-presets", help="print the preset catalog")
    return ap


def cli_main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command in _EXPERIMENTS:
        return _run(args, args.command)
    if args.command == "make-reference":
        try:
            path = bench.make_reference(args.problem, root=args.out)
        except ValueError as e:
            print(str(e), file=sys.stderr)
            return 2
        print(f"wrote {path}")
        return 0
    if args.command == "compare":
        print(bench.compare_summaries(args.summaries))
        return 0
    if args.command == "list-presets":
        for name, cfg in sorted(bench.load_presets().items()):
            print(f"{name:36s} {cfg.experiment:16s} widths={cfg.widths} "
                  f"basis={cfg.basis.get('kind')}")
        return 0
    raise SystemExit(f"unhandled command {args.command}")


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
