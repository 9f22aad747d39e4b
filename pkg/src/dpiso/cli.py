"""Command-line entry point.

Subcommands: gen writes datasets (and posets), fit runs one private fit,
bench runs a config-driven experiment grid, audit replays a mechanism on a
neighboring dataset pair. Exit codes: 0 success, 2 validation error, 3 an
internal enumeration or resolution cap was exceeded.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .baseline import baseline_grid_choice
from .bench import (CONFIG_KEYS, loss_by_name, make_mechanism, parse_config,
                    privacy_audit, run_experiment, threshold_events)
from .constrained import DEFAULT_RESOLUTION_CAP, grid_resolution
from .core import CapExceeded, ValidationError
from .generators import (gen_antichain_hard, gen_grid_hard, gen_packing_hard,
                         gen_random_monotone, packing_neighbors)
from .io import (read_dataset_csv, read_poset_json, write_dataset_csv,
                 write_function_json, write_poset_json)
from .total_order import stage_count

__all__ = ["main", "build_parser"]


def _int_csv(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(p) for p in text.split(","))
    except ValueError:
        raise ValidationError(
            f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="dpiso",
        description="Differentially private isotonic regression toolkit.")
    sub = top.add_subparsers(dest="command", required=True)

    gen = sub.add_parser(
        "gen", help="generate a dataset (and for poset kinds, a poset)")
    gen.add_argument("--kind", required=True,
                     choices=["random", "packing", "antichain", "grid"])
    gen.add_argument("--out", required=True, help="dataset CSV path")
    gen.add_argument("--poset-out",
                     help="poset JSON path (antichain and grid kinds)")
    gen.add_argument("--n", type=int, required=True, help="dataset size")
    gen.add_argument("--m", type=int, help="domain size (random, packing)")
    gen.add_argument("--noise", type=float, default=0.25,
                     help="random: label noise half-width")
    gen.add_argument("--seed", type=int, default=0, help="random: seed")
    gen.add_argument("--k", type=int, default=1,
                     help="packing: witness copies")
    gen.add_argument("--j", type=int, default=1,
                     help="packing: threshold index")
    gen.add_argument("--w", type=int, help="antichain/grid: width")
    gen.add_argument("--h", type=int, help="grid: height")
    gen.add_argument("--z", help="antichain/grid: comma-separated payload")
    gen.add_argument("--r", type=int, default=1,
                     help="antichain/grid: copies per payload entry")

    fit = sub.add_parser("fit", help="run one private fit on a dataset")
    fit.add_argument("--algo", required=True,
                     choices=["tree", "fast", "constrained", "poset",
                              "baseline"])
    fit.add_argument("--input", required=True, help="dataset CSV path")
    fit.add_argument("--poset", help="poset JSON (poset algos)")
    fit.add_argument("--epsilon", type=float, required=True)
    fit.add_argument("--loss", choices=["l1", "l2"], default="l2")
    fit.add_argument("--seed", type=int, required=True)
    fit.add_argument("--output", required=True, help="function JSON path")
    fit.add_argument("--m", type=int,
                     help="domain size (default: largest site in the data)")
    fit.add_argument("--variant",
                     choices=["vanilla", "const", "linear", "lipschitz",
                              "convex", "concave"],
                     help="constrained: shape constraint")
    fit.add_argument("--k", type=int,
                     help="constrained: piece or knot budget")
    fit.add_argument("--lf", type=float,
                     help="constrained: slope bound")
    fit.add_argument("--grid", type=int,
                     help="baseline: value-grid step count")

    bench = sub.add_parser(
        "bench", help="run an experiment grid from a config file",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="config file keys (one 'key = value' per line):\n" + "\n".join(
            f"  {key:<14} {desc}" for key, desc in CONFIG_KEYS.items()))
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", help="results CSV (overrides config 'out')")

    audit = sub.add_parser(
        "audit",
        help="empirically audit a mechanism's budget on a packing pair")
    audit.add_argument("--algo", required=True,
                       choices=["tree", "fast", "baseline", "tree_nosplit"])
    audit.add_argument("--trials", type=int, required=True)
    audit.add_argument("--epsilon", type=float, required=True)
    audit.add_argument("--m", type=int, default=2)
    audit.add_argument("--n", type=int, default=16)
    audit.add_argument("--k", type=int, default=1)
    audit.add_argument("--j", type=int, default=2)
    audit.add_argument("--loss", choices=["l1", "l2"], default="l1")
    audit.add_argument("--seed", type=int, default=0)
    audit.add_argument("--x", type=int,
                       help="event site (default: the flipped site)")
    audit.add_argument("--grid", type=int,
                       help="baseline: value-grid step count")
    return top


def _cmd_gen(args) -> int:
    if args.kind in ("random", "packing") and args.m is None:
        raise ValidationError(f"--kind {args.kind} needs --m")
    if args.kind in ("antichain", "grid"):
        if args.w is None or args.z is None:
            raise ValidationError(f"--kind {args.kind} needs --w and --z")
        if args.poset_out is None:
            raise ValidationError(f"--kind {args.kind} needs --poset-out")
    poset = None
    if args.kind == "random":
        data = gen_random_monotone(args.m, args.n, args.noise, args.seed)
    elif args.kind == "packing":
        data = gen_packing_hard(args.m, args.n, args.k, args.j)
    elif args.kind == "antichain":
        poset, data = gen_antichain_hard(args.w, args.n, _int_csv(args.z),
                                         args.r)
    else:
        if args.h is None:
            raise ValidationError("--kind grid needs --h")
        poset, data = gen_grid_hard(args.w, args.h, _int_csv(args.z), args.r,
                                    args.n)
    write_dataset_csv(args.out, data)
    print(f"wrote {data.n} points to {args.out}")
    if poset is not None:
        write_poset_json(args.poset_out, poset)
        print(f"wrote poset of {poset.size} elements to {args.poset_out}")
    return 0


def _effective_resolution(algo: str, args, data, m: int) -> int:
    if algo in ("tree", "fast", "poset"):
        return 2 ** (stage_count(args.epsilon, data.n) - 1)
    if algo == "constrained":
        return grid_resolution(args.variant, data.n, m,
                               stage_count(args.epsilon, data.n),
                               DEFAULT_RESOLUTION_CAP)
    if args.grid is not None:
        return args.grid
    return baseline_grid_choice(args.epsilon, data.n, m)


def _cmd_fit(args) -> int:
    data = read_dataset_csv(args.input)
    loss = loss_by_name(args.loss)
    rng = np.random.default_rng(args.seed)
    poset = None
    if args.algo == "poset" or (args.algo == "baseline"
                                and args.poset is not None):
        if args.poset is None:
            raise ValidationError("--algo poset needs --poset")
        poset = read_poset_json(args.poset)
        m = poset.size
    else:
        m = args.m if args.m is not None else int(data.xs.max())
    if args.algo == "constrained" and args.variant is None:
        raise ValidationError("--algo constrained needs --variant")
    mech = make_mechanism(args.algo, m, loss, args.epsilon, poset=poset,
                          variant=args.variant, k=args.k, lf=args.lf,
                          grid=args.grid)
    fitted = mech(data, rng)
    resolution = _effective_resolution(args.algo, args, data, m)
    meta = {"algo": args.algo, "epsilon": args.epsilon, "loss": args.loss,
            "seed": args.seed, "m": m, "n": data.n, "resolution": resolution}
    if args.variant is not None:
        meta["variant"] = args.variant
    write_function_json(args.output, fitted, meta=meta)
    print(f"fit written to {args.output} (value resolution 1/{resolution})")
    return 0


def _cmd_bench(args) -> int:
    cfg = parse_config(args.config)
    out = args.out if args.out is not None else cfg.out
    if out is None:
        raise ValidationError("no output path: pass --out or set 'out'")
    for n in cfg.ns:
        for epsilon in cfg.epsilons:
            print(f"# cell n={n} epsilon={epsilon} "
                  f"resolution=1/{2 ** (stage_count(epsilon, n) - 1)}")
    results = run_experiment(cfg, out_path=out)
    print(f"wrote {len(results)} trials to {out}")
    return 0


def _cmd_audit(args) -> int:
    loss = loss_by_name(args.loss)
    data, data2 = packing_neighbors(args.m, args.n, args.k, args.j)
    mech = make_mechanism(args.algo, args.m, loss, args.epsilon,
                          grid=args.grid)
    site = args.x if args.x is not None else (
        args.j + 1 if args.j < args.m else args.m)
    events = (threshold_events(site, (0.25, 0.5, 0.75, 0.875, 0.9375))
              + threshold_events(1, (0.25, 0.5)))
    rng = np.random.default_rng(args.seed)
    res = privacy_audit(mech, data, data2, events, args.trials, args.epsilon,
                        rng=rng)
    print(f"declared epsilon {args.epsilon}, estimated {res.eps_hat:.4f}, "
          f"interval [{res.ci_lo:.4f}, {res.ci_hi:.4f}]")
    print("FLAGGED: budget overspend detected" if res.flagged
          else "no violation detected")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"gen": _cmd_gen, "fit": _cmd_fit, "bench": _cmd_bench,
                "audit": _cmd_audit}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CapExceeded as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
