"""Command-line entry point."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .errors import ObliviousError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
VERIFY_TOL = 1e-9


def _depths(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad depth range {text!r}") from None


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oblivion", description="Exact attributions for oblivious tree ensembles.")
    sub = p.add_subparsers(dest="command", required=True)

    def model_args(sp):
        sp.add_argument("--model", required=True)
        sp.add_argument("--format", default="canonical", choices=["canonical", "catboost-dump"])
        sp.add_argument("--reference", help="CSV of feature rows with the expected prediction last")

    sp = sub.add_parser("precompute", help="build and save attribution tables")
    model_args(sp)
    sp.add_argument("--data", help="CSV used to estimate leaf probabilities")
    sp.add_argument("--header", action="store_true", help="CSV files start with a header row")
    sp.add_argument("--game", default="shapley")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("explain", help="attributions for rows of a CSV file")
    model_args(sp)
    sp.add_argument("--tables", required=True)
    sp.add_argument("--data", help="CSV for leaf probabilities when the model has none")
    sp.add_argument("--input", required=True)
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("verify", help="compare tables with brute force at every leaf")
    model_args(sp)
    sp.add_argument("--data")
    sp.add_argument("--header", action="store_true")
    sp.add_argument("--game", default="shapley")
    sp.add_argument("--max-players", type=int, default=12)

    sp = sub.add_parser("bench", help="timing and error-scaling runs on synthetic data")
    sp.add_argument("--depths", type=_depths, default=list(range(4, 13)))
    sp.add_argument("--trees", type=int, default=300)
    sp.add_argument("--runs", type=int, default=5)
    sp.add_argument("--timed-trees", type=int, default=2)
    sp.add_argument("--points", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("--no-plots", action="store_true")
    sp.add_argument("--scaling", action="store_true", help="also run the estimator error experiment")

    sp = sub.add_parser("repro", help="rerun a worked example")
    sp.add_argument("--example", required=True, choices=["3.1", "3.6", "C.2"])
    return p


def _load_model(args):
    from .io import load_dataset, load_model

    reference = None
    if args.reference:
        ref = load_dataset(args.reference, getattr(args, "header", False)).rows
        reference = (ref[:, :-1], ref[:, -1])
    ens = load_model(args.model, args.format, reference)
    data = getattr(args, "data", None)
    if data:
        ens = ens.with_data(load_dataset(data, args.header))
    return ens


def _game(args, ens):
    from .io import parse_game

    return parse_game(args.game, ens.n_features)


def cmd_precompute(args) -> int:
    from .engine import precompute_ensemble
    from .io import save_tables

    ens = _load_model(args)
    tables = precompute_ensemble(ens, _game(args, ens))
    save_tables(tables, args.out)
    print(f"wrote {len(tables.trees)} tables to {args.out}")
    return EXIT_OK


def cmd_explain(args) -> int:
    from .engine import explain_batch
    from .io import load_dataset, load_tables

    ens = _load_model(args)
    tables = load_tables(args.tables)
    data = load_dataset(args.input, args.header)
    phi = explain_batch(tables, ens, data.rows)
    residual = phi.sum(axis=1) - (ens.predict(data.rows) - ens.mean_prediction())
    names = list(data.columns) if data.columns else [f"phi_{i}" for i in range(ens.n_features)]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["sum_check"])
        for row, r in zip(phi, residual):
            w.writerow([repr(float(v)) for v in row] + [repr(float(r))])
    print(f"wrote {phi.shape[0]} rows to {args.out}; max |sum_check| = {np.max(np.abs(residual), initial=0.0):.3g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .engine import precompute_tree_table
    from .oracle import brute_force_table

    ens = _load_model(args)
    spec = _game(args, ens)
    worst, checked, skipped = 0.0, 0, 0
    for tree in ens.trees:
        if tree.partition.k > args.max_players:
            skipped += 1
            continue
        rows = precompute_tree_table(tree, spec).rows
        ref = brute_force_table(tree, spec)
        worst = max(worst, float(np.max(np.abs(rows - ref), initial=0.0)))
        checked += 1
    print(f"checked {checked} trees, skipped {skipped}; max abs deviation {worst:.3e}")
    ok = worst <= VERIFY_TOL
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bench(args) -> int:
    from .bench import (
        error_scaling_experiment,
        log2_growth,
        linear_r2,
        timing_experiment,
        write_scaling_csv,
        write_timing_csv,
    )

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = timing_experiment(args.depths, args.trees, runs=args.runs, timed_trees=args.timed_trees,
                             points=args.points, seed=args.seed)
    write_timing_csv(rows, out / "timing.csv")
    for r in rows:
        print(f"depth {r.depth:2d}  precompute/tree {r.precompute_per_tree:.4g} s  "
              f"explain/point {r.explain_per_point:.4g} s")
    if len(rows) > 1:
        print(f"max log2 growth per level {max(log2_growth(rows)):.3f}; "
              f"explain linear fit R^2 {linear_r2([r.depth for r in rows], [r.explain_per_point for r in rows]):.4f}")
    scaling = None
    if args.scaling:
        from .bench import scaling_tree

        scaling = error_scaling_experiment(scaling_tree(args.seed), [100, 1000, 10000], seed=args.seed)
        write_scaling_csv(scaling, out / "scaling.csv")
    if not args.no_plots:
        from .plotting import plot_scaling, plot_timing

        plot_timing(rows, out / "timing.png")
        if scaling:
            plot_scaling(scaling, out / "scaling.png")
    print(f"wrote results to {out}")
    return EXIT_OK


def cmd_repro(args) -> int:
    from .reproductions import REPRODUCTIONS

    report = REPRODUCTIONS[args.example]()
    print("\n".join(report.lines()))
    return EXIT_OK if report.passed else EXIT_FAIL


COMMANDS = {"precompute": cmd_precompute, "explain": cmd_explain, "verify": cmd_verify,
            "bench": cmd_bench, "repro": cmd_repro}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ObliviousError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
