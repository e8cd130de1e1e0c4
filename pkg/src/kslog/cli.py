"""Command line interface.

Verbs: simulate, distances, reconstruct, experiment run, analyze
sufficiency. Exit codes: 0 success, 2 reconstruction failure, 3 invalid
configuration or input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from kslog.averaging import GridParams
from kslog.distances import (DistanceTable, correlation_matrix, cfn_distance,
                             logdet_distance, uncorrected_table,
                             write_distance_csv, read_distance_csv)
from kslog.enumeration import sufficiency_demo
from kslog.errors import ConfigError, ReconstructionFailure
from kslog.experiments import (ExperimentConfig, run_experiment,
                               write_records_csv, summary_json)
from kslog.forests import forest_reconstruct
from kslog.homogeneous import reconstruct_homogeneous
from kslog.models import resolve_model
from kslog.simulate import dump_alignment, load_alignment, sample_alignment
from kslog.trees import (Phylogeny, homogeneous_phylogeny,
                         random_grid_phylogeny, random_ultrametric_phylogeny)
from kslog.wpgma import wpgma


def _tree_from_args(args) -> Phylogeny:
    if args.newick:
        with open(args.newick) as fh:
            return Phylogeny.from_newick(fh.read())
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=args.seed, spawn_key=(1, args.replicate)))
    if args.homogeneous is not None:
        if args.edge_length is not None:
            return homogeneous_phylogeny(args.homogeneous, args.edge_length)
        lo = math.ceil(args.edge_min / args.delta - 1e-9)
        hi = math.floor(args.edge_max / args.delta + 1e-9)
        n_edges = 2 ** (args.homogeneous + 1) - 2
        lengths = rng.integers(lo, hi + 1, size=n_edges) * args.delta
        return homogeneous_phylogeny(args.homogeneous, lengths)
    if args.random is not None:
        return random_grid_phylogeny(args.random, args.delta, args.edge_min,
                                     args.edge_max, rng)
    if args.ultrametric is not None:
        return random_ultrametric_phylogeny(args.ultrametric, args.edge_min,
                                            args.edge_max, rng)
    raise ConfigError("tree: give --newick, --homogeneous, --random, "
                      "or --ultrametric")


def _add_tree_args(p):
    p.add_argument("--newick", help="tree file (Newick with branch lengths)")
    p.add_argument("--homogeneous", type=int, metavar="H",
                   help="complete balanced tree with 2**H leaves")
    p.add_argument("--random", type=int, metavar="N",
                   help="random grid tree on N leaves")
    p.add_argument("--ultrametric", type=int, metavar="N",
                   help="random clock tree on N leaves")
    p.add_argument("--edge-length", type=float, dest="edge_length",
                   help="fixed edge length for --homogeneous")
    p.add_argument("--edge-min", type=float, default=0.1, dest="edge_min")
    p.add_argument("--edge-max", type=float, default=0.3, dest="edge_max")
    p.add_argument("--delta", type=float, default=0.05)


def _out(path):
    return open(path, "w") if path else sys.stdout


def _cmd_simulate(args) -> int:
    model = resolve_model(args.model)
    tree = _tree_from_args(args)
    aln = sample_alignment(tree, model, args.sites, args.seed, args.replicate)
    fh = _out(args.dump_alignment)
    try:
        dump_alignment(aln, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    print(f"simulated {aln.k} sites at {aln.n} leaves "
          f"(seed {args.seed}, replicate {args.replicate})", file=sys.stderr)
    return 0


def _cmd_distances(args) -> int:
    model = resolve_model(args.model)
    with open(args.alignment) as fh:
        aln = load_alignment(fh, model.phi)
    n = aln.n
    if args.estimator == "eigen":
        values = DistanceTable.from_alignment(aln, model).tau
    elif args.estimator == "uncorrected":
        values = uncorrected_table(aln, model)
    else:
        fn = cfn_distance if args.estimator == "cfn" else logdet_distance
        values = np.zeros((n, n))
        for a in range(n):
            for b in range(a + 1, n):
                values[a, b] = values[b, a] = fn(correlation_matrix(aln, a, b))
    fh = _out(args.out)
    try:
        write_distance_csv(values, args.estimator, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def _cmd_reconstruct(args) -> int:
    with open(args.distances) as fh:
        estimator, values = read_distance_csv(fh)
    params = GridParams.defaults(args.delta, args.edge_min, args.edge_max,
                                 diameter=args.diameter, band=args.band)
    diagnostics = None
    if args.algorithm == "wpgma":
        if estimator != "uncorrected":
            raise ConfigError("wpgma needs an 'uncorrected' distance table")
        result = wpgma(values)
        topo = result.topology()
        newick = result.newick_with_heights()
    else:
        if estimator not in ("eigen", "cfn"):
            raise ConfigError(f"{args.algorithm} needs a log-scale distance "
                              f"table, got estimator {estimator!r}")
        with np.errstate(over="ignore"):
            expneg = np.exp(-values)
        np.fill_diagonal(expneg, 1.0)
        table = DistanceTable(expneg, estimator)
        if args.algorithm == "cherry":
            res = reconstruct_homogeneous(table, params)
        else:
            res = forest_reconstruct(table, params)
        topo = res.topology
        newick = topo.newick()
        diagnostics = res.diagnostics()
    fh = _out(args.out)
    try:
        fh.write(newick + "\n")
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.diagnostics and diagnostics is not None:
        with open(args.diagnostics, "w") as fh:
            json.dump(diagnostics, fh, sort_keys=True, indent=2)
    _ = topo
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config) as fh:
        config = ExperimentConfig.from_dict(json.load(fh))
    records, summary = run_experiment(config)
    if args.records:
        with open(args.records, "w") as fh:
            write_records_csv(records, fh)
    text = summary_json(summary)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    total = sum(r.wall_time_s for r in records)
    print(f"ran {len(records)} replicates in {total:.1f}s", file=sys.stderr)
    return 0


def _cmd_analyze(args) -> int:
    rows = []
    for mode in ("small", "near-half"):
        res = sufficiency_demo(args.eps, mode)
        rows.append((mode, res))
    print(f"{'mode':<10} {'p':>8} {'P[data1]':>13} {'P[data2]':>13} "
          f"{'ratio':>10}")
    for mode, res in rows:
        print(f"{mode:<10} {res['p']:>8.4f} {res['likelihood_1']:>13.4e} "
              f"{res['likelihood_2']:>13.4e} {res['ratio_2_over_1']:>10.4g}")
    uniform = all(res["correlations_all_quarters"] for _, res in rows)
    print(f"pairwise correlation matrices all 1/4: {uniform}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kslog",
        description="distance-based phylogeny reconstruction by "
                    "exponential averaging")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="sample an alignment on a tree")
    ps.add_argument("--model", default="cfn")
    _add_tree_args(ps)
    ps.add_argument("--sites", type=int, required=True)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--replicate", type=int, default=0)
    ps.add_argument("--dump-alignment", dest="dump_alignment",
                    help="write the alignment here (default stdout)")
    ps.set_defaults(fn=_cmd_simulate)

    pd = sub.add_parser("distances", help="pairwise distance table (CSV)")
    pd.add_argument("--model", default="cfn")
    pd.add_argument("--alignment", required=True)
    pd.add_argument("--estimator", default="eigen",
                    choices=["eigen", "cfn", "logdet", "uncorrected"])
    pd.add_argument("--out")
    pd.set_defaults(fn=_cmd_distances)

    pr = sub.add_parser("reconstruct", help="tree from a distance table")
    pr.add_argument("--distances", required=True)
    pr.add_argument("--algorithm", default="cherry",
                    choices=["cherry", "forest", "wpgma"])
    pr.add_argument("--delta", type=float, default=0.05)
    pr.add_argument("--edge-min", type=float, default=0.1, dest="edge_min")
    pr.add_argument("--edge-max", type=float, default=0.3, dest="edge_max")
    pr.add_argument("--diameter", type=float)
    pr.add_argument("--band", type=float, default=6.0)
    pr.add_argument("--out")
    pr.add_argument("--diagnostics")
    pr.set_defaults(fn=_cmd_reconstruct)

    pe = sub.add_parser("experiment", help="run an experiment config")
    esub = pe.add_subparsers(dest="subcommand", required=True)
    per = esub.add_parser("run")
    per.add_argument("config")
    per.add_argument("--records", help="per-replicate CSV output")
    per.add_argument("--summary", help="summary JSON output")
    per.set_defaults(fn=_cmd_experiment)

    pa = sub.add_parser("analyze", help="statistical demonstrations")
    asub = pa.add_subparsers(dest="subcommand", required=True)
    pas = asub.add_parser("sufficiency")
    pas.add_argument("--eps", type=float, default=0.01)
    pas.set_defaults(fn=_cmd_analyze)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ReconstructionFailure as exc:
        print(f"reconstruction failed: {exc}", file=sys.stderr)
        if exc.diagnostics is not None:
            print(json.dumps(exc.diagnostics, sort_keys=True), file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
