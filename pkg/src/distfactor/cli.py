"""Command-line interface: ``distfactor <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical failure.
Failures print a one-line JSON error record to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .config import ConfigError, load_config
from .dpm import cluster_count_summary, dpm_predictive, run_dpm
from .evaluation import posterior_predictive, ppl
from .gibbs import NumericalFailure, run_chains
from .model import lattice_weights
from .postprocess import (
    AlignedDraws,
    DegenerateSpectrumError,
    aligned_psi,
    eigen_summary,
    orthogonal_align,
    select_k_star,
    typical_distributions,
)
from .simulate import (
    simulate_factor_illustration,
    simulate_from_model,
    simulate_mixture_illustration,
)
from .tree import balanced_tree, default_space
from .tree_builder import build_tree_from_counts

log = logging.getLogger("distfactor")

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _manifest(command, args, inputs: dict, extra=None) -> dict:
    out = {
        "command": command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "inputs": {name: {"path": str(p), "sha256": io.file_digest(p)} for name, p in inputs.items() if p},
    }
    if extra:
        out.update(extra)
    return out


def _load_counts_and_tree(args):
    counts = io.read_counts(args.counts)
    space = io.space_from_counts(counts)
    tree = io.read_tree(args.tree, space)
    return counts, tree


# -- subcommands --------------------------------------------------------------

def cmd_build_tree(args, cfg):
    counts = io.read_counts(args.counts)
    opts = cfg.tree
    if args.pseudo_mass is not None:
        opts = replace(opts, pseudo_mass=args.pseudo_mass)
    if args.exhaustive_limit is not None:
        opts = replace(opts, exhaustive_limit=args.exhaustive_limit)
    tree = build_tree_from_counts(counts, io.space_from_counts(counts), opts)
    io.write_tree(args.out, tree)


def _chain_config(args, cfg):
    return replace(cfg.chain, **_overrides(args))


def _overrides(args) -> dict:
    keys = ("seed", "iterations", "burn_in", "thinning")
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_fit(args, cfg):
    counts, tree = _load_counts_and_tree(args)
    W = io.read_adjacency(args.adjacency, counts.locations)
    chain = _chain_config(args, cfg)
    hyper = cfg.model
    if args.K is not None:
        hyper = hyper.with_K(args.K)
    draws = run_chains(counts, tree, W, hyper, chain, n_chains=args.chains)
    inputs = {"counts": args.counts, "tree": args.tree, "adjacency": args.adjacency, "config": args.config}
    extra = _manifest("fit", argparse.Namespace(seed=chain.seed), inputs, {
        "locations": list(counts.locations),
        "categories": list(counts.labels),
    })
    io.write_draws(args.out, draws, extra={"run": extra}, binary=args.binary)


def cmd_fit_dpm(args, cfg):
    counts = io.read_counts(args.counts)
    dcfg = replace(cfg.dpm, **_overrides(args))
    draws = run_dpm(counts, dcfg)
    summary = cluster_count_summary(draws)
    extra = _manifest("fit-dpm", argparse.Namespace(seed=dcfg.seed), {"counts": args.counts, "config": args.config}, {
        "locations": list(counts.locations),
        "categories": list(counts.labels),
    })
    io.write_draws(args.out, draws, extra={"run": extra}, binary=args.binary)
    io.write_table(
        Path(args.out) / "cluster_count.tsv",
        ["mean", "lower_2.5", "upper_97.5"],
        [[summary.mean, summary.lower, summary.upper]],
    )


def _write_aligned(out: Path, aligned: AlignedDraws):
    np.save(out / "aligned_loadings.npy", aligned.loadings)
    np.save(out / "aligned_factors.npy", aligned.factors)


def _read_aligned(directory: Path) -> AlignedDraws:
    info = io.read_json(directory / "k_star.json")
    loadings = np.load(directory / "aligned_loadings.npy")
    factors = np.load(directory / "aligned_factors.npy")
    return AlignedDraws(info["k_star"], loadings.mean(axis=0), np.empty(0), loadings, factors,
                        info["loss_trace"], info["converged"], info["warning"])


def cmd_postprocess(args, cfg):
    manifest = io.read_manifest(args.draws)
    if manifest["model"] != "factor":
        raise ValueError("postprocess needs factor-model draws")
    draws = io.read_draws(args.draws)
    run = manifest["run"]
    space = io.CategorySpace.from_labels(run["categories"])
    tree = io.read_tree(args.tree, space)
    if tree.digest() != draws.metadata["tree_hash"]:
        raise ValueError("tree file does not match the tree used for fitting")
    opts = cfg.postprocess
    threshold = args.threshold if args.threshold is not None else opts.threshold
    summary = eigen_summary(draws)
    k_star = select_k_star(summary, threshold)
    aligned = orthogonal_align(draws, k_star, init_index=opts.init_index, tol=opts.tol, max_iter=opts.max_iter)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "k_star.json", {
        "k_star": k_star,
        "threshold": threshold,
        "loss_trace": aligned.loss_trace,
        "converged": aligned.converged,
        "warning": aligned.warning,
    })
    io.write_table(
        out / "eigen.tsv",
        ["index", "mean_eigenvalue", "cumulative_proportion"],
        [[k + 1, summary.mean[k], summary.cumulative[k]] for k in range(summary.mean.size)],
    )
    mean_load = aligned.mean_loadings()
    io.write_table(
        out / "aligned_loadings.tsv",
        ["location", *[f"factor{k + 1}" for k in range(k_star)]],
        [[loc, *mean_load[i]] for i, loc in enumerate(run["locations"])],
    )
    for k in range(k_star):
        td = typical_distributions(draws.Mu, aligned, k, tree)
        io.write_table(
            out / f"typical_factor{k + 1}.tsv",
            ["category", "positive_median", "positive_q05", "positive_q95",
             "negative_median", "negative_q05", "negative_q95"],
            [
                [lab, td.positive_median[j], td.positive_interval[0, j], td.positive_interval[1, j],
                 td.negative_median[j], td.negative_interval[0, j], td.negative_interval[1, j]]
                for j, lab in enumerate(run["categories"])
            ],
        )
    _write_aligned(out, aligned)
    io.write_json(out / "manifest.json", _manifest("postprocess", args, {
        "draws_manifest": Path(args.draws) / "manifest.json", "tree": args.tree, "config": args.config,
    }))


def cmd_evaluate(args, cfg):
    manifest = io.read_manifest(args.draws)
    draws = io.read_draws(args.draws)
    counts = io.read_counts(args.counts)
    if list(counts.locations) != manifest["run"]["locations"]:
        raise ValueError("counts locations do not match the fitted draws")
    reps = args.replications if args.replications is not None else cfg.evaluate.replications
    rng = np.random.default_rng(args.seed)
    if manifest["model"] == "dpm":
        stream = dpm_predictive(draws, counts, rng, replications=reps)
    else:
        if args.tree is None:
            raise ValueError("--tree is required for factor-model draws")
        tree = io.read_tree(args.tree, io.space_from_counts(counts))
        psi = None
        if args.postprocess:
            psi = aligned_psi(draws, _read_aligned(Path(args.postprocess)))
        stream = posterior_predictive(draws, tree, counts.totals, rng, reps, psi=psi)
    summary = ppl(stream, counts.counts)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_json(out / "ppl.json", {
        "ppl": summary.ppl,
        "variance_term": summary.variance_term,
        "bias_term": summary.bias_term,
        "replications": summary.replications,
        "model": manifest["model"],
    })
    io.write_table(out / "bias_by_category.tsv", ["category", "average_bias"],
                   zip(counts.labels, summary.bias_by_category))
    io.write_table(out / "variance_by_category.tsv", ["category", "average_variance"],
                   zip(counts.labels, summary.variance_by_category))
    io.write_json(out / "manifest.json", _manifest("evaluate", args, {
        "draws_manifest": Path(args.draws) / "manifest.json", "counts": args.counts,
        "tree": args.tree, "config": args.config,
    }))


def cmd_summarize(args, cfg):
    """Per-location posterior loadings: mean and 90% interval per factor."""
    pp = Path(args.postprocess)
    aligned = _read_aligned(pp)
    manifest = io.read_manifest(args.draws)
    locs = manifest["run"]["locations"]
    mean = aligned.loadings.mean(axis=0)
    lo, hi = np.quantile(aligned.loadings, [0.05, 0.95], axis=0)
    K = aligned.k_star
    header = ["location", *[f"factor{k + 1}" for k in range(K)],
              *[f"factor{k + 1}_q05" for k in range(K)], *[f"factor{k + 1}_q95" for k in range(K)]]
    io.write_table(args.out, header, [[loc, *mean[i], *lo[i], *hi[i]] for i, loc in enumerate(locs)])


def cmd_simulate(args, cfg):
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    if args.kind in ("illustration-mixture", "illustration-factor"):
        sim = simulate_mixture_illustration if args.kind == "illustration-mixture" else simulate_factor_illustration
        p = sim(args.n, rng)
        io.write_table(out, ["c1", "c2", "c3"], p.tolist())
        return
    out.mkdir(parents=True, exist_ok=True)
    space = default_space(args.categories)
    tree = balanced_tree(space)
    W = lattice_weights(args.rows, args.cols)
    hyper = cfg.model
    counts, truth = simulate_from_model(W.size, tree, W, hyper, args.k_true, args.count, rng)
    io.write_counts(out / "counts.tsv", counts)
    io.write_edges(out / "adjacency.txt", W, counts.locations)
    io.write_tree(out / "true_tree.txt", tree)
    np.savez(out / "truth.npz", **{k: v for k, v in vars(truth).items() if v is not None})
    io.write_json(out / "manifest.json", _manifest("simulate", args, {"config": args.config}, {
        "kind": args.kind, "k_true": args.k_true, "rows": args.rows, "cols": args.cols,
        "categories": args.categories, "count": args.count,
    }))


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="distfactor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--config", help="YAML config file")
        if seed:
            sp.add_argument("--seed", type=int)

    sp = sub.add_parser("build-tree", help="greedy max-variance balance tree from counts")
    sp.add_argument("--counts", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--pseudo-mass", type=float)
    sp.add_argument("--exhaustive-limit", type=int)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_build_tree)

    for name, func in (("fit", cmd_fit), ("fit-dpm", cmd_fit_dpm)):
        sp = sub.add_parser(name)
        sp.add_argument("--counts", required=True)
        sp.add_argument("--out", required=True)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--burn-in", type=int)
        sp.add_argument("--thinning", type=int)
        sp.add_argument("--binary", action="store_true", help="store draws as .npy")
        if name == "fit":
            sp.add_argument("--tree", required=True)
            sp.add_argument("--adjacency", required=True)
            sp.add_argument("--chains", type=int, default=1)
            sp.add_argument("--K", type=int)
        common(sp)
        sp.set_defaults(func=func)

    sp = sub.add_parser("postprocess")
    sp.add_argument("--draws", required=True)
    sp.add_argument("--tree", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--threshold", type=float)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_postprocess)

    sp = sub.add_parser("evaluate")
    sp.add_argument("--draws", required=True)
    sp.add_argument("--counts", required=True)
    sp.add_argument("--tree")
    sp.add_argument("--postprocess", help="use rank-K* aligned draws from this directory")
    sp.add_argument("--replications", type=int)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_evaluate, seed=0)

    sp = sub.add_parser("summarize")
    sp.add_argument("--draws", required=True)
    sp.add_argument("--postprocess", required=True)
    sp.add_argument("--out", required=True)
    common(sp, seed=False)
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("simulate")
    sp.add_argument("kind", choices=["illustration-mixture", "illustration-factor", "from-model"])
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--rows", type=int, default=5)
    sp.add_argument("--cols", type=int, default=6)
    sp.add_argument("--categories", type=int, default=8)
    sp.add_argument("--k-true", type=int, default=2)
    sp.add_argument("--count", type=int, default=10000)
    common(sp)
    sp.set_defaults(func=cmd_simulate, seed=0)
    return p


def _error(code, err) -> int:
    record = {"error": type(err).__name__, "message": str(err), "exit_code": code}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        return _error(EXIT_VALIDATION, err)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config)
        if hasattr(args, "seed") and args.seed is None:
            args.seed = cfg.chain.seed
        args.func(args, cfg)
    except NumericalFailure as err:
        return _error(EXIT_NUMERICAL, err)
    except (FloatingPointError, np.linalg.LinAlgError, DegenerateSpectrumError) as err:
        return _error(EXIT_NUMERICAL, err)
    except (ConfigError, ValueError, KeyError) as err:
        return _error(EXIT_VALIDATION, err)
    except OSError as err:
        return _error(EXIT_IO, err)
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
