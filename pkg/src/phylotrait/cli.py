"""Command-line interface.

Subcommands: loglik, run, simulate, verify, benchmark, summarize.
Exit codes: 0 success, 2 validation/config error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bench import efficiency, render_table
from .config import RunConfig, load_config
from .errors import PhyloTraitError, ConfigError, DataError, NewickError
from .gibbs import make_sampler_setup, WishartPrior
from .likelihood import DiffusionModel, TipLink, log_likelihood
from .logio import read_log, render_summary, summarize_samples, write_log
from .runner import run_chain
from .simulate import SimulationSpec, apply_mar_mask, simulate_traits
from .traits import align_to_tree, read_trait_csv, transform
from .tree import parse_newick


def _load_tree(path):
    return parse_newick(Path(path).read_text(encoding="utf-8"))


def _load_aligned(args, cfg: RunConfig):
    tree = _load_tree(args.tree)
    missing = getattr(args, "missing_token", None) or cfg.missing_token
    tm = read_trait_csv(args.traits, missing_token=missing)
    tm = align_to_tree(tm, tree)
    counts = ", ".join(
        f"{name}={int(c)}" for name, c in zip(tm.trait_names, tm.observed_counts())
    )
    print(
        f"# {tm.n_taxa} taxa, {tm.n_traits} traits; observed cells: {counts}; "
        f"missing {tm.missing_fraction():.1%}",
        file=sys.stderr,
    )
    if cfg.transforms is not None or cfg.standardize:
        tm = transform(tm, cfg.transforms or "none", cfg.standardize)
    return tree, tm


def _link_from_config(cfg: RunConfig, q: int) -> TipLink:
    if cfg.link == "residual":
        return TipLink("residual", cfg.matrix("gamma", q))
    return TipLink("degenerate")


def cmd_loglik(args) -> int:
    cfg = load_config(args.config).validate()
    tree, tm = _load_aligned(args, cfg)
    q = tm.n_traits
    model = DiffusionModel(cfg.matrix("sigma", q), np.asarray(cfg.root_mean, dtype=float), cfg.root_sample_size)
    link = _link_from_config(cfg, q)
    value = log_likelihood(tree, tm, model, link)
    print(f"{value:.12f}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config).validate()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q = args.n_traits
    model = DiffusionModel(
        cfg.matrix("sigma", q),
        np.asarray(cfg.root_mean, dtype=float),
        cfg.root_sample_size,
    )
    link = _link_from_config(cfg, q)
    spec = SimulationSpec(model=model, link=link, n_tips=args.n_tips, seed=args.seed)
    tm, truth, tree = simulate_traits(spec)
    if args.mar is not None:
        rates = tuple(float(r) for r in args.mar.split(","))
        if len(rates) == 1:
            rates = rates[0]
        tm = apply_mar_mask(tm, rates, np.random.default_rng(args.seed + 1))
    (out / "tree.nwk").write_text(tree.to_newick() + "\n", encoding="utf-8")
    _write_csv(out / "traits.csv", tm, args.missing_token)
    with open(out / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("taxon," + ",".join(tm.trait_names) + "\n")
        for i, name in enumerate(tm.taxon_names):
            cells = ",".join(f"{v:.17g}" for v in truth.filled_data[i])
            fh.write(f"{name},{cells}\n")
    counts = ", ".join(
        f"{name}={int(c)}" for name, c in zip(tm.trait_names, tm.observed_counts())
    )
    print(f"wrote {out}/tree.nwk, traits.csv, truth.csv")
    print(f"observed cells per trait: {counts}; missing {tm.missing_fraction():.1%}")
    return 0


def _write_csv(path, tm, missing_token="NA"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("taxon," + ",".join(tm.trait_names) + "\n")
        for i, name in enumerate(tm.taxon_names):
            cells = ",".join(
                f"{tm.values[i, j]:.17g}" if tm.mask[i, j] else missing_token
                for j in range(tm.n_traits)
            )
            fh.write(f"{name},{cells}\n")


def _setup_from_config(tree, tm, cfg: RunConfig):
    q = tm.n_traits
    return make_sampler_setup(
        tree,
        tm,
        cfg.link,
        sigma_prior=WishartPrior(cfg.matrix("sigma_rate", q), cfg.df("sigma_df", q)),
        gamma_prior=(
            WishartPrior(cfg.matrix("gamma_rate", q), cfg.df("gamma_df", q))
            if cfg.link == "residual"
            else None
        ),
        root_mean=np.asarray(cfg.root_mean, dtype=float),
        root_sample_size=cfg.root_sample_size,
        random_scan=cfg.random_scan,
    )


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.sampler is not None:
        cfg.sampler = args.sampler
    if args.chains is not None:
        cfg.chains = args.chains
    cfg.validate()
    tree, tm = _load_aligned(args, cfg)
    setup = _setup_from_config(tree, tm, cfg)
    out = Path(args.out)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.chains)

    def one_chain(c):
        rng = np.random.default_rng(seeds[c])
        result = run_chain(setup, cfg.chain_length, rng, thin=cfg.thin, sampler=cfg.sampler)
        path = out if cfg.chains == 1 else out.with_suffix(f".chain{c}{out.suffix}")
        meta = {
            "version": __version__,
            "seed": cfg.seed,
            "chain": c,
            "sampler": cfg.sampler,
            "link": cfg.link,
            "burn_in": cfg.burn_in,
            "thin": cfg.thin,
            "config_hash": cfg.canonical_hash(),
        }
        write_log(path, meta, result.columns, result.rows)
        return c, path, result

    if cfg.chains == 1:
        results = [one_chain(0)]
    else:
        with ThreadPoolExecutor(max_workers=cfg.chains) as pool:
            results = sorted(pool.map(one_chain, range(cfg.chains)))
    for c, path, result in results:
        print(f"# chain {c}: {result.n_sweeps} sweeps, "
              f"{result.elapsed_seconds:.2f} s -> {path}", file=sys.stderr)
        data = np.asarray(result.rows)
        print(f"== chain {c} posterior summary (burn-in {cfg.burn_in:.0%}) ==")
        print(render_summary(summarize_samples(result.columns, data, cfg.burn_in)))
    return 0


def cmd_summarize(args) -> int:
    meta, columns, data = read_log(args.log)
    burn_in = args.burn_in if args.burn_in is not None else float(meta.get("burn_in", 0.1))
    print(render_summary(summarize_samples(columns, data, burn_in)))
    return 0


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.chain_length = args.sweeps
    cfg.validate()
    tree, tm = _load_aligned(args, cfg)
    setup = _setup_from_config(tree, tm, cfg)
    rows = []
    for sampler in args.samplers.split(","):
        result = run_chain(
            setup, cfg.chain_length, np.random.default_rng(cfg.seed), sampler=sampler.strip()
        )
        rows.append(efficiency(result, cfg.burn_in))
    print(render_table(rows))
    return 0


def cmd_verify(args) -> int:
    from .verify import run_verification

    report = run_verification(seed=args.seed, n_instances=args.instances)
    print(report.render())
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phylotrait",
        description="Linear-time Brownian trait evolution inference with missing data",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("loglik", help="evaluate the observed-data log-likelihood")
    p.add_argument("--tree", required=True)
    p.add_argument("--traits", required=True)
    p.add_argument("--config")
    p.add_argument("--missing-token")
    p.set_defaults(func=cmd_loglik)

    p = sub.add_parser("simulate", help="simulate a tree, traits, and ground truth")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-tips", type=int, required=True)
    p.add_argument("--n-traits", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mar", help="per-trait missing rates, comma separated")
    p.add_argument("--config")
    p.add_argument("--missing-token", default="NA")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run MCMC and write a sample log")
    p.add_argument("--tree", required=True)
    p.add_argument("--traits", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--sampler", choices=["analytic", "baseline"])
    p.add_argument("--chains", type=int)
    p.add_argument("--missing-token")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("summarize", help="recompute the posterior summary from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--burn-in", type=float)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("benchmark", help="compare sampler efficiency on one data set")
    p.add_argument("--tree", required=True)
    p.add_argument("--traits", required=True)
    p.add_argument("--config")
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--seed", type=int)
    p.add_argument("--samplers", default="analytic,baseline")
    p.add_argument("--missing-token")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("verify", help="run the dense-oracle cross-check battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=50)
    p.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError, NewickError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PhyloTraitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
