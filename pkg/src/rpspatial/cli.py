"""Command-line interface.

Subcommands: simulate | rank-select | fit | adjust | predict | bench-approx |
study | diagnose. Settings come from flags, overriding an optional JSON config
file (--config), overriding defaults. Report-producing subcommands write the
delimited output plus a rendered figure next to it (suppress with --no-plots).

Exit codes: 0 success, 1 runtime/numeric failure, 2 usage or ingestion error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, mcmc, rankselect, report, simulate
from .covariance import ArealGraph, MaternParams
from .models import FAMILIES, ModelSpec, PriorSpec, SpatialDataset
from .randproj import (
    SketchConfig,
    approx_eigs,
    deterministic_subsample_eigs,
    eigenvalue_error,
    subspace_distance,
)

log = logging.getLogger("rpspatial")


class IngestionError(ValueError):
    """Malformed input file or invalid user configuration."""


# ---------------------------------------------------------------------------
# data files
# ---------------------------------------------------------------------------


def write_dataset_csv(data: SpatialDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if data.is_areal:
            header = ["unit_id"] + [f"x{j + 1}" for j in range(data.p)] + ["z"]
            writer.writerow(header)
            for i in range(data.n):
                writer.writerow([i] + [repr(float(v)) for v in data.X[i]] + [_fmt_resp(data.response[i], data.family)])
        else:
            header = ["x", "y"] + [f"x{j + 1}" for j in range(data.p)] + ["z"]
            writer.writerow(header)
            for i in range(data.n):
                row = [repr(float(v)) for v in data.locations[i]]
                row += [repr(float(v)) for v in data.X[i]]
                row.append(_fmt_resp(data.response[i], data.family))
                writer.writerow(row)


def _fmt_resp(value: float, family: str):
    if family == "gaussian":
        return repr(float(value))
    return int(value)


def write_adjacency_csv(graph: ArealGraph, path) -> None:
    edges = np.argwhere(np.triu(graph.adjacency) == 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j"])
        for i, j in edges:
            writer.writerow([int(i), int(j)])


def load_adjacency_csv(path, n: int) -> ArealGraph:
    a = np.zeros((n, n), dtype=np.int64)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"i", "j"} <= set(reader.fieldnames):
            raise IngestionError(f"{path}: adjacency edge list needs columns i,j")
        for row in reader:
            i, j = int(row["i"]), int(row["j"])
            a[i, j] = a[j, i] = 1
    return ArealGraph(adjacency=a)


def load_dataset_csv(path, family: str, adjacency=None) -> SpatialDataset:
    """Load the data CSV (columns x,y | unit_id, covariates x1..xp, response z)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        rows = list(reader)
    if "z" not in header:
        raise IngestionError(f"{path}: missing response column 'z'")
    areal = "unit_id" in header
    if not areal and ("x" not in header or "y" not in header):
        raise IngestionError(f"{path}: need location columns 'x','y' or 'unit_id'")
    cov_names = sorted(
        (c for c in header if c.startswith("x") and c[1:].isdigit()),
        key=lambda c: int(c[1:]),
    )
    idx = {name: header.index(name) for name in header}
    n = len(rows)
    vals = np.empty((n, len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                vals[i, j] = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: non-numeric value {cell!r} at row {i + 2}, column {header[j]!r}"
                ) from None
    X = vals[:, [idx[c] for c in cov_names]]
    z = vals[:, idx["z"]]
    if areal:
        if adjacency is None:
            raise IngestionError("areal data requires --adjacency")
        graph = adjacency if isinstance(adjacency, ArealGraph) else load_adjacency_csv(adjacency, n)
        return SpatialDataset(X=X, response=z, family=family, graph=graph)
    locs = vals[:, [idx["x"], idx["y"]]]
    return SpatialDataset(X=X, response=z, family=family, locations=locs)


def load_locations_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """New-site CSV: columns x,y and optional covariates x1..xp."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y"} <= set(reader.fieldnames):
            raise IngestionError(f"{path}: need columns 'x','y'")
        cov_names = sorted(
            (c for c in reader.fieldnames if c.startswith("x") and c[1:].isdigit()),
            key=lambda c: int(c[1:]),
        )
        locs, covs = [], []
        for row in reader:
            locs.append([float(row["x"]), float(row["y"])])
            if cov_names:
                covs.append([float(row[c]) for c in cov_names])
    locs = np.asarray(locs)
    return locs, (np.asarray(covs) if covs else None)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def _explicit_dests(parser: argparse.ArgumentParser, args, argv: list[str]) -> set:
    """Dests set on the command line (precedence: flags > config file > defaults)."""
    actions = list(parser._actions)
    sub = getattr(args, "subcommand", None)
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction) and sub in action.choices:
            actions += action.choices[sub]._actions
    explicit = set()
    for action in actions:
        for opt in action.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                explicit.add(action.dest)
    return explicit


def _apply_config_file(args: argparse.Namespace, known_dests: set, explicit: set) -> argparse.Namespace:
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{args.config}: invalid JSON ({exc})") from None
    unknown = set(cfg) - known_dests
    if unknown:
        raise IngestionError(f"{args.config}: unknown config keys {sorted(unknown)}")
    for key, value in cfg.items():
        if key not in explicit:
            setattr(args, key, value)
    return args


def _model_spec_from_args(args, family: str) -> ModelSpec:
    priors = PriorSpec(phi_range=(args.phi_min, args.phi_max))
    nugget = family in ("gaussian", "bernoulli-probit") or args.nugget
    sketch = SketchConfig(
        rank_m=args.rank,
        oversample_l=args.oversample,
        power_alpha=args.alpha,
        seed=args.seed,
    )
    return ModelSpec(
        restricted=args.model == "rrp",
        rank_m=args.rank,
        sketch=sketch,
        priors=priors,
        nugget=nugget,
        nu=args.nu,
    )


def _mcmc_config_from_args(args) -> mcmc.McmcConfig:
    return mcmc.McmcConfig(
        iterations=args.iterations,
        burnin=args.burnin,
        thin=args.thin,
        seed=args.seed,
        n_chains=args.chains,
        phi_grid=args.phi_grid,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.areal_lattice:
        rows, cols = args.areal_lattice
        graph = simulate.lattice_graph(rows, cols)
        data, truth = simulate.simulate_areal_dataset(
            graph, args.family, tau_smooth=args.tau_smooth, seed=args.seed
        )
        write_dataset_csv(data, out / "data.csv")
        write_adjacency_csv(graph, out / "adjacency.csv")
        truth_json = {
            "scheme": "areal",
            "family": args.family,
            "beta": list(truth["beta"]),
            "tau_smooth": truth["tau_smooth"],
            "seed": args.seed,
            "w": list(map(float, truth["w"])),
        }
        report.write_json(truth_json, out / "truth.json")
        return 0
    scheme = simulate.SimScheme(
        scheme=args.scheme,
        family=args.family,
        n=args.n,
        theta=MaternParams(args.sigma2, args.phi, args.nu),
        tau2=args.tau2,
        seed=args.seed,
    )
    data, truth = simulate.simulate_dataset(scheme)
    write_dataset_csv(data, out / "data.csv")
    report.write_json(truth.to_dict(), out / "truth.json")
    return 0


def cmd_rank_select(args) -> int:
    data = load_dataset_csv(args.data, args.family, adjacency=args.adjacency)
    candidates = tuple(int(v) for v in args.ranks.split(",")) if args.ranks else rankselect.DEFAULT_CANDIDATES
    rep = rankselect.select_rank(data, phi0=args.phi0, candidate_ranks=candidates, nu=args.nu)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "candidates": list(rep.candidates),
        "bic": [b if np.isfinite(b) else "inf" for b in rep.bic],
        "chosen_rank": rep.chosen_rank,
        "phi0": None if np.isnan(rep.phi0) else rep.phi0,
        "family": rep.family,
        "exact_basis": rep.exact_basis,
    }
    report.write_json(payload, out / "rank_report.json", schema="rank_report.schema.json")
    report.write_csv(
        [{"rank": m, "bic": b} for m, b in zip(rep.candidates, rep.bic)],
        out / "bic.csv",
        columns=["rank", "bic"],
    )
    print(f"chosen rank: {rep.chosen_rank}")
    return 0


def _sidecar_payload(chain: mcmc.Chain) -> dict:
    return {
        "seed": int(chain.seed),
        "family": chain.family,
        "model": {
            "restricted": chain.model.restricted,
            "rank_m": chain.model.rank_m,
            "nugget": chain.model.nugget,
            "nu": chain.model.nu,
            "oversample_l": chain.model.sketch_config().sketch_k - chain.model.rank_m,
            "power_alpha": chain.model.sketch_config().power_alpha,
        },
        "config": {
            "iterations": chain.config.iterations,
            "burnin": chain.config.effective_burnin,
            "thin": chain.config.thin,
            "phi_grid": chain.config.phi_grid,
        },
        "acceptance": {k: (None if not np.isfinite(v) else float(v)) for k, v in chain.acceptance.items()},
        "wall_time": float(chain.extras.get("wall_time", 0.0)),
        "sketch_seeds": [int(v) for v in chain.samples["sketch_seed"]],
    }


def cmd_fit(args) -> int:
    data = load_dataset_csv(args.data, args.family, adjacency=args.adjacency)
    if args.auto_rank:
        rep = rankselect.select_rank(data, nu=args.nu)
        args.rank = rep.chosen_rank
        log.info("auto-selected rank %d", args.rank)
    if args.rank is None:
        raise IngestionError("either --rank or --auto-rank is required")
    spec = _model_spec_from_args(args, args.family)
    config = _mcmc_config_from_args(args)
    chains = mcmc.run_chains(data, spec, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    pooled = {
        key: np.concatenate([c.samples[key] for c in chains], axis=0)
        for key in chains[0].samples
    }
    merged = mcmc.Chain(
        samples=pooled,
        acceptance=chains[0].acceptance,
        seed=config.seed,
        model=spec,
        config=config,
        family=data.family,
        provider=chains[0].provider,
        extras=chains[0].extras,
    )
    for i, chain in enumerate(chains):
        report.write_chain_csv(chain, out / f"chain_{i}.csv")
        report.write_json(_sidecar_payload(chain), out / f"chain_{i}.json", schema="sidecar.schema.json")

    models_block = {}
    label = "rrp" if spec.restricted else "frp"
    models_block[label] = _summary_block(merged, data)
    if spec.restricted and args.adjust:
        adjusted = mcmc.posterior_adjust(merged, data.X)
        models_block["a-rrp"] = _summary_block(merged, data, adjusted_beta=adjusted)
    payload = {"family": data.family, "n_chains": len(chains), "models": models_block}
    report.write_json(payload, out / "summary.json", schema="summary.schema.json")
    if not args.no_plots:
        report.render_trace_figure(chains[0].samples, out / "trace.png")
    return 0


def _summary_block(chain: mcmc.Chain, data: SpatialDataset, adjusted_beta=None) -> dict:
    summaries = mcmc.summarize_chain(chain, adjusted_beta=adjusted_beta)
    se = mcmc.mcmc_se_check(chain)
    return {
        "parameters": {
            name: {
                "mean": s.mean,
                "ci_lower": s.ci_lower,
                "ci_upper": s.ci_upper,
                "ess": s.ess,
                "mcse": s.mcse,
                "adjusted": s.adjusted,
            }
            for name, s in summaries.items()
        },
        "se_check": se,
        "dic": mcmc.dic(chain, data),
    }


def _rebuild_chain(chain_csv, sidecar_json, data: SpatialDataset) -> mcmc.Chain:
    samples = report.read_chain_csv(chain_csv)
    with open(sidecar_json) as fh:
        side = json.load(fh)
    samples["sketch_seed"] = np.asarray(side["sketch_seeds"], dtype=np.int64)
    if samples["sketch_seed"].shape[0] != samples["beta"].shape[0]:
        raise IngestionError("sidecar sketch_seeds do not match the chain length")
    model = side["model"]
    spec = ModelSpec(
        restricted=model["restricted"],
        rank_m=model["rank_m"],
        sketch=SketchConfig(
            rank_m=model["rank_m"],
            oversample_l=model.get("oversample_l"),
            power_alpha=model.get("power_alpha", 1),
        ),
        nugget=model["nugget"],
        nu=model["nu"],
    )
    config = mcmc.McmcConfig(
        iterations=side["config"]["iterations"],
        burnin=side["config"]["burnin"],
        thin=side["config"]["thin"],
        seed=side["seed"],
        phi_grid=side["config"].get("phi_grid"),
    )
    provider = mcmc._make_provider(data, spec)
    return mcmc.Chain(
        samples=samples,
        acceptance=side.get("acceptance", {}),
        seed=side["seed"],
        model=spec,
        config=config,
        family=side["family"],
        provider=provider,
    )


def cmd_adjust(args) -> int:
    data = load_dataset_csv(args.data, args.family, adjacency=args.adjacency)
    chain = _rebuild_chain(args.chain, args.sidecar, data)
    adjusted = mcmc.posterior_adjust(chain, data.X)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "family": data.family,
        "n_chains": 1,
        "models": {
            "rrp": _summary_block(chain, data),
            "a-rrp": _summary_block(chain, data, adjusted_beta=adjusted),
        },
    }
    report.write_json(payload, out / "adjusted_summary.json", schema="summary.schema.json")
    return 0


def cmd_predict(args) -> int:
    data = load_dataset_csv(args.data, args.family, adjacency=args.adjacency)
    chain = _rebuild_chain(args.chain, args.sidecar, data)
    locs, covs = load_locations_csv(args.locations)
    pred = mcmc.predict(chain, locs, data, new_X=covs, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(locs.shape[0]):
        row = {
            "x": locs[i, 0],
            "y": locs[i, 1],
            "mean": pred.mean[i],
            "lower": pred.lower[i],
            "upper": pred.upper[i],
        }
        if pred.obs_lower is not None:
            row["obs_lower"] = pred.obs_lower[i]
            row["obs_upper"] = pred.obs_upper[i]
        rows.append(row)
    report.write_csv(rows, out / "predictions.csv")
    if not args.no_plots:
        report.render_prediction_figure(locs, pred.mean, out / "predictions.png")
    return 0


def cmd_bench_approx(args) -> int:
    from scipy.linalg import eigh
    from scipy.spatial.distance import pdist, squareform

    from .covariance import matern_corr

    rng = np.random.default_rng(args.seed)
    locs = rng.random((args.n, 2))
    dist = squareform(pdist(locs))
    ranks = [int(v) for v in args.ranks.split(",")]
    nus = [float(v) for v in args.nu.split(",")]
    rows = []
    for nu in nus:
        k_mat = matern_corr(dist, args.phi, nu)
        np.fill_diagonal(k_mat, 1.0)
        lam_all, vec_all = eigh(k_mat)
        lam_all, vec_all = lam_all[::-1], vec_all[:, ::-1]
        for m in ranks:
            v_true = vec_all[:, :m]
            lam_true = lam_all[:m]
            k_sketch = min(2 * m, args.n)
            for s in range(args.seeds):
                eig = deterministic_subsample_eigs(k_mat, k_sketch, m, seed=1000 + s)
                rows.append(_bench_row(nu, "deterministic", "", m, s, eig, v_true, lam_true))
                for alpha in (0, 1, 2):
                    cfg = SketchConfig(rank_m=m, power_alpha=alpha, seed=1000 + s)
                    eig = approx_eigs(k_mat, cfg)
                    rows.append(_bench_row(nu, "gaussian", alpha, m, s, eig, v_true, lam_true))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ["nu", "method", "alpha", "rank", "seed", "subspace_dist", "eig_err"]
    report.write_csv(rows, out / "bench.csv", columns=cols)
    if not args.no_plots:
        report.render_bench_figure(rows, out / "bench.png")
    return 0


def _bench_row(nu, method, alpha, rank, seed, eig, v_true, lam_true) -> dict:
    return {
        "nu": nu,
        "method": method,
        "alpha": alpha,
        "rank": rank,
        "seed": seed,
        "subspace_dist": subspace_distance(eig.U, v_true),
        "eig_err": eigenvalue_error(eig.D, lam_true),
    }


def cmd_study(args) -> int:
    if not args.models:
        raise IngestionError("at least one model is required (--models frp,rrp)")
    scheme = simulate.SimScheme(
        scheme=args.scheme,
        family=args.family,
        n=args.n,
        theta=MaternParams(args.sigma2, args.phi, args.nu),
        tau2=args.tau2,
        seed=args.seed,
    )
    models = []
    for label in args.models.split(","):
        label = label.strip().lower()
        if label not in ("frp", "rrp"):
            raise IngestionError(f"unknown model {label!r}; expected frp or rrp")
        nugget = args.family in ("gaussian", "bernoulli-probit")
        models.append(
            (
                label,
                ModelSpec(
                    restricted=label == "rrp",
                    rank_m=args.rank,
                    nugget=nugget,
                    nu=args.nu,
                    priors=PriorSpec(phi_range=(args.phi_min, args.phi_max)),
                ),
            )
        )
    config = mcmc.McmcConfig(
        iterations=args.iterations,
        burnin=args.burnin,
        thin=args.thin,
        seed=args.seed,
        phi_grid=args.phi_grid,
    )
    threads = args.threads or int(os.environ.get("RPSPATIAL_THREADS", "1"))
    result = simulate.run_replicate_study(scheme, models, config, args.replicates, threads=threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if result.rows:
        report.write_csv(result.rows, out / "study.csv", columns=list(result.rows[0].keys()))
    else:
        report.write_csv([], out / "study.csv", columns=["model"])
    manifest = {
        "scheme": scheme.scheme,
        "family": scheme.family,
        "n": scheme.n,
        "n_replicates": args.replicates,
        "n_failed": result.n_failed,
        "seed": args.seed,
        "models": [label for label, _ in models],
        "version": __version__,
    }
    report.write_json(manifest, out / "manifest.json", schema="manifest.schema.json")
    if result.replicates and not args.no_plots:
        report.render_study_figure(result.replicates, out / "study.png")
    return 0


def cmd_diagnose(args) -> int:
    samples = report.read_chain_csv(args.chain)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    p = samples["beta"].shape[1]
    paths = {f"beta_{j + 1}": samples["beta"][:, j] for j in range(p)}
    paths["sigma2"] = samples["sigma2"]
    if "tau2" in samples:
        paths["tau2"] = samples["tau2"]
    if np.all(np.isfinite(samples["phi"])):
        paths["phi"] = samples["phi"]
    for name, x in paths.items():
        se = mcmc.batch_means_se(x)
        rows.append(
            {
                "parameter": name,
                "mean": float(np.mean(x)),
                "ess": mcmc.ess(x) if x.shape[0] >= 100 and np.var(x) > 0 else 0.0,
                "mcse": se,
                "se_ok": se < args.threshold,
            }
        )
    report.write_csv(rows, out / "diagnostics.csv")
    if not args.no_plots:
        report.render_trace_figure(samples, out / "trace.png")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpspatial",
        description="Reduced-rank spatial GLMMs via randomized projection.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, with_mcmc=False):
        p.add_argument("--config", help="JSON config file (flags take precedence)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
        p.add_argument("-v", "--verbose", action="store_true")
        if with_mcmc:
            p.add_argument("--iterations", type=int, default=4000)
            p.add_argument("--burnin", type=int, default=None)
            p.add_argument("--thin", type=int, default=1)
            p.add_argument("--chains", type=int, default=1)
            p.add_argument("--phi-grid", type=int, default=25,
                           help="phi grid size (0 disables the grid)")
            p.add_argument("--phi-min", type=float, default=0.01)
            p.add_argument("--phi-max", type=float, default=1.5)
            p.add_argument("--nu", type=float, default=2.5)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--scheme", choices=simulate.SCHEMES, default="confounded")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--phi", type=float, default=0.2)
    p.add_argument("--nu", type=float, default=2.5)
    p.add_argument("--tau2", type=float, default=0.1)
    p.add_argument("--areal-lattice", type=int, nargs=2, metavar=("ROWS", "COLS"))
    p.add_argument("--tau-smooth", type=float, default=1.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rank-select", help="BIC rank selection")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--adjacency")
    p.add_argument("--ranks", help="comma-separated candidate ranks")
    p.add_argument("--phi0", type=float, default=None)
    p.add_argument("--nu", type=float, default=2.5)
    p.set_defaults(func=cmd_rank_select)

    p = sub.add_parser("fit", help="fit FRP or RRP by MCMC")
    common(p, with_mcmc=True)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--adjacency")
    p.add_argument("--model", choices=("frp", "rrp"), default="frp")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--auto-rank", action="store_true")
    p.add_argument("--oversample", type=int, default=None)
    p.add_argument("--alpha", type=int, default=1, choices=(0, 1, 2))
    p.add_argument("--nugget", action="store_true")
    p.add_argument("--adjust", action="store_true", help="also report A-RRP")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("adjust", help="a-posteriori confounding adjustment")
    common(p)
    p.add_argument("--chain", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--adjacency")
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("predict", help="posterior prediction at new sites")
    common(p)
    p.add_argument("--chain", required=True)
    p.add_argument("--sidecar", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--family", choices=FAMILIES, required=True)
    p.add_argument("--adjacency")
    p.add_argument("--locations", required=True, help="CSV of new sites")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench-approx", help="approximation benchmark grid")
    common(p)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--phi", type=float, default=0.3)
    p.add_argument("--nu", default="0.5,2.5", help="comma-separated smoothness values")
    p.add_argument("--ranks", default="10,25,50", help="comma-separated ranks")
    p.add_argument("--seeds", type=int, default=5, help="seeds per method")
    p.set_defaults(func=cmd_bench_approx)

    p = sub.add_parser("study", help="replicate simulation study")
    common(p, with_mcmc=True)
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--scheme", choices=simulate.SCHEMES, default="confounded")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--phi", type=float, default=0.2)
    p.add_argument("--tau2", type=float, default=0.1)
    p.add_argument("--rank", type=int, default=50)
    p.add_argument("--replicates", type=int, default=30)
    p.add_argument("--models", default="frp,rrp")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("diagnose", help="chain diagnostics from a chain CSV")
    common(p)
    p.add_argument("--chain", required=True)
    p.add_argument("--threshold", type=float, default=0.02)
    p.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        dests = {a.dest for a in parser._actions}
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                for sp in action.choices.values():
                    dests |= {a.dest for a in sp._actions}
        args = _apply_config_file(args, dests, _explicit_dests(parser, args, argv))
        if getattr(args, "phi_grid", None) == 0:
            args.phi_grid = None
        return args.func(args)
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
