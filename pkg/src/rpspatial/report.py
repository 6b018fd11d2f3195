"""Report emission: delimited outputs with matplotlib figures rendered to
files alongside them, plus JSON writers validated against the shipped schemas.
"""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "write_csv",
    "write_json",
    "write_chain_csv",
    "read_chain_csv",
    "render_bench_figure",
    "render_study_figure",
    "render_trace_figure",
    "render_prediction_figure",
]


def write_csv(rows: list[dict], path, columns: list[str] | None = None) -> None:
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in columns})


def _fmt(value):
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _load_schema(name: str) -> dict:
    with resources.files("rpspatial").joinpath("schemas", name).open() as fh:
        return json.load(fh)


def write_json(obj: dict, path, schema: str | None = None) -> None:
    """Write JSON, validating against a shipped schema when one is named."""
    if schema is not None:
        import jsonschema

        jsonschema.validate(obj, _load_schema(schema))
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def chain_columns(p: int, m: int, has_tau2: bool) -> list[str]:
    cols = ["iteration"]
    cols += [f"beta_{j + 1}" for j in range(p)]
    cols += [f"delta_{j + 1}" for j in range(m)]
    cols += ["sigma2", "phi"]
    if has_tau2:
        cols += ["tau2"]
    cols += ["loglik"]
    return cols


def write_chain_csv(chain, path) -> None:
    """One CSV per chain: iteration, beta_1..p, delta_1..m, sigma2, phi, tau2, loglik."""
    s = chain.samples
    p = s["beta"].shape[1]
    m = s["delta"].shape[1]
    has_tau2 = "tau2" in s
    cols = chain_columns(p, m, has_tau2)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for i in range(s["beta"].shape[0]):
            row = [i]
            row += [repr(float(v)) for v in s["beta"][i]]
            row += [repr(float(v)) for v in s["delta"][i]]
            row += [repr(float(s["sigma2"][i])), repr(float(s["phi"][i]))]
            if has_tau2:
                row += [repr(float(s["tau2"][i]))]
            row += [repr(float(s["loglik"][i]))]
            writer.writerow(row)


def read_chain_csv(path) -> dict:
    """Read a chain CSV back into sample arrays keyed like Chain.samples."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = np.array([[float(v) for v in row] for row in reader])
    cols = {name: raw[:, j] for j, name in enumerate(header)}
    p = sum(1 for c in header if c.startswith("beta_"))
    m = sum(1 for c in header if c.startswith("delta_"))
    samples = {
        "beta": np.column_stack([cols[f"beta_{j + 1}"] for j in range(p)]),
        "delta": np.column_stack([cols[f"delta_{j + 1}"] for j in range(m)]),
        "sigma2": cols["sigma2"],
        "phi": cols["phi"],
        "loglik": cols["loglik"],
    }
    if "tau2" in cols:
        samples["tau2"] = cols["tau2"]
    return samples


def render_bench_figure(rows: list[dict], path) -> None:
    """Approximation benchmark: subspace distance and eigenvalue error vs rank."""
    nus = sorted({r["nu"] for r in rows})
    fig, axes = plt.subplots(len(nus), 2, figsize=(9, 3.4 * len(nus)), squeeze=False)
    for i, nu in enumerate(nus):
        sub = [r for r in rows if r["nu"] == nu]
        labels = sorted({_method_label(r) for r in sub})
        for label in labels:
            pts = [r for r in sub if _method_label(r) == label]
            ranks = sorted({r["rank"] for r in pts})
            sd = [np.mean([r["subspace_dist"] for r in pts if r["rank"] == k]) for k in ranks]
            ee = [np.mean([r["eig_err"] for r in pts if r["rank"] == k]) for k in ranks]
            axes[i, 0].plot(ranks, sd, marker="o", label=label)
            axes[i, 1].plot(ranks, ee, marker="o", label=label)
        axes[i, 0].set_ylabel(f"nu = {nu}\nsubspace distance")
        axes[i, 1].set_ylabel("eigenvalue l2 error")
        axes[i, 1].set_yscale("log")
        for ax in axes[i]:
            ax.set_xlabel("rank m")
    axes[0, 0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _method_label(row) -> str:
    if row["method"] == "deterministic":
        return "deterministic"
    return f"alpha={row['alpha']}"


def render_study_figure(replicates: list[dict], path) -> None:
    """Distribution of posterior mean estimates per model, with coverage bars."""
    models = []
    for r in replicates:
        if r["model"] not in models:
            models.append(r["model"])
    p = len(np.atleast_1d(replicates[0]["beta_mean"]))
    fig, axes = plt.subplots(1, p + 1, figsize=(4 * (p + 1), 3.6))
    for j in range(p):
        data = [
            [float(np.atleast_1d(r["beta_mean"])[j]) for r in replicates if r["model"] == mod]
            for mod in models
        ]
        axes[j].boxplot(data, tick_labels=models)
        axes[j].axhline(1.0, color="gray", ls="--", lw=1)
        axes[j].set_title(f"beta_{j + 1} posterior means")
    cov = [
        np.mean(
            [np.atleast_1d(r["beta_cover"]).astype(float).mean() for r in replicates if r["model"] == mod]
        )
        for mod in models
    ]
    axes[p].bar(models, cov)
    axes[p].axhline(0.95, color="gray", ls="--", lw=1)
    axes[p].set_ylim(0, 1.05)
    axes[p].set_title("CI coverage")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_trace_figure(samples: dict, path) -> None:
    """Trace plots for the scalar parameters of one chain."""
    names = [f"beta_{j + 1}" for j in range(samples["beta"].shape[1])]
    paths = [samples["beta"][:, j] for j in range(samples["beta"].shape[1])]
    for key in ("sigma2", "tau2", "phi"):
        if key in samples and np.all(np.isfinite(samples[key])):
            names.append(key)
            paths.append(samples[key])
    fig, axes = plt.subplots(len(names), 1, figsize=(8, 1.8 * len(names)), squeeze=False)
    for ax, name, x in zip(axes[:, 0], names, paths):
        ax.plot(x, lw=0.6)
        ax.set_ylabel(name)
    axes[-1, 0].set_xlabel("retained iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_prediction_figure(locations: np.ndarray, mean: np.ndarray, path) -> None:
    """Posterior mean response surface at the prediction sites."""
    fig, ax = plt.subplots(figsize=(5, 4.2))
    sc = ax.scatter(locations[:, 0], locations[:, 1], c=mean, s=18, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="posterior mean response")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
