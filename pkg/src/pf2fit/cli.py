"""Command-line front end: simulate | fit | evaluate | experiment.

Exit codes: 0 success, 2 usage error, 3 numerical failure (all
initializations diverged or degenerated), 4 I/O error.
"""

from __future__ import annotations

import glob as globmod
import itertools
import os
import sys

import click
import numpy as np
from joblib import Parallel, delayed

from . import __version__, storage
from .als import AlsConfig, fit_als
from .metrics import fms, relative_sse
from .penalties import Regularizer
from .seeding import derive_seed
from .simulate import SimSpec, simulate_dataset
from .solver import (
    DegenerateStateError,
    DivergenceError,
    SolverConfig,
    fit_ao_admm,
)

MODES = ("a", "b", "d")
REG_ALIASES = {"gl": "graph_laplacian_chain", "graph_laplacian": "graph_laplacian_chain"}
STRENGTH_KINDS = ("ridge", "tv", "graph_laplacian_chain")


class NumericalFailure(RuntimeError):
    """Every initialization of a fit failed numerically."""


def parse_reg(text: str) -> Regularizer:
    """Parse ``kind`` or ``kind:strength`` into a Regularizer."""
    kind, _, strength_text = text.partition(":")
    kind = REG_ALIASES.get(kind, kind)
    if kind in ("none", "nonneg"):
        return Regularizer(kind)
    if kind in STRENGTH_KINDS:
        if not strength_text:
            raise click.UsageError(f"regularizer {kind!r} needs a strength, e.g. {kind}:10")
        try:
            strength = float(strength_text)
        except ValueError:
            raise click.UsageError(f"bad strength {strength_text!r} in {text!r}")
        try:
            return Regularizer(kind, strength)
        except ValueError as exc:
            raise click.UsageError(str(exc))
    raise click.UsageError(f"unknown regularizer kind {kind!r} in {text!r}")


def parse_reg_flags(reg_flags) -> dict:
    """Parse repeated ``mode=kind[:strength]`` flags into a per-mode dict."""
    regs = {mode: Regularizer.none() for mode in MODES}
    seen = set()
    for flag in reg_flags:
        mode, sep, reg_text = flag.partition("=")
        if not sep or mode not in MODES:
            raise click.UsageError(
                f"bad --reg {flag!r}; expected one of a=, b=, d= followed by kind[:strength]"
            )
        if mode in seen:
            raise click.UsageError(f"duplicate --reg for mode {mode!r}")
        seen.add(mode)
        regs[mode] = parse_reg(reg_text)
    return regs


@click.group()
@click.version_option(__version__)
def cli():
    """Fit PARAFAC2 models to stacks of matrices, with or without regularization."""


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

@cli.command()
@click.option("--setup", type=click.IntRange(1, 3), default=1, show_default=True,
              help="blueprint style: 1 folded-normal, 2 smooth, 3 piecewise constant")
@click.option("--eta", type=float, default=0.5, show_default=True, help="noise level")
@click.option("--I", "I", type=int, default=30, show_default=True)
@click.option("--J", "J", type=int, default=40, show_default=True)
@click.option("--K", "K", type=int, default=15, show_default=True)
@click.option("--R", "R", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--count", type=int, default=1, show_default=True,
              help="write this many datasets as <out>/ds_NNN (seeds derived from --seed)")
@click.option("--out", required=True, type=click.Path())
@click.option("--force", is_flag=True, help="overwrite completed outputs")
def simulate(setup, eta, I, J, K, R, seed, count, out, force):  # noqa: E741
    """Generate one or more synthetic dataset directories."""
    if count < 1:
        raise click.UsageError("--count must be >= 1")
    if count == 1:
        targets = [(out, seed)]
    else:
        targets = [
            (os.path.join(out, f"ds_{i:03d}"), derive_seed(seed, i))
            for i in range(count)
        ]
    for target, ds_seed in targets:
        if os.path.exists(os.path.join(target, "manifest.json")) and not force:
            click.echo(f"skip {target} (already complete; use --force to regenerate)")
            continue
        try:
            spec = SimSpec(I=I, J=J, K=K, R=R, setup=setup, eta=eta, seed=ds_seed)
        except ValueError as exc:
            raise click.UsageError(str(exc))
        stack, truth = simulate_dataset(spec)
        storage.save_dataset(
            target, stack, truth,
            meta={"setup": setup, "eta": eta, "seed": ds_seed},
        )
        click.echo(f"wrote {target}")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _run_single_fit(method, stack, rank, regs, seed, overrides):
    if method == "aoadmm":
        kwargs = {
            key: overrides[key]
            for key in ("inner_max_iter", "outer_max_iter", "outer_tol")
            if overrides.get(key) is not None
        }
        config = SolverConfig(
            rank=rank,
            reg_a=regs["a"],
            reg_b=regs["b"],
            reg_d=regs["d"],
            seed=seed,
            return_projected_b=overrides.get("b_estimate", "projected") == "projected",
            **kwargs,
        )
        return fit_ao_admm(stack, config)
    kwargs = {}
    if overrides.get("outer_max_iter") is not None:
        kwargs["max_iter"] = overrides["outer_max_iter"]
    if overrides.get("outer_tol") is not None:
        kwargs["tol"] = overrides["outer_tol"]
    config = AlsConfig(
        nonneg_a=regs["a"].kind == "nonneg",
        nonneg_d=regs["d"].kind == "nonneg",
        seed=seed,
        **kwargs,
    )
    return fit_als(stack, rank, config)


def _validate_method_regs(method, regs):
    if method != "als":
        return
    for mode in MODES:
        kind = regs[mode].kind
        if mode == "b" and kind != "none":
            raise click.UsageError(
                "the ALS baseline cannot regularize the evolving mode; "
                "use --method aoadmm for b-mode penalties"
            )
        if mode in ("a", "d") and kind not in ("none", "nonneg"):
            raise click.UsageError(
                f"the ALS baseline only supports nonneg on mode {mode!r}, got {kind!r}"
            )


def run_fit(method, rank, regs, inits, seed, in_dir, out_dir, overrides, force=False):
    """Multi-initialization fit of one dataset directory; returns the report dict."""
    report_path = os.path.join(out_dir, "fit_report.json")
    if os.path.exists(report_path) and not force:
        return storage.read_json(report_path)
    stack, _, _ = storage.load_dataset(in_dir)
    if rank > min(stack.J):
        raise click.UsageError(
            f"rank {rank} exceeds the smallest slice width {min(stack.J)}"
        )
    _validate_method_regs(method, regs)
    inits_summary = []
    best = None
    for index in range(inits):
        init_seed = derive_seed(seed, index)
        entry = {"index": index, "seed": init_seed}
        try:
            factors, report = _run_single_fit(
                method, stack, rank, regs, init_seed, overrides
            )
        except (DivergenceError, DegenerateStateError) as exc:
            entry["error"] = str(exc)
            inits_summary.append(entry)
            continue
        entry.update(
            objective=report.final_objective,
            relative_sse=report.final_relative_sse,
            n_outer=report.n_outer,
            wall_time=report.wall_time,
            termination=report.termination,
        )
        inits_summary.append(entry)
        if best is None or report.final_objective < best[2].final_objective:
            best = (index, factors, report)
    if best is None:
        raise NumericalFailure(
            f"all {inits} initializations failed for {in_dir} "
            f"({inits_summary[-1].get('error', 'unknown error')})"
        )
    chosen_index, chosen_factors, chosen_report = best
    os.makedirs(out_dir, exist_ok=True)
    storage.save_factors(out_dir, chosen_factors)
    payload = {
        "schema_version": storage.SCHEMA_VERSION,
        "kind": "fit_report",
        "library_version": __version__,
        "method": method,
        "rank": rank,
        "regs": {mode: str(regs[mode]) for mode in MODES},
        "seed": seed,
        "n_inits": inits,
        "overrides": {k: v for k, v in overrides.items() if v is not None},
        "chosen_init": chosen_index,
        "chosen_seed": inits_summary[chosen_index]["seed"],
        "inits": inits_summary,
        "trace": chosen_report.to_dict(),
    }
    storage.write_json(report_path, payload)
    return payload


@cli.command()
@click.option("--method", type=click.Choice(["aoadmm", "als"]), required=True)
@click.option("--rank", type=int, required=True)
@click.option("--reg", "reg_flags", multiple=True,
              help="per-mode regularizer, e.g. --reg b=tv:10 --reg a=ridge:1 --reg d=nonneg")
@click.option("--inits", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="base seed; init i uses the derived seed (init 0 uses it directly)")
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--inner-max-iter", type=int, default=None)
@click.option("--outer-max-iter", type=int, default=None)
@click.option("--outer-tol", type=float, default=None)
@click.option("--b-estimate", type=click.Choice(["projected", "regularized"]),
              default="projected", show_default=True,
              help="return the cross-product-feasible or the regularizer-feasible B")
@click.option("--force", is_flag=True)
def fit(method, rank, reg_flags, inits, seed, in_dir, out_dir,
        inner_max_iter, outer_max_iter, outer_tol, b_estimate, force):
    """Fit one dataset with several random initializations and keep the best."""
    if inits < 1:
        raise click.UsageError("--inits must be >= 1")
    regs = parse_reg_flags(reg_flags)
    overrides = {
        "inner_max_iter": inner_max_iter,
        "outer_max_iter": outer_max_iter,
        "outer_tol": outer_tol,
        "b_estimate": b_estimate,
    }
    payload = run_fit(method, rank, regs, inits, seed, in_dir, out_dir, overrides, force)
    click.echo(
        f"chose init {payload['chosen_init']} "
        f"(objective {payload['inits'][payload['chosen_init']]['objective']:.6e}) -> {out_dir}"
    )


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def run_evaluate(result_dir, data_dir, out_path=None):
    stack, truth, _ = storage.load_dataset(data_dir)
    est = storage.load_factors(result_dir)
    metrics = {
        "schema_version": storage.SCHEMA_VERSION,
        "kind": "metrics",
        "relative_sse": relative_sse(stack, est),
    }
    if truth is None:
        raise click.UsageError(f"dataset {data_dir} carries no true factors")
    if truth.rank != est.rank:
        metrics["fms"] = None
        metrics["fms_omitted_reason"] = (
            f"rank mismatch: true {truth.rank}, estimated {est.rank}"
        )
    else:
        try:
            result = fms(truth, est)
        except ValueError as exc:  # e.g. a dead component with a zero column
            metrics["fms"] = None
            metrics["fms_omitted_reason"] = str(exc)
        else:
            metrics["fms"] = result.fms
            metrics["permutation"] = list(result.permutation)
            metrics["per_component"] = list(result.per_component)
    out_path = out_path or os.path.join(result_dir, "metrics.json")
    storage.write_json(out_path, metrics)
    return metrics


@cli.command()
@click.option("--result", "result_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="metrics JSON path (default <result>/metrics.json)")
def evaluate(result_dir, data_dir, out_path):
    """Score a fit result against the dataset's true factors."""
    metrics = run_evaluate(result_dir, data_dir, out_path)
    fms_text = "n/a" if metrics.get("fms") is None else f"{metrics['fms']:.4f}"
    click.echo(f"relative_sse={metrics['relative_sse']:.6e} fms={fms_text}")


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def _expand_grid(grid):
    """Cartesian product over per-mode regularizer lists.

    The key ``ad`` applies one shared value to both the a and d modes (the
    usual shared ridge); it cannot be combined with separate a/d entries.
    """
    if not grid:
        return [{}]
    keys = sorted(grid)
    for key in keys:
        if key not in ("a", "b", "d", "ad"):
            raise click.UsageError(f"unknown grid mode {key!r}")
        if not grid[key]:
            raise click.UsageError(f"empty grid list for mode {key!r}")
    if "ad" in keys and ("a" in keys or "d" in keys):
        raise click.UsageError("grid key 'ad' cannot be combined with 'a' or 'd'")
    cells = []
    for combo in itertools.product(*(grid[key] for key in keys)):
        cell = {}
        for key, value in zip(keys, combo):
            if key == "ad":
                cell["a"] = value
                cell["d"] = value
            else:
                cell[key] = value
        cells.append(cell)
    return cells


def _cell_dir(out_root, dataset, grid_index):
    return os.path.join(out_root, "cells", os.path.basename(os.path.normpath(dataset)),
                        f"g{grid_index:03d}")


def _run_cell(spec, dataset, grid_index, cell, out_root, force):
    regs = {mode: Regularizer.none() for mode in MODES}
    for mode, reg_text in cell.items():
        regs[mode] = parse_reg(reg_text)
    out_dir = _cell_dir(out_root, dataset, grid_index)
    row = {
        "dataset": os.path.basename(os.path.normpath(dataset)),
        "method": spec["method"],
        "reg_a": str(regs["a"]),
        "reg_b": str(regs["b"]),
        "reg_d": str(regs["d"]),
        "fms": None,
        "relative_sse": None,
        "wall_time": None,
        "iterations": None,
        "error": None,
    }
    try:
        payload = run_fit(
            spec["method"], spec["rank"], regs,
            spec.get("n_inits", 5), spec.get("seed", 0),
            dataset, out_dir, spec.get("overrides", {}), force,
        )
        metrics_path = os.path.join(out_dir, "metrics.json")
        if os.path.exists(metrics_path) and not force:
            metrics = storage.read_json(metrics_path)
        else:
            metrics = run_evaluate(out_dir, dataset)
        chosen = payload["inits"][payload["chosen_init"]]
        row.update(
            fms=metrics.get("fms"),
            relative_sse=metrics["relative_sse"],
            wall_time=chosen["wall_time"],
            iterations=chosen["n_outer"],
        )
    except Exception as exc:  # the runner records the failure and moves on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _summarize(rows):
    groups = {}
    for row in rows:
        key = (row["reg_a"], row["reg_b"], row["reg_d"])
        groups.setdefault(key, []).append(row)
    summary = []
    for key in sorted(groups):
        cells = groups[key]
        scores = [row["fms"] for row in cells if row["fms"] is not None]
        entry = {
            "reg_a": key[0],
            "reg_b": key[1],
            "reg_d": key[2],
            "n_datasets": len(cells),
            "n_failed": sum(1 for row in cells if row["error"] is not None),
        }
        if scores:
            mean = float(np.mean(scores))
            std = float(np.std(scores))
            entry.update(
                fms_mean=mean,
                fms_std=std,
                fms_label=f"{mean:.2f} ± {std:.2f}",
                relative_sse_mean=float(
                    np.mean([r["relative_sse"] for r in cells if r["relative_sse"] is not None])
                ),
            )
        else:
            entry.update(fms_mean=None, fms_std=None, fms_label="n/a",
                         relative_sse_mean=None)
        summary.append(entry)
    return summary


def _csv_field(value):
    if value is None:
        return ""
    text = str(value)
    if any(ch in text for ch in ",\"\r\n"):
        return '"' + text.replace('"', '""') + '"'
    return text


def _write_csv(path, rows, fieldnames):
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(_csv_field(row.get(f)) for f in fieldnames))
    storage.atomic_write_text(path, "\r\n".join(lines) + "\r\n")


def run_experiment(spec, jobs=1, force=False):
    """Grid-search runner: datasets x grid points, then a tidy table + summary."""
    for field in ("datasets", "method", "rank", "out"):
        if field not in spec:
            raise click.UsageError(f"experiment spec is missing {field!r}")
    if spec["method"] not in ("aoadmm", "als"):
        raise click.UsageError(f"unknown method {spec['method']!r}")
    if spec.get("n_inits", 5) < 1:
        raise click.UsageError("experiment spec needs n_inits >= 1")
    patterns = spec["datasets"]
    if isinstance(patterns, str):
        patterns = [patterns]
    datasets = sorted(
        {d for pattern in patterns for d in globmod.glob(pattern) if os.path.isdir(d)}
    )
    if not datasets:
        raise click.UsageError(f"no dataset directories match {patterns!r}")
    cells = _expand_grid(spec.get("grid", {}))
    out_root = spec["out"]
    os.makedirs(out_root, exist_ok=True)
    tasks = [
        (dataset, grid_index, cell)
        for dataset in datasets
        for grid_index, cell in enumerate(cells)
    ]
    rows = Parallel(n_jobs=jobs)(
        delayed(_run_cell)(spec, dataset, grid_index, cell, out_root, force)
        for dataset, grid_index, cell in tasks
    )
    fieldnames = ["dataset", "method", "reg_a", "reg_b", "reg_d",
                  "fms", "relative_sse", "wall_time", "iterations", "error"]
    _write_csv(os.path.join(out_root, "results.csv"), rows, fieldnames)
    storage.write_json(os.path.join(out_root, "results.json"), rows)
    summary = _summarize(rows)
    storage.write_json(os.path.join(out_root, "summary.json"), summary)
    _write_csv(
        os.path.join(out_root, "summary.csv"),
        summary,
        ["reg_a", "reg_b", "reg_d", "n_datasets", "n_failed",
         "fms_mean", "fms_std", "fms_label", "relative_sse_mean"],
    )
    return rows, summary


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--jobs", type=int, default=1, show_default=True,
              help="worker processes for the cell pool")
@click.option("--force", is_flag=True, help="recompute cells that already have results")
def experiment(spec_path, jobs, force):
    """Run a grid-search experiment described by a JSON spec file."""
    spec = storage.read_json(spec_path)
    rows, summary = run_experiment(spec, jobs=jobs, force=force)
    n_failed = sum(1 for row in rows if row["error"] is not None)
    click.echo(f"{len(rows)} cells ({n_failed} failed) -> {spec['out']}")
    for entry in summary:
        click.echo(
            f"  a={entry['reg_a']} b={entry['reg_b']} d={entry['reg_d']}: "
            f"FMS {entry['fms_label']}"
        )


def main(argv=None):
    """Entry point returning the process exit code."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 130
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except (NumericalFailure, DegenerateStateError, DivergenceError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return 3
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
