"""Command-line front end: solver paths, comparisons and experiment tables.

All commands write CSV files (single header line, 17-significant-digit
floats) plus a manifest.json capturing the full configuration, so a run can
be reproduced bit-for-bit. Smoothing is applied only to extra output files,
never to the raw path data.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np

from . import __version__
from .data import BlockSpec, Dataset, gen_blocks, gen_simple, load_diabetes
from .descent import DescentConfig, Flavor, direction, h_alpha_bounds, run_descent
from .elastic_net import default_lambda_grid, en_path
from .errors import ElasticPathsError, NotPSD, ShapeError
from .flow import coordinate_flow, elastic_flow, gradient_flow, FlowConfig
from .metrics import (
    count_models,
    path_metrics,
    select_one_se_cv,
    select_val_mse,
)

EGD_ALPHA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------
def _fmt(x) -> str:
    return "%.17g" % float(x)


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _write_manifest(out_dir, command: str, config: dict, outputs: list[str],
                    t0: float) -> str:
    # no timestamps or durations: a repeated run must reproduce every output
    # file byte for byte, the manifest included
    manifest = {
        "command": command,
        "config": config,
        "version": __version__,
        "outputs": sorted(outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _n_workers() -> int:
    env = os.environ.get("ELASTIC_PATHS_THREADS")
    if env:
        return max(int(env), 1)
    return os.cpu_count() or 1


def _load_dataset(data_path, synthetic, seed, standardize_y=False):
    """Returns (dataset, extras) where extras may hold beta_true/support/split."""
    if (data_path is None) == (synthetic is None):
        raise click.UsageError("provide exactly one of --data and --synthetic")
    if data_path is not None:
        try:
            return load_diabetes(data_path, standardize_y=standardize_y), {}
        except ShapeError:
            arr = np.genfromtxt(data_path, delimiter="\t", skip_header=1)
            if arr.ndim != 2 or arr.shape[1] < 2:
                raise click.UsageError(f"{data_path}: need a header line and >= 2 numeric columns")
            return Dataset.from_raw(arr[:, :-1], arr[:, -1]), {}
    if synthetic == "simple":
        ds, beta_true = gen_simple(n=300, seed=seed)
        return ds, {"beta_true": beta_true, "support": np.abs(beta_true) > 0}
    if synthetic == "blocks":
        split = gen_blocks(BlockSpec(seed=seed))
        return split.train, {"beta_true": split.beta_true, "support": split.support,
                             "split": split}
    raise click.UsageError(f"unknown synthetic dataset {synthetic!r}")


def _parse_t_grid(spec: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in spec.split(":"))
    except ValueError:
        raise click.UsageError("--t-grid must look like start:stop:step")
    if step <= 0 or stop <= start:
        raise click.UsageError("--t-grid must have stop > start and step > 0")
    return np.arange(start, stop + 0.5 * step, step)


def _smooth_rows(arr: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average down the rows, shrinking the window at the edges."""
    out = np.empty_like(arr)
    half = width // 2
    for i in range(arr.shape[0]):
        lo, hi = max(i - half, 0), min(i + half + 1, arr.shape[0])
        out[i] = arr[lo:hi].mean(axis=0)
    return out


def _method_path(method: str, ds: Dataset, alpha: float, step: float,
                 t_grid: np.ndarray | None, sample_every: int):
    """Run one method spec; returns (axis_name, axis, beta, grad_or_None)."""
    if method.startswith("egd:"):
        flavor = Flavor.parse(method.split(":", 1)[1])
        sp = run_descent(ds, DescentConfig(alpha=alpha, step=step, flavor=flavor,
                                           sample_every=sample_every))
        return "t", sp.t, sp.beta, sp.grad
    if method in ("egd-flow", "coord-flow", "grad-flow"):
        cfg = FlowConfig(alpha={"coord-flow": 1.0, "grad-flow": 0.0}.get(method, alpha))
        path = {"egd-flow": elastic_flow, "coord-flow": coordinate_flow,
                "grad-flow": gradient_flow}[method](ds, cfg)
        ts = t_grid if t_grid is not None else np.linspace(0.0, path.t_end, 512)
        beta = path.beta_at(ts)
        return "t", ts, beta, beta @ ds.cov - ds.cov_y
    if method == "en":
        fits = en_path(ds, alpha)
        lams = np.array([lam for lam, _ in fits])
        beta = np.stack([b for _, b in fits])
        return "lambda", lams, beta, beta @ ds.cov - ds.cov_y
    if method == "ridge":
        lams = default_lambda_grid(ds)
        eye = np.eye(ds.p)
        beta = np.stack([
            (eye - np.linalg.inv(eye + ds.cov / lam)) @ ds.beta_ols for lam in lams])
        return "lambda", lams, beta, beta @ ds.cov - ds.cov_y
    raise click.UsageError(
        f"unknown method {method!r}; expected egd:<flavor>, egd-flow, "
        "coord-flow, grad-flow, en or ridge")


def _path_rows(axis, beta, grad):
    for i in range(len(axis)):
        row = [axis[i], float(np.abs(beta[i]).sum())] + list(beta[i])
        if grad is not None:
            row += list(grad[i])
        yield row


def _path_header(p: int, axis_name: str, with_grad: bool) -> list[str]:
    header = ["t_or_lambda" if axis_name in ("t", "lambda") else axis_name, "l1_norm"]
    header += [f"beta_{j + 1}" for j in range(p)]
    if with_grad:
        header += [f"grad_{j + 1}" for j in range(p)]
    return header


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------
@click.group()
def main():
    """Solution paths for elastic gradient descent and related methods."""


def common_options(f):
    for opt in [
        click.option("--data", "data_path", type=click.Path(exists=True), default=None,
                     help="Tab-separated data file (last column is the target)."),
        click.option("--synthetic", type=click.Choice(["simple", "blocks"]), default=None),
        click.option("--alpha", type=float, default=0.5, show_default=True),
        click.option("--step", type=float, default=0.01, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--out-dir", type=click.Path(), default=".", show_default=True),
    ]:
        f = opt(f)
    return f


@main.command("path")
@common_options
@click.option("--method", required=True,
              help="egd:<flavor>, egd-flow, coord-flow, grad-flow, en or ridge.")
@click.option("--t-grid", default=None, help="start:stop:step sampling grid for flows.")
@click.option("--sample-every", type=int, default=1, show_default=True)
@click.option("--emit-gradients", is_flag=True)
@click.option("--smooth", type=int, default=0,
              help="Also write a moving-average copy with this window width.")
@click.option("--standardize-y", is_flag=True)
def cmd_path(data_path, synthetic, alpha, step, seed, out_dir, method, t_grid,
             sample_every, emit_gradients, smooth, standardize_y):
    """Run one solver and write its solution path."""
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    try:
        ds, _ = _load_dataset(data_path, synthetic, seed, standardize_y)
        grid = _parse_t_grid(t_grid) if t_grid else None
        axis_name, axis, beta, grad = _method_path(method, ds, alpha, step, grid,
                                                   sample_every)
    except ElasticPathsError as exc:
        raise click.ClickException(str(exc))
    grad_out = grad if emit_gradients else None
    header = _path_header(ds.p, axis_name, emit_gradients)
    out = os.path.join(out_dir, "path.csv")
    _write_csv(out, header, _path_rows(axis, beta, grad_out))
    outputs = [out]
    if smooth > 1:
        sm = os.path.join(out_dir, "path_smooth.csv")
        _write_csv(sm, header,
                   _path_rows(axis, _smooth_rows(beta, smooth),
                              _smooth_rows(grad, smooth) if emit_gradients else None))
        outputs.append(sm)
    outputs.append(_write_manifest(out_dir, "path", {
        "data": data_path, "synthetic": synthetic, "alpha": alpha, "step": step,
        "seed": seed, "method": method, "t_grid": t_grid,
        "sample_every": sample_every, "emit_gradients": emit_gradients,
        "smooth": smooth, "standardize_y": standardize_y}, outputs, t0))
    click.echo(f"wrote {len(outputs)} files to {out_dir}")


@main.command("compare")
@common_options
@click.option("--method", "methods", required=True, multiple=True,
              help="Give twice: the two method specs to compare.")
@click.option("--grid-points", type=int, default=512, show_default=True)
def cmd_compare(data_path, synthetic, alpha, step, seed, out_dir, methods, grid_points):
    """Align two solution paths by l1 norm and tabulate their differences."""
    if len(methods) != 2:
        raise click.UsageError("--method must be given exactly twice")
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    try:
        ds, _ = _load_dataset(data_path, synthetic, seed)
        paths = [_method_path(m, ds, alpha, step, None, 1) for m in methods]
    except ElasticPathsError as exc:
        raise click.ClickException(str(exc))

    aligned = []
    l1_caps = []
    for _, axis, beta, _g in paths:
        l1 = np.maximum.accumulate(np.abs(beta).sum(axis=1))
        if l1[0] > l1[-1]:  # lambda axes travel from sparse to dense; flip
            l1, beta = l1[::-1], beta[::-1]
            l1 = np.maximum.accumulate(l1)
        aligned.append((l1, beta))
        l1_caps.append(l1[-1])
    grid = np.linspace(0.0, min(l1_caps), grid_points)
    interp = []
    for l1, beta in aligned:
        cols = np.stack([np.interp(grid, l1, beta[:, j]) for j in range(ds.p)], axis=1)
        interp.append(cols)

    header = (["l1_norm"] + [f"a_beta_{j + 1}" for j in range(ds.p)]
              + [f"b_beta_{j + 1}" for j in range(ds.p)]
              + [f"absdiff_{j + 1}" for j in range(ds.p)])
    rows = ([grid[i]] + list(interp[0][i]) + list(interp[1][i])
            + list(np.abs(interp[0][i] - interp[1][i])) for i in range(grid_points))
    out_diff = os.path.join(out_dir, "compare.csv")
    _write_csv(out_diff, header, rows)

    counts = [count_models(_AsPath(beta)) for _, _, beta, _g in paths]
    out_peaks = os.path.join(out_dir, "peaks.csv")
    _write_csv(out_peaks,
               ["coordinate", "a_peak", "b_peak", "a_models", "b_models"],
               ([str(j + 1), float(np.max(np.abs(paths[0][2][:, j]))),
                 float(np.max(np.abs(paths[1][2][:, j]))),
                 str(counts[0]), str(counts[1])] for j in range(ds.p)))
    outputs = [out_diff, out_peaks]
    outputs.append(_write_manifest(out_dir, "compare", {
        "data": data_path, "synthetic": synthetic, "alpha": alpha, "step": step,
        "seed": seed, "methods": list(methods), "grid_points": grid_points},
        outputs, t0))
    click.echo(f"model counts: {methods[0]}={counts[0]} {methods[1]}={counts[1]}")


class _AsPath:
    """Minimal path wrapper (beta samples only) for the metric helpers."""

    def __init__(self, beta):
        self.beta = np.asarray(beta)


# Time horizon for experiment-scale descent runs. The unnormalized flavor
# settles into a small limit cycle around the OLS point, so running out the
# full default step budget only replays the cycle; t = 200 is far past
# convergence on the block designs.
EXPERIMENT_MAX_STEPS = 20000


def _egd_time_solver(t_grid: np.ndarray, step: float):
    def solver(train: Dataset, alpha: float):
        sp = run_descent(train, DescentConfig(alpha=alpha, step=step,
                                              max_steps=EXPERIMENT_MAX_STEPS,
                                              sample_every=10))
        beta = sp.beta_at(t_grid)
        return [(float(t_grid[k]), beta[k]) for k in range(len(t_grid))]
    return solver


def _en_lambda_solver(lambdas: np.ndarray):
    def solver(train: Dataset, alpha: float):
        return [(lam, b) for lam, b in en_path(train, alpha, lambdas)]
    return solver


def _experiment_replicate(args):
    """One (rho1, rho2, replicate) cell: both methods, both criteria."""
    rho1, rho2, seed, step, folds = args
    split = gen_blocks(BlockSpec(rho1=rho1, rho2=rho2, seed=seed))
    train = split.train
    out = {}

    # candidate grids over alpha for validation-MSE selection
    egd_paths = {}
    egd_cands = []
    for a in EGD_ALPHA_GRID:
        sp = run_descent(train, DescentConfig(alpha=a, step=step,
                                              max_steps=EXPERIMENT_MAX_STEPS,
                                              sample_every=10))
        egd_paths[a] = sp
        egd_cands += [(a, float(sp.t[k]), sp.beta[k]) for k in range(len(sp.t))]
    en_fits = {}
    en_cands = []
    lambdas = default_lambda_grid(train)
    for a in EGD_ALPHA_GRID:
        fits = en_path(train, a, lambdas)
        en_fits[a] = fits
        en_cands += [(a, lam, b) for lam, b in fits]

    sel = {
        ("egd", "val"): select_val_mse(egd_cands, split.X_val, split.y_val, penalty_dir=-1),
        ("en", "val"): select_val_mse(en_cands, split.X_val, split.y_val, penalty_dir=1),
    }
    t_grid = np.linspace(0.0, float(egd_paths[sel["egd", "val"].alpha_star].t[-1]), 100)
    sel["egd", "cv"] = select_one_se_cv(
        train, sel["egd", "val"].alpha_star, _egd_time_solver(t_grid, step),
        folds=folds, penalty_dir=-1, seed=seed)
    sel["en", "cv"] = select_one_se_cv(
        train, sel["en", "val"].alpha_star, _en_lambda_solver(lambdas),
        folds=folds, penalty_dir=1, seed=seed)

    for (meth, crit), res in sel.items():
        if meth == "egd":
            path = egd_paths[res.alpha_star]
        else:
            path = _AsPath(np.stack([b for _, b in en_fits[res.alpha_star]]))
        pm = path_metrics(res.beta_star, path, split.support,
                          split.X_test, split.y_test)
        out[meth, crit] = pm
    return out


@main.command("experiment")
@click.option("--rho1", "rho1s", type=float, multiple=True, default=(0.7,),
              show_default=True)
@click.option("--rho2", "rho2s", type=float, multiple=True, default=(0.2,),
              show_default=True)
@click.option("--reps", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--step", type=float, default=0.01, show_default=True)
@click.option("--folds", type=int, default=10, show_default=True)
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
def cmd_experiment(rho1s, rho2s, reps, seed, step, folds, out_dir):
    """Support-recovery sweep over a correlation grid, both methods and
    both selection criteria; writes per-cell means and standard deviations."""
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    fields = ["sensitivity", "specificity", "test_mse", "true_path_rate"]
    rows = []
    for rho1 in rho1s:
        for rho2 in rho2s:
            try:
                BlockSpec(rho1=rho1, rho2=rho2).sigma()
                gen_blocks(BlockSpec(rho1=rho1, rho2=rho2, seed=seed))
            except NotPSD as exc:
                click.echo(f"warning: skipping rho1={rho1} rho2={rho2}: {exc}", err=True)
                rows.append([rho1, rho2, "skipped_not_psd"] + [""] * (4 * len(fields)))
                continue
            tasks = [(rho1, rho2, seed + r, step, folds) for r in range(reps)]
            workers = min(_n_workers(), reps)
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    results = list(pool.map(_experiment_replicate, tasks))
            else:
                results = [_experiment_replicate(t) for t in tasks]
            for meth in ("egd", "en"):
                for crit in ("val", "cv"):
                    row = [rho1, rho2, f"{meth}_{crit}"]
                    for f in fields:
                        vals = [getattr(r[meth, crit], f) for r in results]
                        vals = [v for v in vals if v is not None]
                        row += [float(np.mean(vals)), float(np.std(vals))]
                    rows.append(row)
    header = ["rho1", "rho2", "method"]
    for f in fields:
        header += [f"{f}_mean", f"{f}_std"]
    out = os.path.join(out_dir, "experiment.csv")
    _write_csv(out, header, rows)
    outputs = [out, _write_manifest(out_dir, "experiment", {
        "rho1": list(rho1s), "rho2": list(rho2s), "reps": reps, "seed": seed,
        "step": step, "folds": folds, "alpha_grid": list(EGD_ALPHA_GRID)},
        [out], t0)]
    click.echo(f"wrote {len(outputs)} files to {out_dir}")


@main.command("flavors")
@common_options
@click.option("--sample-every", type=int, default=10, show_default=True)
def cmd_flavors(data_path, synthetic, alpha, step, seed, out_dir, sample_every):
    """Run every descent flavor; emit paths with per-step cost and active-set
    diagnostics plus the matching deviation bounds."""
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    try:
        ds, _ = _load_dataset(data_path, synthetic, seed)
    except ElasticPathsError as exc:
        raise click.ClickException(str(exc))
    outputs = []
    for flavor in Flavor:
        cfg = DescentConfig(alpha=alpha, step=step, flavor=flavor,
                            sample_every=sample_every)
        sp = run_descent(ds, cfg)
        stagewise = flavor in (Flavor.STAGEWISE_UNSCALED, Flavor.STAGEWISE_SCALED)
        rows = []
        for i in range(len(sp.t)):
            g = sp.grad[i]
            if np.max(np.abs(g)) == 0.0:
                continue
            d = direction(g, cfg)
            lo, hi = h_alpha_bounds(d.p1, alpha, eps=step, stagewise=stagewise)
            rows.append([sp.t[i], float(np.abs(sp.beta[i]).sum())]
                        + list(sp.beta[i])
                        + [d.h_alpha_value, float(d.p1), d.q1, lo, hi])
        header = (["t", "l1_norm"] + [f"beta_{j + 1}" for j in range(ds.p)]
                  + ["h_alpha", "p1", "q1", "bound_lower", "bound_upper"])
        out = os.path.join(out_dir, f"flavor_{flavor.name.lower()}.csv")
        _write_csv(out, header, rows)
        outputs.append(out)
    outputs.append(_write_manifest(out_dir, "flavors", {
        "data": data_path, "synthetic": synthetic, "alpha": alpha, "step": step,
        "seed": seed, "sample_every": sample_every}, outputs, t0))
    click.echo(f"wrote {len(outputs)} files to {out_dir}")


@main.command("select")
@common_options
@click.option("--method", type=click.Choice(["egd", "en"]), default="egd",
              show_default=True)
@click.option("--criterion", type=click.Choice(["val", "cv"]), default="cv",
              show_default=True)
@click.option("--folds", type=int, default=10, show_default=True)
def cmd_select(data_path, synthetic, alpha, step, seed, out_dir, method,
               criterion, folds):
    """Pick a model along one solver's path by validation MSE (blocks data)
    or by cross-validation with the one-standard-error rule."""
    t0 = time.time()
    os.makedirs(out_dir, exist_ok=True)
    try:
        ds, extras = _load_dataset(data_path, synthetic, seed)
        if criterion == "val":
            if "split" not in extras:
                raise click.UsageError("--criterion val needs --synthetic blocks")
            split = extras["split"]
            if method == "egd":
                sp = run_descent(ds, DescentConfig(alpha=alpha, step=step,
                                                   sample_every=10))
                cands = [(alpha, float(sp.t[k]), sp.beta[k]) for k in range(len(sp.t))]
                res = select_val_mse(cands, split.X_val, split.y_val, penalty_dir=-1)
            else:
                cands = [(alpha, lam, b) for lam, b in en_path(ds, alpha)]
                res = select_val_mse(cands, split.X_val, split.y_val, penalty_dir=1)
        else:
            if method == "egd":
                sp = run_descent(ds, DescentConfig(alpha=alpha, step=step,
                                                   sample_every=10))
                t_grid = np.linspace(0.0, float(sp.t[-1]), 100)
                res = select_one_se_cv(ds, alpha, _egd_time_solver(t_grid, step),
                                       folds=folds, penalty_dir=-1, seed=seed)
            else:
                res = select_one_se_cv(ds, alpha, _en_lambda_solver(default_lambda_grid(ds)),
                                       folds=folds, penalty_dir=1, seed=seed)
    except ElasticPathsError as exc:
        raise click.ClickException(str(exc))
    out = os.path.join(out_dir, "selection.csv")
    _write_csv(out,
               ["alpha_star", "t_or_lambda_star", "criterion"]
               + [f"beta_{j + 1}" for j in range(ds.p)],
               [[res.alpha_star, res.t_or_lambda_star, res.criterion]
                + list(res.beta_star)])
    outputs = [out, _write_manifest(out_dir, "select", {
        "data": data_path, "synthetic": synthetic, "alpha": alpha, "step": step,
        "seed": seed, "method": method, "criterion": criterion, "folds": folds},
        [out], t0)]
    click.echo(f"selected alpha={res.alpha_star} penalty={res.t_or_lambda_star}")


if __name__ == "__main__":
    main()
