"""Command-line entry point: kernels, dataset generation, training, evaluation."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import amg, kernels, nn, train as tr
from .fem import (DiffusionDataConfig, JacobiDataConfig, diffusion_instance,
                  gen_diffusion_dataset, gen_jacobi_dataset, jacobi_instance,
                  read_instance, write_instance)
from .sparse import SparseMatrixCSR, dense_vector, from_coo, read_matrix_market

CONFIG_VERSION = 1


class UsageError(Exception):
    pass


# -- run configuration --------------------------------------------------------

_SCHEMA = {
    "": {"version", "seed", "output_dir", "dataset", "train", "eval"},
    "dataset": {"kind", "N_y", "beta_frac_min", "beta_frac_max", "counts",
                "N_min", "N_max", "theta_max"},
    "train": {"epochs_max", "batch_size", "lr", "K", "m", "early_stop",
              "probe_style"},
    "eval": {"k", "eig_method", "theta_grid_max", "sweep_N"},
}


def load_run_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if cfg.get("version") != CONFIG_VERSION:
        raise UsageError(f"config must declare \"version\": {CONFIG_VERSION}")
    for section, allowed in _SCHEMA.items():
        doc = cfg if section == "" else cfg.get(section, {})
        if not isinstance(doc, dict):
            raise UsageError(f"config section '{section}' must be an object")
        unknown = set(doc) - allowed
        if unknown:
            where = section or "top level"
            raise UsageError(f"unknown config key(s) in {where}: {sorted(unknown)}")
    return cfg


def _dataset_config(cfg: dict):
    ds = dict(cfg.get("dataset", {}))
    kind = ds.pop("kind", None)
    seed = cfg.get("seed", 0)
    if "counts" in ds:
        ds["counts"] = tuple(ds["counts"])
    if kind == "jacobi":
        return kind, JacobiDataConfig(seed=seed, **ds)
    if kind == "diffusion":
        return kind, DiffusionDataConfig(seed=seed, **ds)
    raise UsageError("dataset.kind must be 'jacobi' or 'diffusion'")


def _train_config(cfg: dict) -> tr.TrainConfig:
    return tr.TrainConfig(seed=cfg.get("seed", 0), **cfg.get("train", {}))


# -- dataset on disk ----------------------------------------------------------

def _write_dataset(out_dir: str, kind: str, dcfg, force: bool) -> dict:
    if os.path.exists(out_dir):
        if not force:
            raise UsageError(f"output directory {out_dir} exists (use --force)")
    os.makedirs(out_dir, exist_ok=True)
    gen = gen_jacobi_dataset if kind == "jacobi" else gen_diffusion_dataset
    splits = gen(dcfg)
    manifest = {"version": CONFIG_VERSION, "kind": kind,
                "config": {**dcfg.__dict__, "counts": list(dcfg.counts)},
                "splits": {}}
    for split, instances in splits.items():
        names = []
        for inst in instances:
            name = f"inst_{inst.meta['index']:04d}"
            write_instance(os.path.join(out_dir, name), inst)
            names.append(name)
        manifest["splits"][split] = names
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
    return manifest


def load_dataset(data_dir: str) -> tuple[str, dict]:
    path = os.path.join(data_dir, "manifest.json")
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read dataset manifest: {exc}") from None
    splits = {split: [read_instance(os.path.join(data_dir, name)) for name in names]
              for split, names in manifest["splits"].items()}
    return manifest["kind"], splits


# -- kernel subcommand --------------------------------------------------------

def _demo_tridiag(n: int) -> SparseMatrixCSR:
    i = np.arange(n)
    rows = np.concatenate([i, i[:-1], i[1:]])
    cols = np.concatenate([i, i[1:], i[:-1]])
    vals = np.concatenate([np.full(n, 2.0), np.full(n - 1, -1.0), np.full(n - 1, -1.0)])
    return from_coo(n, rows, cols, vals)


def cmd_kernel(args) -> int:
    A = read_matrix_market(args.matrix) if args.matrix else _demo_tridiag(args.n)
    if args.vector:
        x = np.loadtxt(args.vector, delimiter=",", ndmin=1)
    else:
        x = np.arange(1, A.n + 1, dtype=np.float64)
    x = dense_vector(x)
    name = args.name
    if name == "spmv":
        got = kernels.gnn_spmv(A, x, self_edges=not args.no_self_edges)
        want = np.asarray(A.to_dense() @ x)
    elif name == "norm":
        got = kernels.gnn_weighted_norm(A, x)
        want = kernels.weighted_norm_reference(A, x)
    elif name == "jacobi":
        got = kernels.gnn_jacobi(A, x, np.zeros(A.n), args.omega, args.iters)
        want = kernels.jacobi_reference(A, x, np.zeros(A.n), args.omega, args.iters)
    elif name == "chebyshev":
        if args.matrix:
            lam = _spectrum_bounds(A)
        else:  # closed-form extremes of the tridiagonal demo
            lam = 2.0 - 2.0 * np.cos(np.pi * np.array([1, A.n]) / (A.n + 1))
        got = kernels.gnn_chebyshev(A, x, np.zeros(A.n), lam[0], lam[1], args.iters)
        want = kernels.chebyshev_reference(A, x, np.zeros(A.n), lam[0], lam[1], args.iters)
    elif name == "power":
        got_v, got = kernels.gnn_power_method(A, x, args.iters)
        _, want = kernels.power_method_reference(A, x, args.iters)
    elif name == "soc-classic":
        got = amg.soc_classic(A, args.tau).to_dense()
        want = _soc_classic_oracle(A, args.tau)
    elif name == "soc-sa":
        got = amg.soc_sa(A).to_dense()
        D = np.diag(A.to_dense())
        want = A.to_dense() ** 2 / np.outer(D, D) * (A.to_dense() != 0)
    else:
        raise UsageError(f"unknown kernel '{name}'")
    got_a, want_a = np.atleast_1d(got), np.atleast_1d(want)
    disc = float(np.max(np.abs(got_a - want_a)) / max(1.0, float(np.max(np.abs(want_a)))))
    print(f"kernel {name} on n={A.n}")
    print("result:", np.round(np.asarray(got_a).ravel()[:10], 12).tolist())
    print("oracle:", np.round(np.asarray(want_a).ravel()[:10], 12).tolist())
    print(f"max relative discrepancy: {disc:.3e}")
    return 0 if disc < args.tol else 1


def _spectrum_bounds(A: SparseMatrixCSR):
    dense = A.to_dense()
    w = np.linalg.eigvalsh((dense + dense.T) / 2)
    return np.array([w[0], w[-1]])


def _soc_classic_oracle(A: SparseMatrixCSR, tau: float) -> np.ndarray:
    dense = A.to_dense()
    out = np.zeros_like(dense)
    for i in range(A.n):
        row = dense[i].copy()
        row[i] = 0.0
        m = np.max(-row)
        for j in range(A.n):
            if dense[i, j] != 0:
                out[i, j] = 1.0 if (-dense[i, j] / m - tau) > 0 else 0.0
    return out


# -- other subcommands --------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = load_run_config(args.config)
    kind, dcfg = _dataset_config(cfg)
    out_dir = args.out or cfg.get("output_dir")
    if not out_dir:
        raise UsageError("no output directory (config output_dir or --out)")
    manifest = _write_dataset(out_dir, kind, dcfg, args.force)
    total = sum(len(v) for v in manifest["splits"].values())
    print(f"wrote {total} {kind} instances to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    kind_cfg, dcfg = _dataset_config(cfg)
    if args.experiment != kind_cfg:
        raise UsageError(f"config dataset.kind is '{kind_cfg}', not '{args.experiment}'")
    if args.data:
        kind, datasets = load_dataset(args.data)
        if kind != args.experiment:
            raise UsageError(f"dataset at {args.data} is '{kind}'")
    else:
        gen = gen_jacobi_dataset if kind_cfg == "jacobi" else gen_diffusion_dataset
        datasets = gen(dcfg)
    tcfg = _train_config(cfg)
    out_dir = args.out or cfg.get("output_dir") or "."
    os.makedirs(out_dir, exist_ok=True)
    trainer = tr.train_jacobi if args.experiment == "jacobi" else tr.train_diffusion
    store, result = trainer(datasets, tcfg)
    meta = {"experiment": args.experiment, "seed": tcfg.seed,
            "best_epoch": result.best_epoch, "best_val": result.best_val,
            "epochs_run": len(result.history)}
    nn.save_checkpoint(os.path.join(out_dir, "checkpoint.json"), store, meta)
    tr.write_loss_curve(os.path.join(out_dir, "loss_curve.csv"), result)
    if args.svg:
        _loss_svg(os.path.join(out_dir, "loss_curve.svg"), result)
    print(f"best validation loss {result.best_val:.6e} at epoch {result.best_epoch}")
    return 0


def cmd_eval(args) -> int:
    store, meta = nn.load_checkpoint(args.checkpoint) if args.checkpoint else (None, {})
    if store is not None and meta.get("experiment") not in (None, args.experiment):
        raise UsageError(f"checkpoint was trained for '{meta.get('experiment')}'")
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    if args.experiment == "jacobi":
        kind, datasets = load_dataset(args.data)
        if kind != "jacobi":
            raise UsageError(f"dataset at {args.data} is '{kind}'")
        test = datasets["test"]
        if args.omega is not None:
            # trivial baseline model: d_i = omega / A_ii stands in for "learned"
            from .sparse import diag as _diag
            report = _compare_with_diag(test, lambda A: args.omega / _diag(A), args.k)
        else:
            if store is None:
                raise UsageError("eval jacobi needs --checkpoint or --omega")
            if store.model.param_count != nn.jacobi_model_spec().param_count:
                raise UsageError("checkpoint architecture does not match the jacobi model")
            report = tr.compare_methods(test, store, k=args.k)
        tr.write_eig_report(os.path.join(out_dir, "eig_report.csv"), report)
        tr.write_winners(os.path.join(out_dir, "winners.csv"), report)
        for b, f in report.fractions.items():
            print(f"learned beats {b} on {100 * f:.1f}% of test matrices")
        if args.svg:
            _hist_svg(os.path.join(out_dir, "eig_diffs.svg"), report)
    else:
        if store is None:
            raise UsageError("eval diffusion needs --checkpoint")
        if store.model.param_count != nn.diffusion_model_spec().param_count:
            raise UsageError("checkpoint architecture does not match the diffusion model")
        ecfg = {}
        if args.data:
            kind, datasets = load_dataset(args.data)
            if kind != "diffusion":
                raise UsageError(f"dataset at {args.data} is '{kind}'")
            from .fem import diffusion_graph
            mses = [tr.diffusion_loss(
                nn.diffusion_model_forward(diffusion_graph(inst), store), inst.targets)
                for inst in datasets["test"]]
            print(f"test MSE: mean {np.mean(mses):.6e}, max {np.max(mses):.6e}")
        _, rows = tr.freq_sweep_eval(store, args.theta_grid_max, args.sweep_n)
        tr.write_freq_sweep(os.path.join(out_dir, "freq_sweep.csv"), rows)
        a, b = tr.stencil_probe(store)
        print(f"constant-coefficient probe (target 0.001, 0.8): "
              f"alpha={a:.6f}, beta={b:.6f}")
    return 0


def _compare_with_diag(test, diag_fn, k) -> tr.EvalReport:
    """compare_methods with an explicit diagonal rule in place of the model."""
    from .fem import sine_mode_basis
    report = tr.EvalReport(max_eigs={m: [] for m in ("learned",) + tr.BASELINES})
    for inst in test:
        mid = inst.meta.get("index", 0)
        _, V_hf = sine_mode_basis(inst.coords, inst.meta["N_y"] - 2)
        radii = {}
        for method in ("learned",) + tr.BASELINES:
            d = diag_fn(inst.A) if method == "learned" else \
                tr.method_diagonal(method, inst.A)
            est = tr.eval_jacobi(d, inst.A, V_hf, k=k)
            radii[method] = est.spectral_radius
            report.max_eigs[method].append(est.spectral_radius)
            for rank, val in enumerate(est.values):
                report.eig_rows.append((mid, method, rank, float(val)))
        winner = min(radii, key=radii.get)
        report.winner_rows.append(
            (mid, 2 * inst.meta["beta"], inst.meta["band_x"], winner))
    learned = np.array(report.max_eigs["learned"])
    for b in tr.BASELINES:
        base = np.array(report.max_eigs[b])
        report.diffs[b] = (base - learned).tolist()
        report.fractions[b] = float(np.mean(learned < base))
    return report


def cmd_demo_amg(args) -> int:
    A = _demo_tridiag(args.n)
    b = np.ones(A.n)
    x, residuals = amg.two_level_solve(A, b, iters=args.iters, collect_residuals=True)
    for k, r in enumerate(residuals):
        print(f"cycle {k:2d}: residual {r:.6e}")
    return 0 if residuals[-1] < args.tol else 1


# -- minimal SVG plots --------------------------------------------------------

def _svg_doc(body: str, w=640, h=400) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="0 0 {w} {h}"><rect width="100%" height="100%" fill="white"/>'
            f"{body}</svg>\n")


def _polyline(xs, ys, color, w=640, h=400, pad=40):
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    xr = xs.max() - xs.min() or 1.0
    yr = ys.max() - ys.min() or 1.0
    px = pad + (xs - xs.min()) / xr * (w - 2 * pad)
    py = h - pad - (ys - ys.min()) / yr * (h - 2 * pad)
    pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in zip(px, py))
    return f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>'


def _loss_svg(path, result: tr.TrainResult) -> None:
    epochs = [r[0] for r in result.history]
    body = (_polyline(epochs, [r[1] for r in result.history], "steelblue")
            + _polyline(epochs, [r[2] for r in result.history], "firebrick"))
    with open(path, "w") as fh:
        fh.write(_svg_doc(body))


def _hist_svg(path, report: tr.EvalReport) -> None:
    diffs = np.concatenate([np.asarray(v) for v in report.diffs.values()])
    counts, edges = np.histogram(diffs, bins=20)
    w, h, pad = 640, 400, 40
    top = counts.max() or 1
    bars = []
    for k, c in enumerate(counts):
        x0 = pad + k * (w - 2 * pad) / len(counts)
        bw = (w - 2 * pad) / len(counts) - 2
        bh = c / top * (h - 2 * pad)
        bars.append(f'<rect x="{x0:.1f}" y="{h - pad - bh:.1f}" width="{bw:.1f}" '
                    f'height="{bh:.1f}" fill="steelblue"/>')
    with open(path, "w") as fh:
        fh.write(_svg_doc("".join(bars)))


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gnla",
        description="Sparse linear-algebra kernels as graph networks, plus the "
                    "two learned-relaxation experiments.")
    p.add_argument("--threads", type=int, default=1,
                   help="worker-pool cap (outputs are independent of it)")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kernel", help="run a GNN kernel against its oracle")
    k.add_argument("name", choices=["spmv", "norm", "jacobi", "chebyshev",
                                    "power", "soc-classic", "soc-sa"])
    k.add_argument("--matrix", help="Matrix Market file (default: tridiagonal demo)")
    k.add_argument("--vector", help="CSV vector input")
    k.add_argument("--n", type=int, default=5, help="demo matrix size")
    k.add_argument("--iters", type=int, default=10)
    k.add_argument("--omega", type=float, default=2.0 / 3.0)
    k.add_argument("--tau", type=float, default=0.25)
    k.add_argument("--tol", type=float, default=1e-10)
    k.add_argument("--no-self-edges", action="store_true")
    k.set_defaults(func=cmd_kernel)

    g = sub.add_parser("gen-data", help="write a dataset directory")
    g.add_argument("--config", required=True)
    g.add_argument("--out", help="override config output_dir")
    g.add_argument("--force", action="store_true")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train one of the two models")
    t.add_argument("experiment", choices=["jacobi", "diffusion"])
    t.add_argument("--config", required=True)
    t.add_argument("--data", help="dataset directory (default: generate in memory)")
    t.add_argument("--out", help="override config output_dir")
    t.add_argument("--svg", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("experiment", choices=["jacobi", "diffusion"])
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.add_argument("--out")
    e.add_argument("--omega", type=float,
                   help="evaluate the trivial diagonal omega/A_ii instead of a model")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--theta-grid-max", type=int, default=10)
    e.add_argument("--sweep-n", type=int, default=24)
    e.add_argument("--svg", action="store_true")
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("demo-amg", help="two-level cycle on the tridiagonal demo")
    d.add_argument("--n", type=int, default=63)
    d.add_argument("--iters", type=int, default=30)
    d.add_argument("--tol", type=float, default=1e-8)
    d.set_defaults(func=cmd_demo_amg)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numerical / IO failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
