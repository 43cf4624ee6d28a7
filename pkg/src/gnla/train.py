"""Losses, training loops, baselines, and evaluation for both experiments."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nn
from .fem import (ProblemInstance, assemble_diffusion_periodic, diffusion_graph,
                  sine_mode_basis)
from .sparse import SparseMatrixCSR, diag, spmm_csr, spmv_csr

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class TrainConfig:
    epochs_max: int = 30
    batch_size: int = 10
    lr: float = 1e-3
    K: int = 3                 # loss power iterations
    m: int = 20                # probe count
    seed: int = 0
    early_stop: bool = True
    probe_style: str = "columns"   # "columns": sampled from V_hf; "sphere": random unit vectors


@dataclass
class TrainResult:
    history: list          # (epoch, train_loss, val_loss)
    best_epoch: int
    best_val: float


def desk_jacobi_train_config(seed: int = 0) -> TrainConfig:
    # Short schedule on purpose: the probe surrogate at this problem size is
    # dominated by low-frequency leakage through the band, so prolonged
    # optimisation drifts away from the projected-spectrum objective.  Two
    # epochs of per-sample Adam steps reach the best generalising checkpoint.
    return TrainConfig(epochs_max=2, batch_size=1, lr=3e-2, K=3, m=20, seed=seed)


def desk_diffusion_train_config(seed: int = 0) -> TrainConfig:
    return TrainConfig(epochs_max=40, batch_size=10, lr=3e-3, seed=seed)


# -- relaxation-diagonal experiment ------------------------------------------

def sample_probes(V_hf: np.ndarray, m: int, rng, style: str = "columns") -> np.ndarray:
    """m probe vectors: distinct V_hf columns, or unit-sphere samples."""
    if style == "sphere":
        g = rng.standard_normal((V_hf.shape[0], m))
        return g / np.linalg.norm(g, axis=0)
    if m > V_hf.shape[1]:
        raise ValueError(f"asked for {m} probes but only {V_hf.shape[1]} columns")
    idx = rng.choice(V_hf.shape[1], size=m, replace=False)
    return V_hf[:, idx]


def jacobi_probe_loss(d, A: SparseMatrixCSR, probes: np.ndarray, K: int):
    """max_i ||(I - diag(d) A)^K u_i||^(1/K) over the probe columns.

    ``d`` may be a taped Var (returns a scalar Var; the max routes the gradient
    to the argmax probe) or a plain array (returns a float).
    """
    if isinstance(d, ad.Var):
        tape = d.tape
        U = tape.leaf(probes)
        dcol = ad.reshape(d, (len(d.value), 1))
        for _ in range(K):
            U = ad.sub(U, ad.mul(dcol, ad.csr_matmat(A, U)))
        return ad.vmax(ad.power(ad.l2_norm(U, axis=0), 1.0 / K))
    U = probes.copy()
    for _ in range(K):
        U = U - d[:, None] * spmm_csr(A, U)
    norms = np.sqrt((U * U).sum(axis=0))
    return float(np.max(norms ** (1.0 / K)))


def jacobi_loss(d, A: SparseMatrixCSR, V_hf: np.ndarray, K: int, m: int, rng,
                style: str = "columns"):
    """Probe-sampling wrapper around :func:`jacobi_probe_loss`."""
    return jacobi_probe_loss(d, A, sample_probes(V_hf, m, rng, style), K)


def _jacobi_setup(instances, cfg: TrainConfig):
    """Per-instance fixed probes (and cached V_hf) keyed by dataset index."""
    out = []
    for inst in instances:
        n_modes = inst.meta["N_y"] - 2
        _, V_hf = sine_mode_basis(inst.coords, n_modes)
        rng = np.random.default_rng([cfg.seed, 7, inst.meta["index"]])
        out.append((inst, sample_probes(V_hf, cfg.m, rng, cfg.probe_style), V_hf))
    return out


def _batches(items, size):
    for k in range(0, len(items), size):
        yield items[k:k + size]


def train_jacobi(datasets: dict, cfg: TrainConfig,
                 store: nn.ParamStore | None = None) -> tuple[nn.ParamStore, TrainResult]:
    """Adam training of the relaxation-diagonal model with validation-minimum
    checkpointing. Deterministic given (datasets, cfg)."""
    if store is None:
        store = nn.init_glorot(nn.jacobi_model_spec(), np.random.default_rng([cfg.seed, 1]))
    train = _jacobi_setup(datasets["train"], cfg)
    val = _jacobi_setup(datasets["val"], cfg)
    adam = nn.adam_init(store.size)
    history, best = [], (np.inf, 0, store.values.copy())
    for epoch in range(cfg.epochs_max):
        epoch_losses = []
        for batch in _batches(train, cfg.batch_size):
            gsum = np.zeros(store.size)
            for inst, probes, _ in batch:
                tape = ad.Tape()
                d, tparams = nn.jacobi_model_forward(inst.A, store, tape)
                loss = jacobi_probe_loss(d, inst.A, probes, cfg.K)
                gsum += tparams.flat_grad(ad.backward(tape, loss))
                epoch_losses.append(float(loss.value))
            new_values, adam = nn.adam_step(store.values, gsum, adam, cfg.lr)
            store = store.replaced(new_values)
        train_loss = float(np.mean(epoch_losses))
        val_loss = float(np.mean([
            jacobi_probe_loss(nn.jacobi_model_forward(inst.A, store), inst.A,
                              probes, cfg.K)
            for inst, probes, _ in val]))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise RuntimeError(f"training diverged at epoch {epoch} "
                               f"(train={train_loss}, val={val_loss})")
        history.append((epoch, train_loss, val_loss))
        if val_loss < best[0]:
            best = (val_loss, epoch, store.values.copy())
    if cfg.early_stop:
        store = store.replaced(best[2])
    return store, TrainResult(history, best[1], best[0])


# -- spectral evaluation ------------------------------------------------------

def omega_co(A: SparseMatrixCSR, tol: float = 1e-10, max_iter: int = 20000) -> float:
    """2 / (lambda_min + lambda_max) of D^{-1} A, the classical optimal weight.

    Both extremal eigenvalues come from power iteration on the symmetrized
    form D^{-1/2} A D^{-1/2} (and its reflection around lambda_max).
    """
    d = diag(A)
    if np.any(d <= 0):
        raise ValueError("omega_co requires a positive diagonal")
    s = 1.0 / np.sqrt(d)
    mv = lambda v: s * spmv_csr(A, s * v)
    rng = np.random.default_rng(12345)
    lam_max = _power_lam(mv, A.n, tol, max_iter, rng)
    lam_min = lam_max - _power_lam(lambda v: lam_max * v - mv(v), A.n, tol,
                                   max_iter, rng)
    return 2.0 / (lam_min + lam_max)


def _power_lam(mv, n, tol, max_iter, rng) -> float:
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_prev = np.inf
    for _ in range(max_iter):
        w = mv(v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        lam = float(v @ mv(v))
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            return lam
        lam_prev = lam
    raise RuntimeError(f"power iteration did not converge in {max_iter} steps "
                       f"(last change {abs(lam - lam_prev):.3e})")


@dataclass
class EigEstimate:
    values: np.ndarray      # sorted by descending magnitude
    converged: np.ndarray   # bool flag per value

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.values)))


def projected_iteration_matrix(d: np.ndarray, A: SparseMatrixCSR,
                               V_hf: np.ndarray) -> np.ndarray:
    """I - V_hf^T diag(d) A V_hf: the error propagator seen by the high modes."""
    AV = spmm_csr(A, V_hf)
    return np.eye(V_hf.shape[1]) - V_hf.T @ (d[:, None] * AV)


def eval_jacobi(d: np.ndarray, A: SparseMatrixCSR, V_hf: np.ndarray, k: int = 10,
                method: str = "auto", tol: float = 1e-8,
                max_iter: int = 5000) -> EigEstimate:
    """Top-k largest-magnitude eigenvalues of the projected error propagator.

    ``method``: "power" (deflated power iteration), "dense" (exact eigensolve),
    or "auto" (dense when the projected matrix is at most 400 wide).
    """
    T = projected_iteration_matrix(np.asarray(d, dtype=np.float64), A, V_hf)
    k = min(k, T.shape[0])
    if method == "dense" or (method == "auto" and T.shape[0] <= 400):
        w = np.linalg.eigvals(T)
        order = np.argsort(-np.abs(w), kind="stable")[:k]
        vals = np.where(np.abs(w[order].imag) <= 1e-8 * np.maximum(1.0, np.abs(w[order])),
                        w[order].real, np.abs(w[order]))
        return EigEstimate(np.asarray(vals, dtype=np.float64), np.ones(k, dtype=bool))
    return _top_eigs_power(T, k, tol, max_iter)


def _top_eigs_power(T, k, tol, max_iter) -> EigEstimate:
    """Power iteration with orthogonalized deflation against converged vectors."""
    n = T.shape[0]
    rng = np.random.default_rng(2023)
    Q = np.zeros((n, 0))
    vals, flags = [], []
    for _ in range(k):
        v = rng.standard_normal(n)
        v -= Q @ (Q.T @ v)
        v /= np.linalg.norm(v)
        lam_prev, lam, ok = np.inf, 0.0, False
        for _ in range(max_iter):
            w = T @ v
            w -= Q @ (Q.T @ w)
            nw = np.linalg.norm(w)
            if nw == 0:
                ok = True
                break
            v = w / nw
            lam = float(v @ (T @ v))
            if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
                ok = True
                break
            lam_prev = lam
        vals.append(lam)
        flags.append(ok)
        v -= Q @ (Q.T @ v)
        nv = np.linalg.norm(v)
        if nv == 0:
            break
        Q = np.column_stack([Q, v / nv])
    order = np.argsort(-np.abs(vals), kind="stable")
    return EigEstimate(np.asarray(vals)[order], np.asarray(flags)[order])


@dataclass
class EvalReport:
    """Per-matrix spectral comparison of the learned diagonal vs. baselines."""

    eig_rows: list = field(default_factory=list)     # (matrix_id, method, rank, value)
    winner_rows: list = field(default_factory=list)  # (matrix_id, band_width, band_x, winner)
    max_eigs: dict = field(default_factory=dict)     # method -> list of spectral radii
    diffs: dict = field(default_factory=dict)        # baseline -> baseline_minus_learned
    fractions: dict = field(default_factory=dict)    # baseline -> fraction learned wins


BASELINES = ("omega_1", "omega_2_3", "omega_co")


def method_diagonal(method: str, A: SparseMatrixCSR,
                    store: nn.ParamStore | None = None) -> np.ndarray:
    if method == "learned":
        return nn.jacobi_model_forward(A, store)
    omega = {"omega_1": 1.0, "omega_2_3": 2.0 / 3.0}.get(method)
    if omega is None:
        if method != "omega_co":
            raise ValueError(f"unknown method '{method}'")
        omega = omega_co(A)
    return omega / diag(A)


def compare_methods(test_set: list[ProblemInstance], store: nn.ParamStore,
                    k: int = 10, eig_method: str = "auto") -> EvalReport:
    report = EvalReport(max_eigs={m: [] for m in ("learned",) + BASELINES})
    for inst in test_set:
        mid = inst.meta.get("index", 0)
        _, V_hf = sine_mode_basis(inst.coords, inst.meta["N_y"] - 2)
        radii = {}
        for method in ("learned",) + BASELINES:
            d = method_diagonal(method, inst.A, store)
            est = eval_jacobi(d, inst.A, V_hf, k=k, method=eig_method)
            radii[method] = est.spectral_radius
            report.max_eigs[method].append(est.spectral_radius)
            for rank, val in enumerate(est.values):
                report.eig_rows.append((mid, method, rank, float(val)))
        winner = min(radii, key=radii.get)
        report.winner_rows.append(
            (mid, 2 * inst.meta["beta"], inst.meta["band_x"], winner))
    learned = np.array(report.max_eigs["learned"])
    for b in BASELINES:
        base = np.array(report.max_eigs[b])
        report.diffs[b] = (base - learned).tolist()
        report.fractions[b] = float(np.mean(learned < base))
    return report


# -- diffusion-coefficient experiment ----------------------------------------

def diffusion_loss(pred, targets):
    """(1/2N^2) * sum(|alpha - alpha_t|^2 + |beta - beta_t|^2) over N^2 vertices."""
    targets = np.asarray(targets, dtype=np.float64)
    shape = pred.value.shape if isinstance(pred, ad.Var) else np.shape(pred)
    if tuple(shape) != targets.shape:
        raise ValueError(f"prediction shape {shape} != target shape {targets.shape}")
    n = len(targets)
    if isinstance(pred, ad.Var):
        diff = ad.sub(pred, pred.tape.leaf(targets))
        return ad.scalar_mul(1.0 / (2 * n), ad.vsum(ad.mul(diff, diff)))
    return float(((np.asarray(pred) - targets) ** 2).sum() / (2 * n))


def train_diffusion(datasets: dict, cfg: TrainConfig,
                    store: nn.ParamStore | None = None) -> tuple[nn.ParamStore, TrainResult]:
    if store is None:
        store = nn.init_glorot(nn.diffusion_model_spec(),
                               np.random.default_rng([cfg.seed, 2]))
    train = [(diffusion_graph(inst), inst.targets) for inst in datasets["train"]]
    val = [(diffusion_graph(inst), inst.targets) for inst in datasets["val"]]
    adam = nn.adam_init(store.size)
    history, best = [], (np.inf, 0, store.values.copy())
    for epoch in range(cfg.epochs_max):
        epoch_losses = []
        for batch in _batches(train, cfg.batch_size):
            gsum = np.zeros(store.size)
            for graph, targets in batch:
                tape = ad.Tape()
                pred, tparams = nn.diffusion_model_forward(graph, store, tape)
                loss = diffusion_loss(pred, targets)
                gsum += tparams.flat_grad(ad.backward(tape, loss))
                epoch_losses.append(float(loss.value))
            new_values, adam = nn.adam_step(store.values, gsum, adam, cfg.lr)
            store = store.replaced(new_values)
        train_loss = float(np.mean(epoch_losses))
        val_loss = float(np.mean([
            diffusion_loss(nn.diffusion_model_forward(graph, store), targets)
            for graph, targets in val]))
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise RuntimeError(f"training diverged at epoch {epoch} "
                               f"(train={train_loss}, val={val_loss})")
        history.append((epoch, train_loss, val_loss))
        if val_loss < best[0]:
            best = (val_loss, epoch, store.values.copy())
    if cfg.early_stop:
        store = store.replaced(best[2])
    return store, TrainResult(history, best[1], best[0])


def freq_sweep_eval(store: nn.ParamStore, theta_grid_max: int, N: int,
                    trained_theta_max: int = 4):
    """MSE grid over isotropic coefficient frequencies (theta_x, theta_y).

    Returns (grid, rows) where rows are (theta_x, theta_y, mse, in_training_region).
    """
    grid = np.zeros((theta_grid_max + 1, theta_grid_max + 1))
    rows = []
    for tx in range(theta_grid_max + 1):
        for ty in range(theta_grid_max + 1):
            inst = assemble_diffusion_periodic(N, tx, ty, tx, ty)
            pred = nn.diffusion_model_forward(diffusion_graph(inst), store)
            mse = diffusion_loss(pred, inst.targets)
            grid[tx, ty] = mse
            rows.append((tx, ty, mse, int(tx <= trained_theta_max and ty <= trained_theta_max)))
    return grid, rows


def stencil_probe(store: nn.ParamStore, N: int = 32,
                  alpha: float = 0.001, beta: float = 0.8) -> tuple[float, float]:
    """Mean predicted (alpha, beta) on the constant-coefficient instance."""
    inst = assemble_diffusion_periodic(N, alpha=lambda x, y: alpha,
                                       beta=lambda x, y: beta)
    pred = nn.diffusion_model_forward(diffusion_graph(inst), store)
    return float(pred[:, 0].mean()), float(pred[:, 1].mean())


# -- CSV emission -------------------------------------------------------------

def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(
                (FLOAT_FMT % v) if isinstance(v, float) else str(v)
                for v in row) + "\n")


def write_loss_curve(path, result: TrainResult) -> None:
    _write_csv(path, "epoch,train_loss,val_loss", result.history)


def write_eig_report(path, report: EvalReport) -> None:
    _write_csv(path, "matrix_id,method,k,eigenvalue", report.eig_rows)


def write_winners(path, report: EvalReport) -> None:
    _write_csv(path, "matrix_id,band_width,band_x,winner", report.winner_rows)


def write_freq_sweep(path, rows) -> None:
    _write_csv(path, "theta_x,theta_y,mse,in_training_region", rows)
