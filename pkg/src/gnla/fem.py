"""Quadrilateral meshes, finite-element assembly, sine-mode bases, datasets."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .graph_net import AttributedGraph, matrix_to_graph
from .sparse import (SparseMatrixCSR, from_coo, read_matrix_market,
                     write_matrix_market)

FLOAT_FMT = "%.17g"

# reference bilinear element on [-1,1]^2, corners counterclockwise
_REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


@dataclass(frozen=True)
class QuadMesh:
    """Quadrilateral mesh on the unit square.

    ``elements`` rows list 4 vertex ids counterclockwise; ``boundary`` flags
    Dirichlet vertices. ``band`` optionally records (band_x, beta) for meshes
    with a refined vertical band.
    """

    coords: np.ndarray        # (Nv, 2)
    elements: np.ndarray      # (Ne, 4)
    boundary: np.ndarray      # (Nv,) bool
    band: tuple[float, float] | None = None

    @property
    def num_vertices(self) -> int:
        return len(self.coords)

    def interior(self) -> np.ndarray:
        """Ids of non-Dirichlet vertices, in vertex order."""
        return np.flatnonzero(~self.boundary)


@dataclass
class ProblemInstance:
    """One assembled linear system plus the geometry it came from.

    ``coords`` are the coordinates of the unknowns (one row per matrix row).
    ``targets`` holds per-unknown regression targets where the experiment has
    them (diffusion: columns alpha, beta), else None.
    """

    A: SparseMatrixCSR
    coords: np.ndarray
    h: float
    targets: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _shape_gradients(xi: float, eta: float) -> np.ndarray:
    """(4, 2) array of (dN/dxi, dN/deta) for the bilinear shape functions."""
    cx, cy = _REF_CORNERS[:, 0], _REF_CORNERS[:, 1]
    return 0.25 * np.column_stack([cx * (1.0 + cy * eta), cy * (1.0 + cx * xi)])


def _shape_values(xi: float, eta: float) -> np.ndarray:
    return 0.25 * (1.0 + _REF_CORNERS[:, 0] * xi) * (1.0 + _REF_CORNERS[:, 1] * eta)


def element_stiffness(coords4: np.ndarray, alpha=None, beta=None) -> np.ndarray:
    """4x4 stiffness of one bilinear quad for -d/dx(a du/dx) - d/dy(b du/dy).

    ``alpha``/``beta`` are callables of (x, y) evaluated at the 2x2 Gauss
    points, or None for the Laplace case a = b = 1.
    """
    K = np.zeros((4, 4))
    for xi in _GAUSS:
        for eta in _GAUSS:
            dN = _shape_gradients(xi, eta)
            J = coords4.T @ dN            # J[a,b] = dx_a / dxi_b
            det = np.linalg.det(J)
            if det <= 0:
                raise ValueError("degenerate element (non-positive Jacobian)")
            G = dN @ np.linalg.inv(J)     # physical gradients, (4, 2)
            if alpha is None and beta is None:
                K += det * (G @ G.T)
            else:
                x, y = _shape_values(xi, eta) @ coords4
                a = 1.0 if alpha is None else float(alpha(x, y))
                b = 1.0 if beta is None else float(beta(x, y))
                K += det * (a * np.outer(G[:, 0], G[:, 0])
                            + b * np.outer(G[:, 1], G[:, 1]))
    return K


def _assemble(coords, elements, dof_of_vertex, n_dofs, alpha=None, beta=None):
    rows, cols, vals = [], [], []
    cache: dict = {}
    for elem in elements:
        if alpha is None and beta is None:
            # unit coefficients: stiffness depends only on the element shape
            rel = coords[elem] - coords[elem][0]
            key = tuple(np.round(rel, 12).ravel())
            K = cache.get(key)
            if K is None:
                K = cache[key] = element_stiffness(coords[elem])
        else:
            K = element_stiffness(coords[elem], alpha, beta)
        dofs = dof_of_vertex[elem]
        for a in range(4):
            if dofs[a] < 0:
                continue
            for b in range(4):
                if dofs[b] < 0:
                    continue
                rows.append(dofs[a])
                cols.append(dofs[b])
                vals.append(K[a, b])
    return from_coo(n_dofs, np.array(rows), np.array(cols), np.array(vals),
                    sum_duplicates=True)


# -- band mesh (Dirichlet Laplace experiment) --------------------------------

def build_band_mesh(N_y: int, beta: float, band_col: int) -> QuadMesh:
    """Uniform N_y x N_y grid plus two vertex columns at band_x +- beta.

    ``band_col`` indexes the retained grid column (its x is band_col * h with
    h = 1/(N_y - 1)); it must stay clear of the boundary columns, and beta must
    not reach the neighboring columns.
    """
    if N_y < 6:
        raise ValueError("N_y too small for a banded mesh")
    h = 1.0 / (N_y - 1)
    if not (2 <= band_col <= N_y - 3):
        raise ValueError(f"band column {band_col} too close to the boundary")
    if not (0 < beta < h / 2):
        raise ValueError(f"beta={beta} collides with a neighboring grid column "
                         f"(need 0 < beta < h/2 = {h / 2})")
    band_x = band_col * h
    xs = np.sort(np.concatenate([np.arange(N_y) * h,
                                 [band_x - beta, band_x + beta]]))
    ys = np.arange(N_y) * h
    ncols = N_y + 2
    X, Y = np.meshgrid(xs, ys)           # row r, column c -> vertex r*ncols + c
    coords = np.column_stack([X.ravel(), Y.ravel()])
    elems = []
    for r in range(N_y - 1):
        for c in range(ncols - 1):
            v = r * ncols + c
            elems.append([v, v + 1, v + 1 + ncols, v + ncols])
    boundary = np.zeros(len(coords), dtype=bool)
    rr, cc = np.divmod(np.arange(len(coords)), ncols)
    boundary[(rr == 0) | (rr == N_y - 1) | (cc == 0) | (cc == ncols - 1)] = True
    return QuadMesh(coords, np.array(elems), boundary, band=(band_x, beta))


def assemble_laplace_dirichlet(mesh: QuadMesh) -> SparseMatrixCSR:
    """Stiffness matrix of -Laplace with homogeneous Dirichlet rows eliminated."""
    dof = np.full(mesh.num_vertices, -1, dtype=np.int64)
    interior = mesh.interior()
    dof[interior] = np.arange(len(interior))
    return _assemble(mesh.coords, mesh.elements, dof, len(interior))


# -- periodic diffusion problem ----------------------------------------------

def assemble_diffusion_periodic(N: int, theta_ax: int = 0, theta_ay: int = 0,
                                theta_bx: int = 0, theta_by: int = 0,
                                alpha=None, beta=None) -> ProblemInstance:
    """N x N doubly periodic mesh for d/dx(a du/dx) + d/dy(b du/dy).

    Default coefficients are a = cos(theta_ax pi x)^2 cos(theta_ay pi y)^2 and
    the analogous b; pass callables ``alpha``/``beta`` to override (used for
    constant-coefficient probes). Vertices are (ix + iy*N) at (ix*h, iy*h),
    h = 1/N; targets are the coefficient values at the vertices.
    """
    if N < 4:
        raise ValueError("N must be at least 4")
    for t in (theta_ax, theta_ay, theta_bx, theta_by):
        if t < 0 or t != int(t):
            raise ValueError("frequencies must be non-negative integers")
    h = 1.0 / N
    if alpha is None:
        alpha = lambda x, y: np.cos(theta_ax * np.pi * x) ** 2 * np.cos(theta_ay * np.pi * y) ** 2
    if beta is None:
        beta = lambda x, y: np.cos(theta_bx * np.pi * x) ** 2 * np.cos(theta_by * np.pi * y) ** 2
    ix, iy = np.meshgrid(np.arange(N), np.arange(N))
    coords = np.column_stack([(ix.ravel() * h), (iy.ravel() * h)])
    # all elements are h-by-h squares; only the connectivity wraps, so the
    # per-element stiffness is assembled vectorized over elements
    c, r = ix.ravel(), iy.ravel()
    vid = lambda rr, cc: (rr % N) * N + (cc % N)
    conn = np.column_stack([vid(r, c), vid(r, c + 1), vid(r + 1, c + 1), vid(r + 1, c)])
    det = h * h / 4.0
    K_all = np.zeros((N * N, 4, 4))
    for xi in _GAUSS:
        for eta in _GAUSS:
            G = _shape_gradients(xi, eta) * (2.0 / h)   # physical gradients
            gx = (c + (1.0 + xi) / 2.0) * h
            gy = (r + (1.0 + eta) / 2.0) * h
            a_vals = np.broadcast_to(np.asarray(alpha(gx, gy), dtype=np.float64), c.shape)
            b_vals = np.broadcast_to(np.asarray(beta(gx, gy), dtype=np.float64), c.shape)
            K_all += det * (a_vals[:, None, None] * np.outer(G[:, 0], G[:, 0])
                            + b_vals[:, None, None] * np.outer(G[:, 1], G[:, 1]))
    A = from_coo(N * N, np.repeat(conn, 4, axis=1).ravel(),
                 np.tile(conn, (1, 4)).ravel(), K_all.ravel(),
                 sum_duplicates=True)
    targets = np.column_stack([alpha(coords[:, 0], coords[:, 1]) * np.ones(N * N),
                               beta(coords[:, 0], coords[:, 1]) * np.ones(N * N)])
    meta = {"N": N, "h": h, "theta": [theta_ax, theta_ay, theta_bx, theta_by]}
    return ProblemInstance(A, coords, h, targets, meta)


def diffusion_graph(inst: ProblemInstance) -> AttributedGraph:
    """Model-input view: edge (A_ij, x_rel, y_rel), vertex (A_ii), global (h).

    Relative offsets are grid steps from vertex i to neighbor j in {-1, 0, 1},
    wrapping periodically; e.g. the southeast neighbor gives (1, -1).
    """
    N = inst.meta["N"]
    graph = matrix_to_graph(inst.A, self_edges=True,
                            vertex_attrs=np.zeros((inst.A.n, 1)),
                            global_attrs=np.array([inst.h]))
    sx, sy = graph.src % N, graph.src // N
    dx_, dy_ = graph.dst % N, graph.dst // N
    wrap = lambda d: ((d + N // 2) % N) - N // 2
    x_rel, y_rel = wrap(sx - dx_), wrap(sy - dy_)
    if np.any(np.abs(x_rel) > 1) or np.any(np.abs(y_rel) > 1):
        raise ValueError("matrix couples vertices beyond nearest neighbors")
    edge_attrs = np.column_stack([graph.edge_attrs[:, 0], x_rel, y_rel])
    diag_attr = np.zeros((inst.A.n, 1))
    self_mask = graph.src == graph.dst
    diag_attr[graph.dst[self_mask], 0] = graph.edge_attrs[self_mask, 0]
    return AttributedGraph(graph.num_vertices, graph.edges, diag_attr,
                           edge_attrs, graph.global_attrs)


# -- sine-mode bases ----------------------------------------------------------

def sine_mode_basis(coords: np.ndarray, n_modes: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns sin(tx pi x) sin(ty pi y) at ``coords``, unit-normalized.

    Modes run over (tx, ty) in {1..n_modes}^2, ordered row-major by (tx, ty).
    Returns (low, high): low has both frequencies <= n_modes/2.
    """
    x, y = coords[:, 0], coords[:, 1]
    t = np.arange(1, n_modes + 1)
    sx = np.sin(np.pi * np.outer(x, t))   # (n, n_modes)
    sy = np.sin(np.pi * np.outer(y, t))
    V = sx[:, :, None] * sy[:, None, :]   # (n, tx, ty)
    V = V.reshape(len(coords), n_modes * n_modes)
    norms = np.linalg.norm(V, axis=0)
    if np.any(norms == 0):
        raise ValueError("sine mode vanishes on this vertex set")
    V = V / norms
    tx, ty = np.meshgrid(t, t, indexing="ij")
    low = ((tx <= n_modes / 2) & (ty <= n_modes / 2)).ravel()
    return V[:, low], V[:, ~low]


def dst_basis(N_y: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal sine basis on the N_y x N_y grid of interior unit-square
    points x_i = i/(N_y+1); N_y counts interior unknowns per direction."""
    if N_y < 2:
        raise ValueError("N_y must be at least 2")
    g = np.arange(1, N_y + 1) / (N_y + 1)
    X, Y = np.meshgrid(g, g)
    return sine_mode_basis(np.column_stack([X.ravel(), Y.ravel()]), N_y)


# -- dataset generation -------------------------------------------------------

@dataclass(frozen=True)
class JacobiDataConfig:
    N_y: int = 20
    beta_frac_min: float = 0.05   # beta as a fraction of h
    beta_frac_max: float = 0.45
    counts: tuple[int, int, int] = (60, 20, 20)
    seed: int = 0


@dataclass(frozen=True)
class DiffusionDataConfig:
    N_min: int = 24
    N_max: int = 32
    theta_max: int = 4
    counts: tuple[int, int, int] = (100, 30, 20)
    seed: int = 0


def paper_jacobi_config(seed: int = 0) -> JacobiDataConfig:
    return JacobiDataConfig(N_y=38 + 2, counts=(800, 50, 150), seed=seed)


def paper_diffusion_config(seed: int = 0) -> DiffusionDataConfig:
    return DiffusionDataConfig(N_min=80, N_max=100, theta_max=6,
                               counts=(700, 200, 100), seed=seed)


def _split(instances, counts):
    (a, b, c), out = counts, {}
    out["train"] = instances[:a]
    out["val"] = instances[a:a + b]
    out["test"] = instances[a + b:a + b + c]
    return out


def jacobi_instance(cfg: JacobiDataConfig, index: int) -> ProblemInstance:
    """Banded Dirichlet Laplace system; randomness from (seed, index)."""
    rng = np.random.default_rng([cfg.seed, index])
    h = 1.0 / (cfg.N_y - 1)
    beta = rng.uniform(cfg.beta_frac_min, cfg.beta_frac_max) * h
    band_col = int(rng.integers(2, cfg.N_y - 2))
    mesh = build_band_mesh(cfg.N_y, beta, band_col)
    A = assemble_laplace_dirichlet(mesh)
    coords = mesh.coords[mesh.interior()]
    meta = {"index": index, "seed": cfg.seed, "N_y": cfg.N_y, "h": h,
            "beta": beta, "band_x": band_col * h, "band_col": band_col}
    return ProblemInstance(A, coords, h, None, meta)


def gen_jacobi_dataset(cfg: JacobiDataConfig) -> dict[str, list[ProblemInstance]]:
    total = sum(cfg.counts)
    return _split([jacobi_instance(cfg, k) for k in range(total)], cfg.counts)


def diffusion_instance(cfg: DiffusionDataConfig, index: int) -> ProblemInstance:
    rng = np.random.default_rng([cfg.seed, index])
    N = int(rng.integers(cfg.N_min, cfg.N_max + 1))
    thetas = [int(t) for t in rng.integers(0, cfg.theta_max + 1, size=4)]
    inst = assemble_diffusion_periodic(N, *thetas)
    inst.meta.update({"index": index, "seed": cfg.seed})
    return inst


def gen_diffusion_dataset(cfg: DiffusionDataConfig) -> dict[str, list[ProblemInstance]]:
    total = sum(cfg.counts)
    return _split([diffusion_instance(cfg, k) for k in range(total)], cfg.counts)


# -- disk format --------------------------------------------------------------

def write_instance(dirname: str, inst: ProblemInstance) -> None:
    """matrix.mtx + meta.json + coords.csv (+ targets.csv when present)."""
    os.makedirs(dirname, exist_ok=True)
    write_matrix_market(os.path.join(dirname, "matrix.mtx"), inst.A)
    meta = dict(inst.meta)
    meta["h"] = inst.h
    with open(os.path.join(dirname, "meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=1)
    np.savetxt(os.path.join(dirname, "coords.csv"), inst.coords,
               fmt=FLOAT_FMT, delimiter=",", header="x,y", comments="")
    if inst.targets is not None:
        np.savetxt(os.path.join(dirname, "targets.csv"), inst.targets,
                   fmt=FLOAT_FMT, delimiter=",", header="alpha,beta", comments="")


def read_instance(dirname: str) -> ProblemInstance:
    A = read_matrix_market(os.path.join(dirname, "matrix.mtx"))
    with open(os.path.join(dirname, "meta.json")) as fh:
        meta = json.load(fh)
    coords = np.loadtxt(os.path.join(dirname, "coords.csv"),
                        delimiter=",", skiprows=1, ndmin=2)
    tpath = os.path.join(dirname, "targets.csv")
    targets = None
    if os.path.exists(tpath):
        targets = np.loadtxt(tpath, delimiter=",", skiprows=1, ndmin=2)
    return ProblemInstance(A, coords, meta["h"], targets, meta)
