"""AMG strength-of-connection, C/F splitting, direct interpolation, two-level demo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph_net import GNLayerSpec, apply_layer, graph_to_matrix, matrix_to_graph
from .kernels import jacobi_reference
from .sparse import SparseMatrixCSR, dense_vector, diag, spmv_csr


@dataclass(frozen=True)
class CFPartition:
    """Coarse/fine vertex split. ``labels[i]`` is 'C' or 'F'; ``coarse_index``
    maps each C vertex to its column in the final interpolation operator."""

    labels: np.ndarray
    coarse_index: dict[int, int]

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels))
        if not set(np.unique(self.labels)) <= {"C", "F"}:
            raise ValueError("labels must be 'C' or 'F'")

    @property
    def num_coarse(self) -> int:
        return len(self.coarse_index)

    def indicator(self) -> np.ndarray:
        """1.0 on C vertices, 0.0 on F vertices."""
        return (self.labels == "C").astype(np.float64)


def soc_sa(A: SparseMatrixCSR) -> SparseMatrixCSR:
    """Smoothed-aggregation strength S_ij = A_ij^2 / (A_ii A_jj) on A's pattern."""
    d = diag(A)
    zero = np.flatnonzero(d == 0)
    if len(zero):
        raise ValueError(f"zero diagonal in row {zero[0]}")
    graph = matrix_to_graph(A, self_edges=True, vertex_attrs=d[:, None])
    layer = GNLayerSpec(
        phi_e=lambda E, Vs, Vd, g: E[:, :1] ** 2 / (Vd[:, :1] * Vs[:, :1]),
    )
    return graph_to_matrix(apply_layer(graph, layer))


def step(x: np.ndarray) -> np.ndarray:
    """Heaviside with step(0) = 0: the thresholding activation."""
    return (np.asarray(x) > 0).astype(np.float64)


def soc_classic(A: SparseMatrixCSR, tau: float = 0.25,
                threshold: bool = True) -> SparseMatrixCSR:
    """Classic strength S_ij = -A_ij / max_{k != i}(-A_ik), two layers.

    With ``threshold`` the entries become step(S_ij - tau); the surviving ones
    (value 1) mark strong connections. Rows with no negative off-diagonal have
    an undefined metric and raise.
    """
    if not (0 < tau <= 1):
        raise ValueError("tau must lie in (0, 1]")
    graph = matrix_to_graph(A, self_edges=True,
                            vertex_attrs=np.zeros((A.n, 1)))
    off_diag = (graph.src != graph.dst).astype(np.float64)

    def rho_max_neg(block):
        # max over -A_ij, off-diagonal entries only; self-edge contributes -inf
        vals = np.where(block[:, 1] > 0, -block[:, 0], -np.inf)
        return np.max(vals, initial=-np.inf)

    layer1 = GNLayerSpec(
        phi_e=lambda E, Vs, Vd, g: np.column_stack([E[:, 0], off_diag]),
        phi_v=lambda V, ebar, g: ebar,
        rho_ev=rho_max_neg,
    )
    mid = apply_layer(graph, layer1)
    v = mid.vertex_attrs[:, 0]
    bad = np.flatnonzero(~(v > 0))
    if len(bad):
        raise ValueError(f"row {bad[0]} has no negative off-diagonal; "
                         "classic strength is undefined")

    if threshold:
        phi_e2 = lambda E, Vs, Vd, g: step(-E[:, :1] / Vd[:, :1] - tau)
    else:
        phi_e2 = lambda E, Vs, Vd, g: -E[:, :1] / Vd[:, :1]
    layer2 = GNLayerSpec(phi_e=phi_e2)
    # restore A_ij on the edges for the second layer's update
    mid2 = apply_layer(
        apply_layer(mid, GNLayerSpec(phi_e=lambda E, Vs, Vd, g: graph.edge_attrs)),
        layer2)
    return graph_to_matrix(mid2)


def soc_abs(A: SparseMatrixCSR, theta: float) -> SparseMatrixCSR:
    """Magnitude-based strength mask: |A_ij| >= theta * max_{k != i} |A_ik|.

    The diagonal is excluded from both the row maximum and the mask. Returns
    a 0/1-valued matrix on A's pattern.
    """
    if not (0 < theta <= 1):
        raise ValueError("theta must lie in (0, 1]")
    graph = matrix_to_graph(A, self_edges=True, vertex_attrs=np.zeros((A.n, 1)))
    off_diag = (graph.src != graph.dst).astype(np.float64)

    def rho_max_abs(block):
        vals = np.where(block[:, 1] > 0, np.abs(block[:, 0]), 0.0)
        return np.max(vals, initial=0.0)

    layer1 = GNLayerSpec(
        phi_e=lambda E, Vs, Vd, g: np.column_stack([E[:, 0], off_diag]),
        phi_v=lambda V, ebar, g: ebar,
        rho_ev=rho_max_abs,
    )
    mid = apply_layer(graph, layer1)
    row_max = mid.vertex_attrs[:, 0]
    mask = (np.abs(graph.edge_attrs[:, 0]) >= theta * row_max[graph.dst]) & (off_diag > 0)
    layer2 = GNLayerSpec(phi_e=lambda E, Vs, Vd, g: mask.astype(np.float64)[:, None])
    return graph_to_matrix(apply_layer(mid, layer2))


def cf_split_greedy(S_hat: SparseMatrixCSR) -> CFPartition:
    """Greedy maximal independent set in the (symmetrized) strength graph.

    Vertices are visited in index order; an unlabeled vertex becomes C and its
    strong neighbors (in either direction) become F.
    """
    n = S_hat.n
    rows = S_hat.row_of_entry()
    strong = S_hat.values != 0
    off = rows != S_hat.col_idx
    keep = strong & off
    neighbors = [set() for _ in range(n)]
    for i, j in zip(rows[keep], S_hat.col_idx[keep]):
        neighbors[i].add(int(j))
        neighbors[j].add(int(i))
    labels = np.full(n, "", dtype=object)
    for i in range(n):
        if labels[i] == "":
            labels[i] = "C"
            for j in neighbors[i]:
                if labels[j] == "":
                    labels[j] = "F"
    coarse = {int(i): k for k, i in enumerate(np.flatnonzero(labels == "C"))}
    return CFPartition(labels.astype("U1"), coarse)


def direct_interpolation(A: SparseMatrixCSR, S_hat: SparseMatrixCSR,
                         cf: CFPartition) -> tuple[SparseMatrixCSR, np.ndarray]:
    """Direct interpolation weights via two layers plus post-processing.

    Layer 1 passes the coarse indicator to each edge and forms, per vertex,
    alpha_i = (sum_j A_ij) / (A_ii * sum_j A_ij C_j S_hat_ij) with both sums
    over off-diagonal stored entries. Layer 2 sets P_ij = (1-C_i)(-A_ij alpha_i).
    Post-processing puts 1 on the diagonal of C rows and removes F columns.

    Returns the rectangular operator as (square-pattern CSR with F columns
    zeroed, dense n-by-|C| array). The dense form is the usable prolongator.
    """
    d = diag(A)
    C = cf.indicator()
    shat_vals = _aligned_values(A, S_hat)
    graph = matrix_to_graph(A, self_edges=True,
                            vertex_attrs=np.column_stack([d, C, np.zeros(A.n)]))
    off_diag = (graph.src != graph.dst).astype(np.float64)
    aux = np.column_stack([graph.edge_attrs[:, 0], shat_vals, off_diag])

    def phi_v1(V, ebar, g):
        alpha = np.zeros(len(V))
        fine = V[:, 1] == 0
        den = V[:, 0] * ebar[:, 1]
        bad = fine & (den == 0)
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(f"F row {i} has no usable strong coarse neighbors")
        alpha[fine] = ebar[fine, 0] / den[fine]
        return np.column_stack([V[:, 0], V[:, 1], alpha])

    # layer 1: edge update passes C_j (and carries S_hat / off-diagonal flags
    # needed by the aggregation), vertex update forms alpha_i
    layer1 = GNLayerSpec(
        phi_e=lambda E, Vs, Vd, g: np.column_stack(
            [aux[:, 0], Vs[:, 1], aux[:, 1], aux[:, 2]]),
        phi_v=phi_v1,
        rho_ev=_interp_sums,
    )
    mid = apply_layer(graph, layer1)

    diag_edge = (graph.src == graph.dst).astype(np.float64)

    def phi_e2(E, Vs, Vd, g):
        p = (1.0 - Vd[:, 1]) * (-graph.edge_attrs[:, 0] * Vd[:, 2])
        # post-processing step (a): unit diagonal on C rows
        p = p + Vd[:, 1] * diag_edge
        return p[:, None]

    final = apply_layer(mid, GNLayerSpec(phi_e=phi_e2))
    P_square = graph_to_matrix(final)
    # post-processing step (b): drop F columns, renumbering by coarse_index
    dense = P_square.to_dense()
    cols = sorted(cf.coarse_index, key=cf.coarse_index.get)
    return P_square, dense[:, cols]


def _interp_sums(block):
    """num = sum of off-diagonal A_ij; den = same sum restricted to strong coarse j."""
    off = block[:, 3] > 0
    num = block[off, 0].sum()
    den = (block[off, 0] * block[off, 1] * (block[off, 2] != 0)).sum()
    return np.array([num, den])


def _aligned_values(A: SparseMatrixCSR, S: SparseMatrixCSR) -> np.ndarray:
    """Values of S aligned to A's stored pattern (S must share the pattern)."""
    if (S.n != A.n or not np.array_equal(S.row_ptr, A.row_ptr)
            or not np.array_equal(S.col_idx, A.col_idx)):
        raise ValueError("strength matrix must share A's sparsity pattern")
    return S.values


def two_level_solve(A: SparseMatrixCSR, b, tau: float = 0.25, omega: float = 2.0 / 3.0,
                    pre_sweeps: int = 2, iters: int = 10,
                    collect_residuals: bool = False):
    """Two-level cycle: Jacobi sweeps, dense coarse correction, Jacobi sweeps.

    A minimal demonstration of the coarse-grid correction; the prolongator
    comes from classic strength, greedy splitting, and direct interpolation.
    """
    b = dense_vector(b)
    S_hat = soc_classic(A, tau)
    cf = cf_split_greedy(S_hat)
    if cf.num_coarse == A.n:
        P = np.eye(A.n)
    else:
        _, P = direct_interpolation(A, S_hat, cf)
    A_dense = A.to_dense()
    A_coarse = P.T @ A_dense @ P
    if abs(np.linalg.det(A_coarse)) < 1e-300:
        raise np.linalg.LinAlgError("coarse matrix is singular")
    x = np.zeros(A.n)
    residuals = [float(np.linalg.norm(b - spmv_csr(A, x)))]
    for _ in range(iters):
        x = jacobi_reference(A, b, x, omega, pre_sweeps)
        r = b - spmv_csr(A, x)
        x = x + P @ np.linalg.solve(A_coarse, P.T @ r)
        x = jacobi_reference(A, b, x, omega, pre_sweeps)
        residuals.append(float(np.linalg.norm(b - spmv_csr(A, x))))
    if collect_residuals:
        return x, residuals
    return x
