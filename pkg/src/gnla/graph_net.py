"""Attributed directed graphs and the generic message-passing layer executor."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .sparse import SparseMatrixCSR, diag, from_coo

Reducer = str | Callable | Sequence


@dataclass(frozen=True)
class AttributedGraph:
    """Directed graph with per-edge, per-vertex, and global attribute arrays.

    Edges are stored in canonical order, sorted by (dst, src), so that all
    edges terminating at a vertex form a contiguous block and aggregation is
    a deterministic contiguous scan.
    """

    num_vertices: int
    edges: np.ndarray          # (Ne, 2) of (src, dst)
    vertex_attrs: np.ndarray   # (Nv, n_v)
    edge_attrs: np.ndarray     # (Ne, n_e), row order matches `edges`
    global_attrs: np.ndarray   # (n_g,)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        va = np.atleast_2d(np.asarray(self.vertex_attrs, dtype=np.float64))
        ea = np.asarray(self.edge_attrs, dtype=np.float64)
        if ea.ndim == 1:
            ea = ea[:, None]
        ga = np.atleast_1d(np.asarray(self.global_attrs, dtype=np.float64))
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "vertex_attrs", va)
        object.__setattr__(self, "edge_attrs", ea)
        object.__setattr__(self, "global_attrs", ga)
        if len(edges) and (edges.min() < 0 or edges.max() >= self.num_vertices):
            raise ValueError("edge endpoint out of range")
        if va.shape[0] != self.num_vertices:
            raise ValueError("vertex attribute rows must match vertex count")
        if ea.shape[0] != len(edges):
            raise ValueError("edge attribute rows must match edge count")
        key = edges[:, 1] * self.num_vertices + edges[:, 0]
        if np.any(np.diff(key) < 0):
            raise ValueError("edges must be sorted by (dst, src)")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def dst(self) -> np.ndarray:
        return self.edges[:, 1]

    def incoming_splits(self) -> np.ndarray:
        """Offsets delimiting, per vertex, the contiguous block of incoming edges."""
        counts = np.bincount(self.dst, minlength=self.num_vertices)
        return np.concatenate(([0], np.cumsum(counts)))


def make_graph(num_vertices, edges, vertex_attrs=None, edge_attrs=None,
               global_attrs=None) -> AttributedGraph:
    """Build a graph, sorting edges (and their attributes) into canonical order."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if vertex_attrs is None:
        vertex_attrs = np.zeros((num_vertices, 0))
    if edge_attrs is None:
        edge_attrs = np.zeros((len(edges), 0))
    if global_attrs is None:
        global_attrs = np.zeros(0)
    edge_attrs = np.asarray(edge_attrs, dtype=np.float64)
    if edge_attrs.ndim == 1:
        edge_attrs = edge_attrs[:, None]
    order = np.lexsort((edges[:, 0], edges[:, 1]))
    return AttributedGraph(num_vertices, edges[order], vertex_attrs,
                           edge_attrs[order], global_attrs)


@dataclass(frozen=True)
class GNLayerSpec:
    """The six pluggable functions of one message-passing layer.

    Update functions are vectorized over entities:
      phi_e(edge_attrs, v_src_attrs, v_dst_attrs, g) -> new edge_attrs
      phi_v(vertex_attrs, aggregated_edge_attrs, g)  -> new vertex_attrs
      phi_g(g, edge_aggregate, vertex_aggregate)     -> new g
    A ``None`` update leaves the corresponding attributes unchanged. Reducers
    are named ('sum', 'mean', 'min', 'max'), callables, or lists thereof
    (outputs concatenated in list order).
    """

    phi_e: Callable | None = None
    phi_v: Callable | None = None
    phi_g: Callable | None = None
    rho_ev: Reducer = "sum"
    rho_eg: Reducer = "sum"
    rho_vg: Reducer = "sum"


def _segment_reduce(attrs: np.ndarray, splits: np.ndarray, name: str) -> np.ndarray:
    """Reduce contiguous attribute blocks; empty blocks reduce to zero."""
    if name == "mean":
        total = _segment_reduce(attrs, splits, "sum")
        counts = np.diff(splits)
        return total / np.maximum(counts, 1)[:, None]
    try:
        ufunc = {"sum": np.add, "min": np.minimum, "max": np.maximum}[name]
    except KeyError:
        raise ValueError(f"unknown reducer '{name}'") from None
    n = len(splits) - 1
    out = np.zeros((n, attrs.shape[1]))
    nonempty = np.flatnonzero(np.diff(splits) > 0)
    if len(nonempty):
        out[nonempty] = ufunc.reduceat(attrs, splits[:-1][nonempty], axis=0)
    return out


def aggregate_incoming(graph: AttributedGraph, edge_attrs: np.ndarray,
                       reducer: Reducer) -> np.ndarray:
    """Per-vertex reduction of the attributes of edges terminating there.

    A list reducer concatenates each reduction's output in list order.
    Vertices with no incoming edges aggregate to zero for every reducer.
    """
    edge_attrs = np.asarray(edge_attrs, dtype=np.float64)
    if edge_attrs.ndim == 1:
        edge_attrs = edge_attrs[:, None]
    splits = graph.incoming_splits()
    if isinstance(reducer, str):
        return _segment_reduce(edge_attrs, splits, reducer)
    if callable(reducer):
        return np.stack([
            np.atleast_1d(reducer(edge_attrs[splits[k]:splits[k + 1]]))
            for k in range(graph.num_vertices)
        ])
    return np.concatenate(
        [aggregate_incoming(graph, edge_attrs, r) for r in reducer], axis=1)


def _reduce_all(attrs: np.ndarray, reducer: Reducer) -> np.ndarray:
    """Reduce a full attribute set (all edges or all vertices) to one vector."""
    if isinstance(reducer, str):
        splits = np.array([0, len(attrs)])
        return _segment_reduce(attrs, splits, reducer)[0]
    if callable(reducer):
        return np.atleast_1d(reducer(attrs))
    return np.concatenate([_reduce_all(attrs, r) for r in reducer])


def _check_finite(attrs: np.ndarray, kind: str) -> None:
    bad = ~np.all(np.isfinite(np.atleast_2d(attrs)), axis=-1)
    if np.any(bad):
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise FloatingPointError(f"{kind} update produced a non-finite value at index {idx}")


def apply_layer(graph: AttributedGraph, layer: GNLayerSpec) -> AttributedGraph:
    """Execute one message-passing layer.

    Order: every edge update reads the original vertex attributes; then each
    vertex aggregates the *updated* attributes of its terminating edges and
    updates; finally the global attributes update from reductions of the new
    edge and vertex sets. Topology is never modified.
    """
    V, E, g = graph.vertex_attrs, graph.edge_attrs, graph.global_attrs
    if layer.phi_e is not None:
        E_new = np.atleast_2d(np.asarray(
            layer.phi_e(E, V[graph.src], V[graph.dst], g), dtype=np.float64))
        if E_new.shape[0] != graph.num_edges:
            raise ValueError("edge update changed the number of edges")
        _check_finite(E_new, "edge")
    else:
        E_new = E
    if layer.phi_v is not None:
        ebar = aggregate_incoming(graph, E_new, layer.rho_ev)
        V_new = np.atleast_2d(np.asarray(layer.phi_v(V, ebar, g), dtype=np.float64))
        if V_new.shape[0] != graph.num_vertices:
            raise ValueError("vertex update changed the number of vertices")
        _check_finite(V_new, "vertex")
    else:
        V_new = V
    if layer.phi_g is not None:
        e_agg = _reduce_all(E_new, layer.rho_eg)
        v_agg = _reduce_all(V_new, layer.rho_vg)
        g_new = np.atleast_1d(np.asarray(layer.phi_g(g, e_agg, v_agg), dtype=np.float64))
        _check_finite(g_new, "global")
    else:
        g_new = g
    return AttributedGraph(graph.num_vertices, graph.edges, V_new, E_new, g_new)


def apply_layers(graph: AttributedGraph, layers: Sequence[GNLayerSpec]) -> AttributedGraph:
    for layer in layers:
        graph = apply_layer(graph, layer)
    return graph


def matrix_to_graph(A: SparseMatrixCSR, self_edges: bool = True,
                    vertex_attrs=None, global_attrs=None) -> AttributedGraph:
    """View a square sparse matrix as an attributed graph.

    Each stored A_ij becomes an edge from vertex j to vertex i carrying A_ij.
    With ``self_edges=False`` diagonal entries are dropped from the edge set
    and appended as a vertex attribute column instead (0 where absent).
    """
    rows = A.row_of_entry()
    src, dst, vals = A.col_idx, rows, A.values
    extra_cols = []
    if not self_edges:
        off = src != dst
        src, dst, vals = src[off], dst[off], vals[off]
        extra_cols.append(diag(A)[:, None])
    if vertex_attrs is None:
        vertex_attrs = np.zeros((A.n, 0))
    vertex_attrs = np.atleast_2d(np.asarray(vertex_attrs, dtype=np.float64))
    if extra_cols:
        vertex_attrs = np.concatenate([vertex_attrs] + extra_cols, axis=1)
    if global_attrs is None:
        global_attrs = np.zeros(0)
    # CSR entries are already sorted by (row=dst, col=src)
    return AttributedGraph(A.n, np.column_stack([src, dst]), vertex_attrs,
                           vals[:, None], np.atleast_1d(global_attrs))


def graph_to_matrix(graph: AttributedGraph, attr_column: int = 0) -> SparseMatrixCSR:
    """Inverse of ``matrix_to_graph``: edge (src=j, dst=i) becomes entry A_ij."""
    if attr_column >= graph.edge_attrs.shape[1]:
        raise ValueError(f"edge attribute column {attr_column} does not exist")
    key = graph.dst * graph.num_vertices + graph.src
    if len(key) > 1 and np.any(np.diff(np.sort(key)) == 0):
        raise ValueError("duplicate (src, dst) edges cannot form a matrix")
    return from_coo(graph.num_vertices, graph.dst, graph.src,
                    graph.edge_attrs[:, attr_column])


def with_attrs(graph: AttributedGraph, vertex_attrs=None, edge_attrs=None,
               global_attrs=None) -> AttributedGraph:
    """Copy of the graph with some attribute sets replaced."""
    kwargs = {}
    if vertex_attrs is not None:
        kwargs["vertex_attrs"] = vertex_attrs
    if edge_attrs is not None:
        kwargs["edge_attrs"] = edge_attrs
    if global_attrs is not None:
        kwargs["global_attrs"] = global_attrs
    return replace(graph, **kwargs)
