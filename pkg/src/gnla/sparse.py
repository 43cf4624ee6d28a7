"""Square sparse CSR matrices, reference linear algebra, and Matrix Market I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MatrixFormatError(ValueError):
    """Raised for malformed Matrix Market files or inconsistent CSR data."""


def dense_vector(values) -> np.ndarray:
    """Validate and return a 1-D float64 vector with finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SparseMatrixCSR:
    """Square sparse matrix in CSR layout.

    Columns within each row are strictly increasing; explicit stored zeros are
    permitted so derived matrices can keep the sparsity pattern of their input.
    Instances are immutable after construction and safe to share.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.asarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.asarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.n + 1,):
            raise MatrixFormatError("row_ptr must have length n+1")
        if rp[0] != 0 or rp[-1] != len(ci) or np.any(np.diff(rp) < 0):
            raise MatrixFormatError("row_ptr must be non-decreasing from 0 to nnz")
        if len(ci) != len(self.values):
            raise MatrixFormatError("col_idx and values length mismatch")
        if len(ci) and (ci.min() < 0 or ci.max() >= self.n):
            raise MatrixFormatError("column index out of range")
        for i in range(self.n):
            cols = ci[rp[i]:rp[i + 1]]
            if np.any(np.diff(cols) <= 0):
                raise MatrixFormatError(f"row {i}: columns not strictly increasing")

    @property
    def nnz(self) -> int:
        return len(self.values)

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Column indices and values of row ``i``."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def row_of_entry(self) -> np.ndarray:
        """Row index of each stored entry, aligned with ``values``."""
        return np.repeat(np.arange(self.n), np.diff(self.row_ptr))

    def with_values(self, values: np.ndarray) -> "SparseMatrixCSR":
        """Same pattern, new entry values."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise ValueError("value array does not match the stored pattern")
        return SparseMatrixCSR(self.n, self.row_ptr, self.col_idx, values)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        dense[self.row_of_entry(), self.col_idx] = self.values
        return dense


def from_coo(n: int, rows, cols, vals, sum_duplicates: bool = False) -> SparseMatrixCSR:
    """Build a CSR matrix from unordered coordinate triplets."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if len(rows):
        dup = (np.diff(rows) == 0) & (np.diff(cols) == 0)
        if np.any(dup):
            if not sum_duplicates:
                raise MatrixFormatError("duplicate (row, col) entries")
            keep = np.concatenate(([True], ~dup))
            group = np.cumsum(keep) - 1
            summed = np.zeros(group[-1] + 1)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[keep], cols[keep], summed
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    np.cumsum(row_ptr, out=row_ptr)
    return SparseMatrixCSR(n, row_ptr, cols, vals)


def from_dense(dense, keep_zeros: bool = False) -> SparseMatrixCSR:
    dense = np.asarray(dense, dtype=np.float64)
    if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
        raise MatrixFormatError("dense input must be square")
    if keep_zeros:
        rows, cols = np.indices(dense.shape)
        rows, cols = rows.ravel(), cols.ravel()
    else:
        rows, cols = np.nonzero(dense)
    return from_coo(dense.shape[0], rows, cols, dense[rows, cols])


def identity(n: int) -> SparseMatrixCSR:
    idx = np.arange(n)
    return SparseMatrixCSR(n, np.arange(n + 1), idx, np.ones(n))


def spmv_csr(A: SparseMatrixCSR, x: np.ndarray) -> np.ndarray:
    """y = A x, each row summed over its stored entries in stored order."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has length {len(x)}")
    products = A.values * x[A.col_idx]
    return _rowwise_sum(products, A.row_ptr)


def spmm_csr(A: SparseMatrixCSR, X: np.ndarray) -> np.ndarray:
    """Y = A X for a dense n-by-k matrix X, row sums in stored order."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != A.n:
        raise ValueError("dimension mismatch")
    products = A.values[:, None] * X[A.col_idx]
    return _rowwise_sum(products, A.row_ptr)


def _rowwise_sum(entries: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    """Sum entry slices delimited by row_ptr; empty rows sum to zero."""
    n = len(row_ptr) - 1
    out_shape = (n,) + entries.shape[1:]
    out = np.zeros(out_shape)
    starts = row_ptr[:-1]
    nonempty = np.flatnonzero(np.diff(row_ptr) > 0)
    if len(nonempty):
        # reduceat would misbehave on empty slices; restrict to non-empty rows
        out[nonempty] = np.add.reduceat(entries, starts[nonempty], axis=0)
    return out


def diag(A: SparseMatrixCSR) -> np.ndarray:
    """Diagonal entries of A; absent entries are zero."""
    d = np.zeros(A.n)
    rows = A.row_of_entry()
    on_diag = rows == A.col_idx
    d[rows[on_diag]] = A.values[on_diag]
    return d


def transpose(A: SparseMatrixCSR) -> SparseMatrixCSR:
    return from_coo(A.n, A.col_idx, A.row_of_entry(), A.values)


def read_matrix_market(path) -> SparseMatrixCSR:
    """Read a square matrix in Matrix Market coordinate format (general or symmetric)."""
    with open(path) as fh:
        lines = fh.readlines()
    if not lines:
        raise MatrixFormatError(f"{path}:1: empty file")
    header = lines[0].split()
    if (
        len(header) < 4
        or header[0] != "%%MatrixMarket"
        or header[1].lower() != "matrix"
        or header[2].lower() != "coordinate"
    ):
        raise MatrixFormatError(f"{path}:1: malformed Matrix Market header")
    symmetry = header[4].lower() if len(header) > 4 else "general"
    if symmetry not in ("general", "symmetric"):
        raise MatrixFormatError(f"{path}:1: unsupported symmetry '{symmetry}'")

    body = [
        (no, ln) for no, ln in enumerate(lines[1:], start=2)
        if ln.strip() and not ln.lstrip().startswith("%")
    ]
    if not body:
        raise MatrixFormatError(f"{path}: missing size line")
    size_no, size_line = body[0]
    parts = size_line.split()
    if len(parts) != 3:
        raise MatrixFormatError(f"{path}:{size_no}: malformed size line")
    nrows, ncols, nnz = (int(p) for p in parts)
    if nrows != ncols:
        raise MatrixFormatError(f"{path}:{size_no}: matrix is not square ({nrows}x{ncols})")
    if len(body) - 1 != nnz:
        raise MatrixFormatError(f"{path}:{size_no}: expected {nnz} entries, found {len(body) - 1}")

    rows, cols, vals = [], [], []
    for no, ln in body[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise MatrixFormatError(f"{path}:{no}: expected 'row col value'")
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError as exc:
            raise MatrixFormatError(f"{path}:{no}: {exc}") from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixFormatError(f"{path}:{no}: index ({i}, {j}) out of range")
        rows.append(i - 1)
        cols.append(j - 1)
        vals.append(v)
        if symmetry == "symmetric" and i != j:
            rows.append(j - 1)
            cols.append(i - 1)
            vals.append(v)
    return from_coo(nrows, rows, cols, vals)


def write_matrix_market(path, A: SparseMatrixCSR) -> None:
    """Write in coordinate/general format with 17 significant digits (exact round-trip)."""
    rows = A.row_of_entry()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, v in zip(rows, A.col_idx, A.values):
            fh.write(f"{i + 1} {j + 1} {v:.17g}\n")
