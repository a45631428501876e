"""Shared sparse/dense linear algebra kernels.

Everything is float64. Sparse matrices are immutable CSR with a canonical,
order-independent finalize step so assembly is bit-reproducible. Dense
factorizations and the generalized symmetric eigensolver wrap LAPACK (via
scipy) and turn silent failures (singular pivots, indefinite mass matrices)
into exceptions.
"""

import warnings

import numpy as np
import scipy.linalg
import scipy.sparse

__all__ = [
    "SparseMatrix",
    "DenseFactorization",
    "EigenPairs",
    "coo_to_csr",
    "spmv",
    "dense_factor_solve",
    "generalized_sym_eig",
    "submatrix",
    "write_matrix_market",
]

MM_HEADER = "%%MatrixMarket matrix coordinate real general"


class SparseMatrix:
    """Immutable CSR matrix.

    Attributes
    ----------
    n_rows, n_cols : int
    row_offsets : int64 array, length n_rows + 1, non-decreasing
    col_indices : int64 array, strictly increasing within each row
    values : float64 array, same length as col_indices
    """

    __slots__ = ("n_rows", "n_cols", "row_offsets", "col_indices", "values", "_csr")

    def __init__(self, n_rows, n_cols, row_offsets, col_indices, values):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        self.col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._csr = None
        self._validate()

    def _validate(self):
        if self.row_offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if self.row_offsets[0] != 0 or self.row_offsets[-1] != len(self.col_indices):
            raise ValueError("row_offsets must start at 0 and end at nnz")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if len(self.col_indices) != len(self.values):
            raise ValueError("col_indices and values must have equal length")
        if len(self.col_indices):
            if self.col_indices.min() < 0 or self.col_indices.max() >= self.n_cols:
                raise ValueError("column index out of range")
            # strictly increasing columns within each row <=> no duplicates
            dc = np.diff(self.col_indices)
            row_starts = np.zeros(len(self.col_indices), dtype=bool)
            row_starts[self.row_offsets[:-1][self.row_offsets[:-1] < len(row_starts)]] = True
            bad = (dc <= 0) & ~row_starts[1:]
            if np.any(bad):
                raise ValueError("column indices must be strictly increasing within a row")

    @property
    def nnz(self):
        return len(self.values)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def to_scipy(self):
        """Return (and cache) the scipy CSR view of this matrix."""
        if self._csr is None:
            self._csr = scipy.sparse.csr_matrix(
                (self.values, self.col_indices, self.row_offsets),
                shape=(self.n_rows, self.n_cols),
            )
        return self._csr

    @classmethod
    def from_scipy(cls, m):
        csr = scipy.sparse.csr_matrix(m).copy()
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    def toarray(self):
        return self.to_scipy().toarray()

    def spmv(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n_cols:
            raise ValueError(
                "dimension mismatch: matrix has %d columns, vector has length %d"
                % (self.n_cols, x.shape[0])
            )
        return self.to_scipy() @ x

    def transpose(self):
        return SparseMatrix.from_scipy(self.to_scipy().T)


def coo_to_csr(n_rows, n_cols, rows, cols, values):
    """Finalize COO triplets into canonical CSR, summing duplicates.

    Triplets are sorted by (row, col, value) before summation, so any
    permutation of the input produces bit-identical output.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    if not (len(rows) == len(cols) == len(values)):
        raise ValueError("rows, cols, values must have equal length")
    if len(rows) == 0:
        return SparseMatrix(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), [], [])
    if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
        raise ValueError("triplet index out of range")
    order = np.lexsort((values, cols, rows))
    rows, cols, values = rows[order], cols[order], values[order]
    new_group = np.empty(len(rows), dtype=bool)
    new_group[0] = True
    new_group[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(new_group)
    summed = np.add.reduceat(values, starts)
    out_rows = rows[starts]
    out_cols = cols[starts]
    row_offsets = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(row_offsets, out_rows + 1, 1)
    np.cumsum(row_offsets, out=row_offsets)
    return SparseMatrix(n_rows, n_cols, row_offsets, out_cols, summed)


def spmv(m, x):
    """y = m @ x with explicit dimension checking."""
    if isinstance(m, SparseMatrix):
        return m.spmv(x)
    x = np.asarray(x, dtype=np.float64)
    if m.shape[1] != x.shape[0]:
        raise ValueError("dimension mismatch in spmv")
    return m @ x


class DenseFactorization:
    """Reusable LU factorization of a dense square matrix."""

    def __init__(self, a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        self.n = a.shape[0]
        with warnings.catch_warnings():
            # exact zero pivots are reported by the explicit check below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self._lu, self._piv = scipy.linalg.lu_factor(a, check_finite=True)
        d = np.abs(np.diag(self._lu))
        dmax = d.max() if self.n else 0.0
        if dmax == 0.0 or d.min() <= self.n * np.finfo(float).eps * dmax:
            raise np.linalg.LinAlgError("matrix is singular to working precision")

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError("right-hand side has wrong length")
        return scipy.linalg.lu_solve((self._lu, self._piv), b, check_finite=False)


def dense_factor_solve(a):
    """Factor a dense square matrix once; raises LinAlgError when singular."""
    return DenseFactorization(a)


class EigenPairs:
    """Eigenpairs of a generalized symmetric problem a v = lambda s v.

    values ascend; vectors are columns, normalized to v^T s v = 1 with the
    first component of largest magnitude made positive.
    """

    __slots__ = ("values", "vectors")

    def __init__(self, values, vectors):
        self.values = np.asarray(values, dtype=np.float64)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        if np.any(np.diff(self.values) < 0):
            raise ValueError("eigenvalues must be ascending")
        if self.vectors.shape[1] != len(self.values):
            raise ValueError("one vector column per eigenvalue required")

    @property
    def count(self):
        return len(self.values)


def generalized_sym_eig(a, s, count):
    """Smallest `count` eigenpairs of a v = lambda s v (a, s symmetric; s SPD).

    Reduction via Cholesky of s (LAPACK sygvx); raises LinAlgError when s is
    not positive definite.
    """
    a = np.asarray(a, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or s.shape != (n, n):
        raise ValueError("a and s must be square and of equal size")
    if not (1 <= count <= n):
        raise ValueError("count must be in [1, n]")
    try:
        vals, vecs = scipy.linalg.eigh(a, s, subset_by_index=[0, count - 1])
    except np.linalg.LinAlgError as e:
        raise np.linalg.LinAlgError(
            "generalized eigensolve failed: s is not positive definite (%s)" % e
        )
    # enforce unit s-norm and a deterministic sign
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        nrm = np.sqrt(abs(v @ (s @ v)))
        if nrm > 0:
            v /= nrm
        k = np.argmax(np.abs(v))
        if v[k] < 0:
            v *= -1.0
        vecs[:, j] = v
    return EigenPairs(vals, vecs)


def submatrix(m, rows, cols):
    """Dense extraction m[rows, cols] preserving the given index order."""
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    csr = m.to_scipy() if isinstance(m, SparseMatrix) else scipy.sparse.csr_matrix(m)
    n_rows, n_cols = csr.shape
    for idx, n, what in ((rows, n_rows, "row"), (cols, n_cols, "column")):
        if len(idx) and (idx.min() < 0 or idx.max() >= n):
            raise IndexError("%s index out of range" % what)
        if len(np.unique(idx)) != len(idx):
            raise ValueError("duplicate %s indices are not allowed" % what)
    return np.asarray(csr[np.ix_(rows, cols)].todense())


def write_matrix_market(m, path):
    """Write a sparse matrix in MatrixMarket coordinate format (1-based)."""
    if not isinstance(m, SparseMatrix):
        m = SparseMatrix.from_scipy(m)
    lines = [MM_HEADER, "%d %d %d" % (m.n_rows, m.n_cols, m.nnz)]
    rows = np.repeat(np.arange(m.n_rows, dtype=np.int64), np.diff(m.row_offsets))
    for i, j, v in zip(rows, m.col_indices, m.values):
        lines.append("%d %d %.17g" % (i + 1, j + 1, v))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
