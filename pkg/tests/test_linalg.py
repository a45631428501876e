"""Tests for the sparse/dense kernels: CSR finalize determinism, dense
factorization accuracy, and the generalized symmetric eigensolver against
independent oracles (characteristic polynomial for n <= 4, deflated power
iteration for larger problems)."""

import numpy as np
import pytest

from poroimex import linalg as la


def char_poly_eigvals(a):
    """Eigenvalues via Faddeev-LeVerrier characteristic polynomial + roots."""
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    roots = np.roots(coeffs)
    return np.sort(roots.real)


def power_method_eigvals(a, iters=20000):
    """All eigenvalues of a symmetric matrix by shifted power iteration with
    Hotelling deflation (largest magnitude first on a PSD shift)."""
    n = a.shape[0]
    shift = np.abs(a).sum(axis=1).max() + 1.0  # a + shift*I is SPD
    b = a + shift * np.eye(n)
    vals, vecs = [], []
    rng = np.random.default_rng(7)
    for _ in range(n):
        v = rng.standard_normal(n)
        for u in vecs:
            v -= (u @ v) * u
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = b @ v
            for u in vecs:
                w -= (u @ w) * u
            nrm = np.linalg.norm(w)
            if nrm == 0.0:
                break
            w /= nrm
            if np.linalg.norm(w - v) < 1e-14:
                v = w
                break
            v = w
        lam = v @ (b @ v)
        vals.append(lam - shift)
        vecs.append(v)
    return np.sort(np.array(vals))


class TestSparseMatrix:
    def test_coo_finalize_sums_duplicates(self):
        m = la.coo_to_csr(2, 2, [0, 0, 1, 0], [0, 1, 1, 0], [1.0, 1.0, 3.0, 1.0])
        assert m.toarray() == pytest.approx(np.array([[2.0, 1.0], [0.0, 3.0]]))
        assert m.nnz == 3

    def test_coo_finalize_is_order_independent_bitwise(self):
        rng = np.random.default_rng(0)
        rows = rng.integers(0, 40, size=500)
        cols = rng.integers(0, 40, size=500)
        vals = rng.standard_normal(500)
        m1 = la.coo_to_csr(40, 40, rows, cols, vals)
        perm = rng.permutation(500)
        m2 = la.coo_to_csr(40, 40, rows[perm], cols[perm], vals[perm])
        assert np.array_equal(m1.row_offsets, m2.row_offsets)
        assert np.array_equal(m1.col_indices, m2.col_indices)
        assert np.array_equal(m1.values, m2.values)  # bit-identical

    def test_csr_invariants(self):
        m = la.coo_to_csr(3, 3, [2, 0, 1], [1, 2, 0], [5.0, 1.0, 2.0])
        assert m.row_offsets.shape == (4,)
        assert m.row_offsets[0] == 0 and m.row_offsets[-1] == m.nnz
        for r in range(3):
            cols = m.col_indices[m.row_offsets[r]:m.row_offsets[r + 1]]
            assert np.all(np.diff(cols) > 0)

    def test_invalid_csr_rejected(self):
        with pytest.raises(ValueError):
            la.SparseMatrix(2, 2, [0, 2, 2], [1, 1], [1.0, 1.0])  # duplicate col
        with pytest.raises(ValueError):
            la.SparseMatrix(2, 2, [0, 1], [0], [1.0])  # bad offsets length

    def test_spmv(self):
        m = la.coo_to_csr(2, 2, [0, 0, 1], [0, 1, 1], [2.0, 1.0, 3.0])
        y = la.spmv(m, np.array([1.0, 1.0]))
        assert y == pytest.approx([3.0, 3.0])

    def test_spmv_dimension_mismatch(self):
        m = la.coo_to_csr(2, 2, [0], [0], [1.0])
        with pytest.raises(ValueError):
            m.spmv(np.ones(3))

    def test_spmv_matches_dense_random(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            dense = rng.standard_normal((17, 23))
            dense[rng.random((17, 23)) < 0.6] = 0.0
            r, c = np.nonzero(dense)
            m = la.coo_to_csr(17, 23, r, c, dense[r, c])
            x = rng.standard_normal(23)
            assert m.spmv(x) == pytest.approx(dense @ x, abs=1e-13)


class TestDenseFactorization:
    def test_hand_example(self):
        f = la.dense_factor_solve(np.array([[4.0, 1.0], [1.0, 3.0]]))
        x = f.solve(np.array([1.0, 2.0]))
        assert x == pytest.approx([1.0 / 11.0, 7.0 / 11.0], rel=1e-14)

    def test_random_spd_roundtrip(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            b = rng.standard_normal((20, 20))
            a = b @ b.T + 20 * np.eye(20)
            f = la.dense_factor_solve(a)
            rhs = rng.standard_normal(20)
            x = f.solve(rhs)
            assert np.linalg.norm(a @ x - rhs) / np.linalg.norm(rhs) <= 1e-12

    def test_factorization_reusable(self):
        a = np.array([[2.0, 0.0], [0.0, 4.0]])
        f = la.dense_factor_solve(a)
        assert f.solve(np.array([2.0, 4.0])) == pytest.approx([1.0, 1.0])
        assert f.solve(np.array([4.0, 8.0])) == pytest.approx([2.0, 2.0])

    def test_singular_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            la.dense_factor_solve(np.zeros((3, 3)))
        with pytest.raises(np.linalg.LinAlgError):
            la.dense_factor_solve(np.array([[1.0, 2.0], [2.0, 4.0]]))


class TestGeneralizedEig:
    def test_diagonal_pair(self):
        p = la.generalized_sym_eig(np.diag([2.0, 8.0]), np.diag([1.0, 2.0]), 2)
        assert p.values == pytest.approx([2.0, 4.0], rel=1e-14)

    def test_2x2_hand(self):
        a = np.array([[2.0, 1.0], [1.0, 2.0]])
        p = la.generalized_sym_eig(a, np.eye(2), 2)
        assert p.values == pytest.approx([1.0, 3.0], rel=1e-14)

    def test_char_poly_oracle_n4(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            b = rng.standard_normal((4, 4))
            a = b + b.T
            want = char_poly_eigvals(a)
            got = la.generalized_sym_eig(a, np.eye(4), 4).values
            assert got == pytest.approx(want, abs=1e-10 * max(1.0, np.abs(want).max()))

    def test_power_method_oracle_n10(self):
        rng = np.random.default_rng(9)
        b = rng.standard_normal((10, 10))
        a = b + b.T
        want = power_method_eigvals(a)
        got = la.generalized_sym_eig(a, np.eye(10), 10).values
        assert got == pytest.approx(want, abs=1e-8 * np.abs(want).max())

    def test_s_orthonormality_and_residual(self):
        rng = np.random.default_rng(13)
        b = rng.standard_normal((30, 30))
        a = b + b.T
        c = rng.standard_normal((30, 30))
        s = c @ c.T + 30 * np.eye(30)
        p = la.generalized_sym_eig(a, s, 6)
        na, ns = np.linalg.norm(a, 2), np.linalg.norm(s, 2)
        for j in range(6):
            v = p.vectors[:, j]
            lam = p.values[j]
            assert abs(v @ (s @ v) - 1.0) <= 1e-8
            res = np.linalg.norm(a @ v - lam * (s @ v))
            assert res <= 1e-8 * (na + abs(lam) * ns)
        assert np.all(np.diff(p.values) >= 0)

    def test_sign_fix_deterministic(self):
        a = np.diag([1.0, 2.0, 3.0])
        p = la.generalized_sym_eig(a, np.eye(3), 3)
        for j in range(3):
            v = p.vectors[:, j]
            assert v[np.argmax(np.abs(v))] > 0

    def test_indefinite_s_raises(self):
        a = np.eye(3)
        s = np.diag([1.0, -1.0, 1.0])
        with pytest.raises(np.linalg.LinAlgError):
            la.generalized_sym_eig(a, s, 2)


class TestSubmatrix:
    def test_order_preserving(self):
        dense = np.arange(16, dtype=float).reshape(4, 4)
        r, c = np.nonzero(dense)
        m = la.coo_to_csr(4, 4, r, c, dense[r, c])
        sub = la.submatrix(m, [2, 0], [3, 1])
        assert sub == pytest.approx(dense[np.ix_([2, 0], [3, 1])])

    def test_out_of_range(self):
        m = la.coo_to_csr(2, 2, [0], [0], [1.0])
        with pytest.raises(IndexError):
            la.submatrix(m, [0, 2], [0])

    def test_duplicates_rejected(self):
        m = la.coo_to_csr(2, 2, [0], [0], [1.0])
        with pytest.raises(ValueError):
            la.submatrix(m, [0, 0], [0])


class TestMatrixMarket:
    def test_header_and_roundtrip(self, tmp_path):
        m = la.coo_to_csr(2, 3, [0, 1, 1], [2, 0, 1], [1.5, -2.0, 0.25])
        path = tmp_path / "m.mtx"
        la.write_matrix_market(m, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "%%MatrixMarket matrix coordinate real general"
        assert lines[1].split() == ["2", "3", "3"]
        entries = np.array([[float(t) for t in ln.split()] for ln in lines[2:]])
        rebuilt = np.zeros((2, 3))
        for i, j, v in entries:
            rebuilt[int(i) - 1, int(j) - 1] = v
        assert rebuilt == pytest.approx(m.toarray())
