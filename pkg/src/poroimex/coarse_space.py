"""Spectral coarse spaces on a structured coarse grid.

A coarse grid of N_H x N_H square cells overlays the fine triangulation
(N divisible by N_H). Around every coarse vertex l the patch omega_l is the
union of the adjacent coarse cells. On each patch two generalized
eigenproblems built from the fixed (bar) coefficients supply the local
basis: kappa-bar stiffness against a kappa-bar-weighted mass for pressure,
and the bar elasticity form against a (lam-bar + 2 mu-bar)-weighted vector
mass for displacement. Natural boundary conditions apply on patch
boundaries; displacement DOFs constrained globally are removed from the
patch index sets. The smallest eigenvectors, multiplied by the bilinear
partition of unity chi^l, become the columns of the prolongation.

Columns are ordered eigenindex-major (all first eigenvectors across the
coarse vertices, then all second ones, ...), so the space for M basis
functions per vertex is literally a column prefix of the space for M+1.
The Galerkin coarse operator P^T L P is stored dense and factorized once.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import mesh_fem as mf
from .linalg import (
    DenseFactorization,
    EigenPairs,
    SparseMatrix,
    coo_to_csr,
    generalized_sym_eig,
)

__all__ = [
    "CoarseGrid",
    "Patch",
    "SpectralBasis",
    "Prolongation",
    "build_coarse_grid",
    "build_omega_patch",
    "pressure_basis",
    "displacement_basis",
    "build_spectral_basis",
    "partition_of_unity",
    "assemble_prolongation",
    "coarse_operator",
    "CoarseSolver",
    "save_basis",
    "load_basis",
]


class CoarseGrid:
    """Structured overlay of N_H x N_H coarse cells on a fine mesh.

    Coarse cell (I, J) has index J*N_H + I and contains the fine squares
    with i in [I r, (I+1) r), j in [J r, (J+1) r), r = N / N_H fine squares
    per coarse side. Coarse vertex (Iv, Jv) has index Jv*(N_H+1) + Iv; its
    patch omega_l is the union of the at most four adjacent coarse cells.
    """

    def __init__(self, mesh, N_H):
        if mesh.N % N_H != 0:
            raise ValueError("fine N=%d not divisible by N_H=%d" % (mesh.N, N_H))
        self.mesh = mesh
        self.N_H = int(N_H)
        self.ratio = mesh.N // self.N_H
        self.n_cells = self.N_H * self.N_H
        self.n_vertices = (self.N_H + 1) * (self.N_H + 1)
        self.H = mesh.L / self.N_H

    def cell_index(self, I, J):
        return J * self.N_H + I

    def vertex_index(self, Iv, Jv):
        return Jv * (self.N_H + 1) + Iv

    def vertex_ij(self, l):
        return l % (self.N_H + 1), l // (self.N_H + 1)

    def cell_fine_triangles(self, c):
        """Fine triangle indices covered by coarse cell c."""
        N, r = self.mesh.N, self.ratio
        I, J = c % self.N_H, c // self.N_H
        i = np.arange(I * r, (I + 1) * r)
        j = np.arange(J * r, (J + 1) * r)
        squares = (j[:, None] * N + i[None, :]).ravel()
        return np.sort(np.concatenate([2 * squares, 2 * squares + 1]))

    def omega_cells(self, l):
        """Coarse cells sharing coarse vertex l (1, 2 or 4 of them)."""
        Iv, Jv = self.vertex_ij(l)
        cells = []
        for J in (Jv - 1, Jv):
            for I in (Iv - 1, Iv):
                if 0 <= I < self.N_H and 0 <= J < self.N_H:
                    cells.append(self.cell_index(I, J))
        return np.asarray(cells, dtype=np.int64)

    def fine_vertex_box(self, i_lo, i_hi, j_lo, j_hi):
        """Fine vertex indices with i in [i_lo, i_hi], j in [j_lo, j_hi]."""
        n1 = self.mesh.N + 1
        i = np.arange(max(i_lo, 0), min(i_hi, self.mesh.N) + 1)
        j = np.arange(max(j_lo, 0), min(j_hi, self.mesh.N) + 1)
        return (j[:, None] * n1 + i[None, :]).ravel()

    def omega_vertex_box(self, l):
        """Bounds (i_lo, i_hi, j_lo, j_hi) of fine vertices in omega_l."""
        Iv, Jv = self.vertex_ij(l)
        r = self.ratio
        i_lo = max(Iv - 1, 0) * r
        i_hi = min(Iv + 1, self.N_H) * r
        j_lo = max(Jv - 1, 0) * r
        j_hi = min(Jv + 1, self.N_H) * r
        return i_lo, i_hi, j_lo, j_hi


def build_coarse_grid(mesh, N_H):
    """Coarse overlay grid; requires the fine N divisible by N_H."""
    return CoarseGrid(mesh, N_H)


@dataclass
class Patch:
    """A local subdomain with its fine entities and DOF index sets.

    `vertices` and `cells` index fine vertices / triangles. `p_dofs` equals
    `vertices`; `u_dofs` lists displacement DOFs in field-local indexing
    (2 v + comp) with globally constrained DOFs removed; `coupled_dofs`
    concatenates pressure and offset displacement DOFs for coupled-system
    use. All index arrays are sorted.
    """

    kind: str
    o: int
    index: int
    vertices: np.ndarray
    cells: np.ndarray
    p_dofs: np.ndarray
    u_dofs: np.ndarray
    coupled_dofs: np.ndarray


def _make_patch(kind, o, index, vertices, cells, dofmap):
    vertices = np.sort(np.asarray(vertices, dtype=np.int64))
    u_all = np.sort(np.concatenate([2 * vertices, 2 * vertices + 1]))
    u_dofs = u_all[~dofmap.u_constrained[u_all]]
    coupled = np.concatenate([vertices, dofmap.n_pressure + u_dofs])
    return Patch(
        kind=kind, o=int(o), index=int(index), vertices=vertices,
        cells=np.sort(np.asarray(cells, dtype=np.int64)),
        p_dofs=vertices, u_dofs=u_dofs, coupled_dofs=coupled,
    )


def build_omega_patch(coarse, dofmap, l):
    """The patch omega_l: all coarse cells sharing coarse vertex l."""
    cells = np.concatenate(
        [coarse.cell_fine_triangles(c) for c in coarse.omega_cells(l)]
    )
    vertices = coarse.fine_vertex_box(*coarse.omega_vertex_box(l))
    return _make_patch("omega", 0, l, vertices, cells, dofmap)


def _local_index(global_ids, subset):
    pos = np.searchsorted(global_ids, subset)
    if np.any(global_ids[pos] != subset):
        raise ValueError("subset entries missing from the patch index set")
    return pos


def _pressure_local_matrices(mesh, patch, bounds):
    """Dense kappa-bar stiffness and kappa-bar-weighted mass on the patch."""
    verts = patch.vertices
    n_loc = len(verts)
    tri = mesh.triangles[patch.cells]
    loc = _local_index(verts, tri.ravel()).reshape(tri.shape)
    area = mesh.areas[patch.cells]
    grads = mesh.grads[patch.cells]
    kbar = bounds.kappa_bar[patch.cells]
    unit_mass = (mf.TRI_PHI.T @ mf.TRI_PHI) / 3.0  # times area: exact P1 mass
    Ae = np.einsum("e,eik,ejk->eij", kbar * area, grads, grads)
    Se = (kbar * area)[:, None, None] * unit_mass[None, :, :]
    a = np.zeros((n_loc, n_loc))
    s = np.zeros((n_loc, n_loc))
    rows = np.repeat(loc, 3, axis=1).ravel()
    cols = np.tile(loc, (1, 3)).ravel()
    np.add.at(a, (rows, cols), Ae.ravel())
    np.add.at(s, (rows, cols), Se.ravel())
    return a, s


def _displacement_local_matrices(mesh, patch, bounds):
    """Dense bar elasticity form and (lam+2mu)-bar vector mass on the patch.

    Rows/columns follow patch.u_dofs (constrained DOFs already removed);
    element contributions touching removed DOFs are dropped, which is the
    algebraic form of the homogeneous constraint.
    """
    u_dofs = patch.u_dofs
    n_loc = len(u_dofs)
    tri = mesh.triangles[patch.cells]
    area = mesh.areas[patch.cells]
    grads = mesh.grads[patch.cells]
    lam = bounds.lam_bar[patch.cells] * area
    mu = bounds.mu_bar[patch.cells] * area
    w_mass = (bounds.lam_bar[patch.cells] + 2.0 * bounds.mu_bar[patch.cells]) * area

    nt = len(patch.cells)
    exx = np.zeros((nt, 6))
    eyy = np.zeros((nt, 6))
    exy = np.zeros((nt, 6))
    div = np.zeros((nt, 6))
    for ldof in range(6):
        i, c = mf.LOC_VERT[ldof], mf.LOC_COMP[ldof]
        if c == 0:
            exx[:, ldof] = grads[:, i, 0]
            exy[:, ldof] = 0.5 * grads[:, i, 1]
        else:
            eyy[:, ldof] = grads[:, i, 1]
            exy[:, ldof] = 0.5 * grads[:, i, 0]
        div[:, ldof] = grads[:, i, c]
    Ke = 2.0 * mu[:, None, None] * (
        np.einsum("el,em->elm", exx, exx)
        + np.einsum("el,em->elm", eyy, eyy)
        + 2.0 * np.einsum("el,em->elm", exy, exy)
    ) + lam[:, None, None] * np.einsum("el,em->elm", div, div)
    unit_mass = (mf.TRI_PHI.T @ mf.TRI_PHI) / 3.0
    vec_mass = unit_mass[mf.LOC_VERT[:, None], mf.LOC_VERT[None, :]] * (
        mf.LOC_COMP[:, None] == mf.LOC_COMP[None, :]
    )
    Se = w_mass[:, None, None] * vec_mass[None, :, :]

    udof = 2 * tri[:, mf.LOC_VERT] + mf.LOC_COMP[None, :]
    pos = np.searchsorted(u_dofs, udof)
    pos = np.clip(pos, 0, n_loc - 1)
    keep = u_dofs[pos] == udof
    k = np.zeros((n_loc, n_loc))
    s = np.zeros((n_loc, n_loc))
    pair = keep[:, :, None] & keep[:, None, :]
    rows = np.repeat(pos, 6, axis=1).ravel()
    cols = np.tile(pos, (1, 6)).ravel()
    mask = pair.ravel()
    np.add.at(k, (rows[mask], cols[mask]), Ke.ravel()[mask])
    np.add.at(s, (rows[mask], cols[mask]), Se.ravel()[mask])
    return k, s


def pressure_basis(mesh, patch, bounds, M_count):
    """Smallest M_count eigenpairs of the patch pressure problem."""
    a, s = _pressure_local_matrices(mesh, patch, bounds)
    return generalized_sym_eig(a, s, M_count)


def displacement_basis(mesh, patch, bounds, M_count):
    """Smallest M_count eigenpairs of the patch elasticity problem."""
    k, s = _displacement_local_matrices(mesh, patch, bounds)
    return generalized_sym_eig(k, s, M_count)


def partition_of_unity(coarse, l, vertices):
    """Bilinear hat chi^l of coarse vertex l evaluated at fine vertices."""
    mesh = coarse.mesh
    Iv, Jv = coarse.vertex_ij(l)
    x = mesh.vertices[vertices]
    tx = np.maximum(0.0, 1.0 - np.abs(x[:, 0] / coarse.H - Iv))
    ty = np.maximum(0.0, 1.0 - np.abs(x[:, 1] / coarse.H - Jv))
    return tx * ty


class SpectralBasis:
    """Per-coarse-vertex eigenvectors and partition-of-unity values.

    Holds up to M_max eigenpairs per field and vertex (fewer on patches
    with fewer DOFs); prolongations for any M <= M_max slice from here.
    """

    def __init__(self, coarse, dofmap, patches, chi,
                 p_values, p_vectors, u_values, u_vectors, M_max_p, M_max_u):
        self.coarse = coarse
        self.dofmap = dofmap
        self.patches = patches
        self.chi = chi
        self.p_values = p_values
        self.p_vectors = p_vectors
        self.u_values = u_values
        self.u_vectors = u_vectors
        self.M_max_p = M_max_p
        self.M_max_u = M_max_u

    @property
    def n_coarse_vertices(self):
        return self.coarse.n_vertices


def build_spectral_basis(mesh, bounds, N_H, M_max_p=8, M_max_u=8, dofmap=None):
    """Solve every patch eigenproblem once, keeping M_max pairs per field."""
    coarse = build_coarse_grid(mesh, N_H)
    dofmap = dofmap if dofmap is not None else mf.build_dofmap(mesh)
    patches, chi = [], []
    p_values, p_vectors, u_values, u_vectors = [], [], [], []
    for l in range(coarse.n_vertices):
        patch = build_omega_patch(coarse, dofmap, l)
        patches.append(patch)
        chi.append(partition_of_unity(coarse, l, patch.vertices))
        pe = pressure_basis(mesh, patch, bounds, min(M_max_p, len(patch.p_dofs)))
        ue = displacement_basis(mesh, patch, bounds, min(M_max_u, len(patch.u_dofs)))
        p_values.append(pe.values)
        p_vectors.append(pe.vectors)
        u_values.append(ue.values)
        u_vectors.append(ue.vectors)
    return SpectralBasis(coarse, dofmap, patches, chi,
                         p_values, p_vectors, u_values, u_vectors,
                         M_max_p, M_max_u)


@dataclass
class Prolongation:
    """Coarse-to-fine maps for both fields and their coupled block form."""

    P_p: SparseMatrix
    P_u: SparseMatrix
    M_p: int
    M_u: int

    @property
    def N_H_dofs(self):
        return self.P_p.n_cols + self.P_u.n_cols

    def block(self):
        """P = diag(P_p, P_u) in coupled DOF ordering."""
        return SparseMatrix.from_scipy(
            scipy.sparse.block_diag(
                [self.P_p.to_scipy(), self.P_u.to_scipy()], format="csr"
            )
        )


def _field_prolongation(n_rows, patches, chi, vectors, M, dof_attr, row_of):
    rows, cols, vals = [], [], []
    col = 0
    for j in range(M):
        for l, patch in enumerate(patches):
            vecs = vectors[l]
            if j >= vecs.shape[1]:
                continue
            dofs = getattr(patch, dof_attr)
            weight = row_of(patch, chi[l])
            column = weight * vecs[:, j]
            keep = column != 0.0
            rows.append(dofs[keep])
            cols.append(np.full(keep.sum(), col, dtype=np.int64))
            vals.append(column[keep])
            col += 1
    if col == 0:
        raise ValueError("prolongation needs at least one basis function")
    return coo_to_csr(
        n_rows, col,
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
    )


def assemble_prolongation(basis, M_p, M_u):
    """Columns chi^l * eigenvector, eigenindex-major across coarse vertices.

    For each eigenindex j < M the coarse vertices contribute in order, so
    the assembly for M is a column prefix of the assembly for M+1 and
    enrichment only appends columns. Displacement eigenvectors multiply the
    partition of unity componentwise; rows at constrained DOFs stay zero.
    """
    if M_p > basis.M_max_p or M_u > basis.M_max_u:
        raise ValueError("requested M exceeds the precomputed basis size")
    n_p = basis.dofmap.n_pressure
    n_u = basis.dofmap.n_displacement
    P_p = _field_prolongation(
        n_p, basis.patches, basis.chi, basis.p_vectors, M_p,
        "p_dofs", lambda patch, chi: chi,
    )

    def u_weight(patch, chi):
        where = np.searchsorted(patch.vertices, patch.u_dofs // 2)
        return chi[where]

    P_u = _field_prolongation(
        n_u, basis.patches, basis.chi, basis.u_vectors, M_u,
        "u_dofs", u_weight,
    )
    return Prolongation(P_p=P_p, P_u=P_u, M_p=M_p, M_u=M_u)


class CoarseSolver:
    """Dense coarse matrix with a factorization of its equilibrated form.

    The raw Galerkin matrix mixes the pressure and displacement scales
    (diagonal spread ~1e20 at desk scale), which defeats a pivot-based
    singularity check even though the matrix is perfectly invertible. The
    factorization therefore works on D L_H D with D = 1/sqrt(|diag|); the
    solve wraps the scaling so callers see the unscaled system.
    """

    def __init__(self, L_H):
        self.matrix = np.asarray(L_H, dtype=np.float64)
        d = np.abs(np.diag(self.matrix))
        self._scale = 1.0 / np.sqrt(np.where(d > 0.0, d, 1.0))
        scaled = self.matrix * self._scale[:, None] * self._scale[None, :]
        self._fac = DenseFactorization(scaled)

    def solve(self, b):
        return self._scale * self._fac.solve(self._scale * np.asarray(b, float))


def coarse_operator(L_lin, P):
    """Galerkin coarse matrix P^T L P, stored dense, factorized once."""
    L = L_lin.to_scipy() if isinstance(L_lin, SparseMatrix) else L_lin
    Pm = P.block().to_scipy() if isinstance(P, Prolongation) else (
        P.to_scipy() if isinstance(P, SparseMatrix) else scipy.sparse.csr_matrix(P)
    )
    if L.shape[1] != Pm.shape[0]:
        raise ValueError("prolongation rows must match operator size")
    L_H = np.asarray((Pm.T @ (L @ Pm)).todense())
    solver = CoarseSolver(L_H)
    return L_H, solver


def save_basis(path, basis):
    """Serialize a spectral basis (versioned npz archive)."""
    payload = {
        "version": np.int64(1),
        "N": np.int64(basis.coarse.mesh.N),
        "L": np.float64(basis.coarse.mesh.L),
        "N_H": np.int64(basis.coarse.N_H),
        "M_max_p": np.int64(basis.M_max_p),
        "M_max_u": np.int64(basis.M_max_u),
    }
    for l in range(basis.n_coarse_vertices):
        payload["p_values_%d" % l] = basis.p_values[l]
        payload["p_vectors_%d" % l] = basis.p_vectors[l]
        payload["u_values_%d" % l] = basis.u_values[l]
        payload["u_vectors_%d" % l] = basis.u_vectors[l]
    np.savez_compressed(path, **payload)


def load_basis(path, mesh):
    """Load a basis saved by save_basis; validates version and mesh match."""
    with np.load(path) as data:
        if int(data["version"]) != 1:
            raise ValueError("unsupported basis file version %d" % int(data["version"]))
        if int(data["N"]) != mesh.N or float(data["L"]) != mesh.L:
            raise ValueError("basis file was built for a different mesh")
        N_H = int(data["N_H"])
        coarse = build_coarse_grid(mesh, N_H)
        dofmap = mf.build_dofmap(mesh)
        patches, chi = [], []
        p_values, p_vectors, u_values, u_vectors = [], [], [], []
        for l in range(coarse.n_vertices):
            patch = build_omega_patch(coarse, dofmap, l)
            patches.append(patch)
            chi.append(partition_of_unity(coarse, l, patch.vertices))
            p_values.append(data["p_values_%d" % l])
            p_vectors.append(data["p_vectors_%d" % l])
            u_values.append(data["u_values_%d" % l])
            u_vectors.append(data["u_vectors_%d" % l])
        return SpectralBasis(coarse, dofmap, patches, chi,
                             p_values, p_vectors, u_values, u_vectors,
                             int(data["M_max_p"]), int(data["M_max_u"]))
