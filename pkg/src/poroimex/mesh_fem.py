"""Structured triangular meshes and P1 finite element assembly.

The unit of work is a uniform N x N grid of squares on [0, L]^2, each split
along the bottom-left to top-right diagonal into two positively oriented
triangles (2 N^2 cells). Pressure uses scalar P1 elements, displacement
vector P1; the coupled DOF ordering is [all pressure; u_x, u_y interleaved
per vertex]. Triangle quadrature is the 3-point edge-midpoint rule (degree 2
exact), boundary integrals use 2-point Gauss edges. Nonlinear coefficients
are evaluated at quadrature points from P1-interpolated nodal pressure;
fixed-operator ("linear") blocks take per-cell coefficient bounds instead.

Assembly accumulates COO triplets and finalizes through a canonical sort, so
matrices are bit-identical regardless of element traversal order.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse

from . import constitutive as con
from .linalg import SparseMatrix, coo_to_csr

__all__ = [
    "StructuredTriMesh",
    "DofMap",
    "BoundaryConfig",
    "AssembledOperators",
    "build_mesh",
    "build_dofmap",
    "assemble_flow",
    "assemble_mechanics",
    "assemble_at_state",
    "assemble_linear",
    "apply_displacement_bc",
    "save_cell_field",
    "load_cell_field",
    "save_solution_csv",
    "load_solution_csv",
]

# 3-point midpoint rule: barycentric coordinates of the quadrature points,
# each with weight area/3; exact for quadratics
TRI_PHI = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])

# local displacement dof l = 2*i + c -> (vertex i, component c)
LOC_VERT = np.array([0, 0, 1, 1, 2, 2])
LOC_COMP = np.array([0, 1, 0, 1, 0, 1])

BOUNDARY_TAGS = ("bottom", "right", "top", "left")


class StructuredTriMesh:
    """Uniform triangulation of [0, L]^2 with a fixed diagonal split."""

    def __init__(self, N, L):
        if N < 2:
            raise ValueError("N must be at least 2")
        self.N = int(N)
        self.L = float(L)
        self.h = self.L / self.N
        n1 = self.N + 1
        ix, iy = np.meshgrid(np.arange(n1), np.arange(n1), indexing="xy")
        self.vertices = np.column_stack(
            [ix.ravel() * self.h, iy.ravel() * self.h]
        )
        # square (i, j) has index j*N + i; its lower triangle is 2s, upper 2s+1
        i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="xy")
        i, j = i.ravel(), j.ravel()
        v00 = j * n1 + i
        v10 = j * n1 + i + 1
        v01 = (j + 1) * n1 + i
        v11 = (j + 1) * n1 + i + 1
        tris = np.empty((2 * N * N, 3), dtype=np.int64)
        tris[0::2] = np.column_stack([v00, v10, v11])
        tris[1::2] = np.column_stack([v00, v11, v01])
        self.triangles = tris
        self.boundary_edges = {
            "bottom": np.column_stack([np.arange(N), np.arange(1, N + 1)]),
            "top": np.column_stack(
                [N * n1 + np.arange(N), N * n1 + np.arange(1, N + 1)]
            ),
            "left": np.column_stack(
                [n1 * np.arange(N), n1 * np.arange(1, N + 1)]
            ),
            "right": np.column_stack(
                [n1 * np.arange(N) + N, n1 * np.arange(1, N + 1) + N]
            ),
        }
        self._geometry()

    def _geometry(self):
        p = self.vertices[self.triangles]  # (nt, 3, 2)
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        self.areas = 0.5 * det
        if np.any(self.areas <= 0):
            raise ValueError("negative triangle orientation")
        # grad phi_i = rotated opposite edge / (2 A)
        g = np.empty((len(self.triangles), 3, 2))
        for k in range(3):
            a = p[:, (k + 1) % 3]
            b = p[:, (k + 2) % 3]
            g[:, k, 0] = a[:, 1] - b[:, 1]
            g[:, k, 1] = b[:, 0] - a[:, 0]
        self.grads = g / (2.0 * self.areas)[:, None, None]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.triangles)

    def cell_centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def quad_points(self):
        """Physical coordinates of the 3 quadrature points, (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        return np.einsum("qi,eid->eqd", TRI_PHI, p)

    def boundary_vertices(self, tag):
        edges = self.boundary_edges[tag]
        return np.unique(edges)


def build_mesh(N, L):
    """Structured triangulation with 2 N^2 cells covering [0, L]^2."""
    return StructuredTriMesh(N, L)


class DofMap:
    """Coupled ordering [all p; (u_x, u_y) per vertex] with Dirichlet mask.

    u_x is constrained on the left edge, u_y on the bottom edge; pressure is
    never constrained (Robin/no-flux only).
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nv = mesh.n_vertices
        self.n_pressure = nv
        self.n_displacement = 2 * nv
        self.n_total = 3 * nv
        u_constrained = np.zeros(2 * nv, dtype=bool)
        u_constrained[2 * mesh.boundary_vertices("left")] = True
        u_constrained[2 * mesh.boundary_vertices("bottom") + 1] = True
        self.u_constrained = u_constrained
        self.constrained = np.concatenate([np.zeros(nv, dtype=bool), u_constrained])

    def p_dof(self, v):
        return v

    def u_dof(self, v, comp):
        return self.n_pressure + 2 * v + comp

    @property
    def constrained_dofs(self):
        return np.flatnonzero(self.constrained)


def build_dofmap(mesh):
    return DofMap(mesh)


@dataclass(frozen=True)
class BoundaryConfig:
    """Robin data for the pressure equation: -kappa dp/dn = gamma (p - p1)."""

    gamma: float
    p1: float
    robin_tag: str = "top"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.robin_tag not in BOUNDARY_TAGS:
            raise ValueError("unknown boundary tag %r" % (self.robin_tag,))


@dataclass
class AssembledOperators:
    """Block operators of the coupled system, in field-local indexing.

    M, A: pressure mass/stiffness (n_p x n_p); K: elasticity (n_u x n_u);
    D: pressure-row coupling (n_p x n_u); G: displacement-row coupling
    (n_u x n_p); F_p, F_u load vectors. `state` tags whether coefficients
    came from a nodal pressure ("state") or from bounds ("linear").
    """

    M: SparseMatrix
    A: SparseMatrix
    K: SparseMatrix
    D: SparseMatrix
    G: SparseMatrix
    F_p: np.ndarray
    F_u: np.ndarray
    state: str
    bc_applied: bool = False


def _coefficients_at_state(mesh, vg, elast, fluid, p_nodal):
    """Quad-point coefficient arrays from P1-interpolated nodal pressure."""
    p_loc = np.asarray(p_nodal, dtype=float)[mesh.triangles]  # (nt, 3)
    p_q = p_loc @ TRI_PHI.T  # (nt, 3)
    cells = np.arange(mesh.n_cells)[:, None]
    c_q, kappa_q, S_q = con.storage_and_mobility(p_q, vg, fluid, cells=cells)
    _, dSdp_q = con.saturation_and_derivative(p_q, vg, fluid)
    theta_q = S_q * fluid.phi
    se_q = con.effective_saturation(theta_q, vg)
    _, lam_q, mu_q = con.young_and_lame(se_q, elast, cells=cells)
    rho_b_q = fluid.phi * S_q * fluid.rho_w + (1.0 - fluid.phi) * fluid.rho_s
    grad_p = np.einsum("ei,eid->ed", p_loc, mesh.grads)
    return {
        "c": c_q,
        "kappa": kappa_q,
        "S": S_q,
        "dSdp": dSdp_q,
        "lam": lam_q,
        "mu": mu_q,
        "rho_b": rho_b_q,
        "grad_p": grad_p,
    }


def _coefficients_linear(mesh, fluid, bounds):
    """Per-cell bound coefficients tiled onto quadrature points."""
    nt = mesh.n_cells
    tile = lambda a: np.broadcast_to(np.asarray(a, float)[:, None], (nt, 3)).copy()
    S_q = tile(bounds.S_bar)
    rho_b_q = fluid.phi * S_q * fluid.rho_w + (1.0 - fluid.phi) * fluid.rho_s
    return {
        "c": tile(bounds.c_bar),
        "kappa": tile(bounds.kappa_bar),
        "S": S_q,
        "dSdp": np.zeros((nt, 3)),
        "lam": tile(bounds.lam_bar),
        "mu": tile(bounds.mu_bar),
        "rho_b": rho_b_q,
        "grad_p": np.zeros((nt, 2)),
    }


def _sum_load(n, rows, vals):
    """Canonical duplicate-summing scatter of load triplets into a dense vector."""
    rows = np.concatenate(rows) if isinstance(rows, list) else rows
    vals = np.concatenate(vals) if isinstance(vals, list) else vals
    m = coo_to_csr(n, 1, rows, np.zeros(len(rows), dtype=np.int64), vals)
    return m.to_scipy().toarray().ravel()


def _edge_terms(mesh, bc):
    """Robin surface triplets (gamma * edge mass) and load triplets on the tagged edge."""
    edges = mesh.boundary_edges[bc.robin_tag]
    pts = mesh.vertices[edges]
    lengths = np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1)
    # 2-point Gauss on [0, 1]
    t = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    shape = np.column_stack([1.0 - t, t])  # (2 gauss, 2 nodes)
    e_mass = np.einsum("gi,gj->ij", shape, shape) * 0.5  # int N_i N_j dt
    e_load = shape.sum(axis=0) * 0.5
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    vals = (lengths[:, None, None] * bc.gamma * e_mass[None]).ravel()
    load_vals = (lengths[:, None] * bc.gamma * bc.p1 * e_load[None]).ravel()
    return (rows, cols, vals), (edges.ravel(), load_vals)


def _assemble_blocks(mesh, coeffs, bc, source=None, elevation=False, rho_w_g=None):
    """Shared element loop for all five blocks and both load vectors."""
    nv = mesh.n_vertices
    nt = mesh.n_cells
    tri = mesh.triangles
    area = mesh.areas
    grads = mesh.grads
    w = area / 3.0

    # pressure mass and stiffness
    Me = np.einsum("eq,qi,qj->eij", coeffs["c"], TRI_PHI, TRI_PHI) * w[:, None, None]
    kbar = coeffs["kappa"].mean(axis=1) * area
    Ae = np.einsum("e,eik,ejk->eij", kbar, grads, grads)

    rows_pp = np.repeat(tri, 3, axis=1).ravel()
    cols_pp = np.tile(tri, (1, 3)).ravel()
    M = coo_to_csr(nv, nv, rows_pp, cols_pp, Me.ravel())
    # fold the Robin surface term into the stiffness triplets so the canonical
    # finalize sees a single triplet set (assembly stays order-independent)
    (r_rows, r_cols, r_vals), (load_rows, load_vals) = _edge_terms(mesh, bc)
    A = coo_to_csr(
        nv,
        nv,
        np.concatenate([rows_pp, r_rows]),
        np.concatenate([cols_pp, r_cols]),
        np.concatenate([Ae.ravel(), r_vals]),
    )

    # elasticity: strain rows for the 6 local displacement dofs
    exx = np.zeros((nt, 6))
    eyy = np.zeros((nt, 6))
    exy = np.zeros((nt, 6))
    div = np.zeros((nt, 6))
    for l in range(6):
        i, c = LOC_VERT[l], LOC_COMP[l]
        if c == 0:
            exx[:, l] = grads[:, i, 0]
            exy[:, l] = 0.5 * grads[:, i, 1]
        else:
            eyy[:, l] = grads[:, i, 1]
            exy[:, l] = 0.5 * grads[:, i, 0]
        div[:, l] = grads[:, i, c]
    mu_e = coeffs["mu"].mean(axis=1) * area
    lam_e = coeffs["lam"].mean(axis=1) * area
    Ke = 2.0 * mu_e[:, None, None] * (
        np.einsum("el,em->elm", exx, exx)
        + np.einsum("el,em->elm", eyy, eyy)
        + 2.0 * np.einsum("el,em->elm", exy, exy)
    ) + lam_e[:, None, None] * np.einsum("el,em->elm", div, div)
    udof = (2 * tri[:, LOC_VERT] + LOC_COMP[None, :]).astype(np.int64)  # (nt, 6)
    rows_uu = np.repeat(udof, 6, axis=1).ravel()
    cols_uu = np.tile(udof, (1, 6)).ravel()
    K = coo_to_csr(2 * nv, 2 * nv, rows_uu, cols_uu, Ke.ravel())

    # D: int S phi_i div(Phi_l); G: int grad(S phi_i) . Phi_l
    Sphi = np.einsum("eq,qi->ei", coeffs["S"], TRI_PHI) * w[:, None]  # int S phi_i
    De = np.einsum("ei,el->eil", Sphi, div)
    rows_pu = np.repeat(tri, 6, axis=1).ravel()
    cols_pu = np.tile(udof, (1, 3)).ravel()
    D = coo_to_csr(nv, 2 * nv, rows_pu, cols_pu, De.ravel())

    # G term 1: (d_c phi_i) int S phi_j ; term 2: (d_c p) int S' phi_i phi_j
    G1 = np.einsum("eil,el->eli", grads[:, :, LOC_COMP], Sphi[:, LOC_VERT])
    SpPhiPhi = np.einsum("eq,qi,qj->eij", coeffs["dSdp"], TRI_PHI, TRI_PHI) * w[:, None, None]
    gp = coeffs["grad_p"][:, LOC_COMP]  # (nt, 6)
    G2 = gp[:, :, None] * SpPhiPhi[:, :, LOC_VERT].transpose(0, 2, 1)
    Ge = G1 + G2
    rows_up = np.repeat(udof, 3, axis=1).ravel()
    cols_up = np.tile(tri, (1, 6)).ravel()
    G = coo_to_csr(2 * nv, nv, rows_up, cols_up, Ge.ravel())

    # loads, accumulated through the same canonical summation as the matrices
    fp_rows = [load_rows]
    fp_vals = [load_vals]
    if source is not None:
        xq = mesh.quad_points()
        f_q = source(xq[..., 0], xq[..., 1]) if callable(source) else np.full((nt, 3), float(source))
        Fe = np.einsum("eq,qi->ei", f_q, TRI_PHI) * w[:, None]
        fp_rows.append(tri.ravel())
        fp_vals.append(Fe.ravel())
    if elevation:
        # gravity potential flux term: weak form -int kappa rho_w g dphi/dy
        ke = coeffs["kappa"].mean(axis=1) * area
        Fe = -rho_w_g * ke[:, None] * grads[:, :, 1]
        fp_rows.append(tri.ravel())
        fp_vals.append(Fe.ravel())
    F_p = _sum_load(nv, fp_rows, fp_vals)

    rb = np.einsum("eq,qi->ei", coeffs["rho_b"], TRI_PHI) * w[:, None]  # int rho_b phi_i
    Fu_e = rb[:, LOC_VERT] * np.asarray(coeffs["g_vec"])[LOC_COMP][None, :]
    F_u = _sum_load(2 * nv, udof.ravel(), Fu_e.ravel())

    return M, A, K, D, G, F_p, F_u


def _finish(mesh, coeffs, fluid, bc, state, source, elevation):
    coeffs = dict(coeffs)
    coeffs["g_vec"] = fluid.g_vec
    M, A, K, D, G, F_p, F_u = _assemble_blocks(
        mesh,
        coeffs,
        bc,
        source=source,
        elevation=elevation,
        rho_w_g=fluid.rho_w * fluid.g_scalar,
    )
    return AssembledOperators(M=M, A=A, K=K, D=D, G=G, F_p=F_p, F_u=F_u, state=state)


def assemble_at_state(mesh, vg, elast, fluid, bc, p_nodal, source=None, elevation=False):
    """All blocks with coefficients evaluated at the nodal pressure field."""
    coeffs = _coefficients_at_state(mesh, vg, elast, fluid, p_nodal)
    return _finish(mesh, coeffs, fluid, bc, "state", source, elevation)


def assemble_linear(mesh, fluid, bounds, bc, source=None, elevation=False):
    """Fixed blocks from per-cell coefficient bounds (the splitting's linear part)."""
    coeffs = _coefficients_linear(mesh, fluid, bounds)
    return _finish(mesh, coeffs, fluid, bc, "linear", source, elevation)


def assemble_flow(mesh, vg, elast, fluid, bc, p_nodal=None, bounds=None, source=None, elevation=False):
    """(M, A, F_p) at a nodal state or from bounds (exactly one required)."""
    ops = _dispatch(mesh, vg, elast, fluid, bc, p_nodal, bounds, source, elevation)
    return ops.M, ops.A, ops.F_p


def assemble_mechanics(mesh, vg, elast, fluid, bc, p_nodal=None, bounds=None):
    """(K, D, G, F_u) at a nodal state or from bounds (exactly one required)."""
    ops = _dispatch(mesh, vg, elast, fluid, bc, p_nodal, bounds, None, False)
    return ops.K, ops.D, ops.G, ops.F_u


def _dispatch(mesh, vg, elast, fluid, bc, p_nodal, bounds, source, elevation):
    if (p_nodal is None) == (bounds is None):
        raise ValueError("pass exactly one of p_nodal or bounds")
    if p_nodal is not None:
        return assemble_at_state(mesh, vg, elast, fluid, bc, p_nodal, source, elevation)
    return assemble_linear(mesh, fluid, bounds, bc, source, elevation)


def apply_displacement_bc(ops, dofmap):
    """Symmetric elimination of constrained displacement DOFs.

    K rows/columns are zeroed with a unit diagonal, the matching D columns,
    G rows and F_u entries are zeroed. Returns a new operator set.
    """
    free = (~dofmap.u_constrained).astype(float)
    Z = scipy.sparse.diags(free)
    fixed = scipy.sparse.diags(dofmap.u_constrained.astype(float))
    K = SparseMatrix.from_scipy(Z @ ops.K.to_scipy() @ Z + fixed)
    D = SparseMatrix.from_scipy(ops.D.to_scipy() @ Z)
    G = SparseMatrix.from_scipy(Z @ ops.G.to_scipy())
    F_u = ops.F_u * free
    return replace(ops, K=K, D=D, G=G, F_u=F_u, bc_applied=True)


def save_cell_field(path, values):
    """Write a per-cell field; .csv/.txt as text, anything else float64 binary."""
    values = np.asarray(values, dtype=np.float64)
    path = str(path)
    if path.endswith((".csv", ".txt")):
        np.savetxt(path, values)
    else:
        values.tofile(path)


def load_cell_field(path, n_cells):
    """Read a per-cell field and validate its length (2 N^2 for a mesh)."""
    path = str(path)
    if path.endswith((".csv", ".txt")):
        values = np.loadtxt(path, dtype=np.float64).ravel()
    else:
        values = np.fromfile(path, dtype=np.float64)
    if len(values) != n_cells:
        raise ValueError("field has %d values, expected %d" % (len(values), n_cells))
    return values


def save_solution_csv(path, mesh, p, u):
    """Nodal solution table with columns x, y, p, u_x, u_y."""
    nv = mesh.n_vertices
    data = np.column_stack([mesh.vertices, np.asarray(p), np.asarray(u).reshape(nv, 2)])
    np.savetxt(path, data, delimiter=",", header="x,y,p,u_x,u_y", comments="")


def load_solution_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data[:, 2], data[:, 3:5].ravel()
