"""Pointwise and multiscale Vanka smoothers for the coupled fixed system.

The Vanka family solves small pre-factorized local problems on overlapping
patches of the coupled pressure/displacement system and recombines the
updates additively with reciprocal-multiplicity weights. Patches come in
two shapes: the coarse-vertex neighborhoods omega_l (variant "V") and
coarse cells optionally extended by o fine-vertex layers ("VK" for o=0,
"VK1"/"VK2" for o=1/2). A multicolor ordering applies all patches of one
color against a single shared residual (additive within a color) and
refreshes the residual between colors (multiplicative across colors), so
one color reduces to the plain additive sweep.

Setup depends only on the fixed operator: all local matrices are extracted
and factorized once and reused across every time step and right-hand side.
Pointwise damped Jacobi and forward Gauss-Seidel are provided for the
comparison harness. Dirichlet-constrained displacement DOFs are excluded
from every patch; their identity rows keep them fixed.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .coarse_space import _make_patch, build_omega_patch
from .linalg import DenseFactorization
from .mesh_fem import build_dofmap

__all__ = [
    "SmootherKind",
    "ColorAssignment",
    "VankaSetup",
    "smoother_from_name",
    "build_cell_patch",
    "build_patches",
    "color_patches",
    "setup_vanka",
    "apply_vanka",
    "apply_pointwise",
    "JACOBI_DAMPING",
    "DENSE_PATCH_LIMIT",
    "SMOOTHER_NAMES",
]

JACOBI_DAMPING = 2.0 / 3.0
DENSE_PATCH_LIMIT = 1200
POINTWISE_VARIANTS = ("jacobi", "gauss_seidel")
PATCH_KINDS = ("omega", "cell")
SMOOTHER_NAMES = ("jacobi", "gs", "V", "VK", "VK1", "VK2")


@dataclass(frozen=True)
class SmootherKind:
    """Smoother selector: pointwise variant or a Vanka patch family.

    For variant "vanka", `patch` picks the shape ("omega" or "cell"), `o`
    the fine-layer overlap of cell patches, and `colors` the number of
    fractional steps per sweep. `damping` applies to Jacobi only; the
    default 2/3 keeps the damped variant usable while the undamped one
    (damping=1) diverges on the coupled system.
    """

    variant: str
    sweeps: int = 1
    patch: str = "cell"
    o: int = 0
    colors: int = 1
    damping: float = JACOBI_DAMPING

    def __post_init__(self):
        if self.variant not in POINTWISE_VARIANTS + ("vanka",):
            raise ValueError("unknown smoother variant %r" % (self.variant,))
        if self.sweeps < 1:
            raise ValueError("sweeps must be >= 1")
        if self.variant == "vanka":
            if self.patch not in PATCH_KINDS:
                raise ValueError("unknown patch kind %r" % (self.patch,))
            if self.colors not in (1, 2, 4):
                raise ValueError("colors must be 1, 2 or 4")
            if self.o < 0:
                raise ValueError("overlap must be >= 0")


def smoother_from_name(name, sweeps=1, colors=1, damping=JACOBI_DAMPING):
    """Map the comparison-harness vocabulary to a SmootherKind.

    Names: "jacobi", "gs", "V" (vertex patches), "VK" (coarse cells),
    "VK1"/"VK2" (cells extended by 1/2 fine layers).
    """
    if name == "jacobi":
        return SmootherKind("jacobi", sweeps=sweeps, damping=damping)
    if name == "gs":
        return SmootherKind("gauss_seidel", sweeps=sweeps)
    if name == "V":
        return SmootherKind("vanka", sweeps=sweeps, patch="omega", o=0, colors=colors)
    if name in ("VK", "VK1", "VK2"):
        o = {"VK": 0, "VK1": 1, "VK2": 2}[name]
        return SmootherKind("vanka", sweeps=sweeps, patch="cell", o=o, colors=colors)
    raise ValueError("unknown smoother name %r (choose from %s)" % (name, list(SMOOTHER_NAMES)))


def build_cell_patch(coarse, dofmap, c, o=0):
    """Coarse cell c extended by o fine-vertex layers, clipped to the domain."""
    N_H, r, N = coarse.N_H, coarse.ratio, coarse.mesh.N
    I, J = c % N_H, c // N_H
    vertices = coarse.fine_vertex_box(I * r - o, (I + 1) * r + o,
                                      J * r - o, (J + 1) * r + o)
    i = np.arange(max(I * r - o, 0), min((I + 1) * r + o, N))
    j = np.arange(max(J * r - o, 0), min((J + 1) * r + o, N))
    squares = (j[:, None] * N + i[None, :]).ravel()
    cells = np.concatenate([2 * squares, 2 * squares + 1])
    return _make_patch("cell", o, c, vertices, cells, dofmap)


def build_patches(coarse, kind, o=0, dofmap=None):
    """All patches of one family: "omega" -> one per coarse vertex (the
    omega_l neighborhoods, o ignored), "cell" -> one per coarse cell
    extended by o fine layers."""
    if kind not in PATCH_KINDS:
        raise ValueError("unknown patch kind %r" % (kind,))
    dofmap = build_dofmap(coarse.mesh) if dofmap is None else dofmap
    if kind == "omega":
        return [build_omega_patch(coarse, dofmap, l) for l in range(coarse.n_vertices)]
    return [build_cell_patch(coarse, dofmap, c, o) for c in range(coarse.n_cells)]


@dataclass(frozen=True)
class ColorAssignment:
    """Patch coloring: `of_patch[i]` is the color of patch i; `classes[k]`
    lists the patches of color k in build order."""

    colors: int
    of_patch: np.ndarray
    classes: tuple


def color_patches(coarse, patches, colors):
    """Structured coloring of a patch family.

    Four colors split by the parity pair (I mod 2, J mod 2) of the patch's
    coarse index, two by the checkerboard (I+J) mod 2, one keeps a single
    class. Cell patches index by coarse cell, omega patches by coarse
    vertex.
    """
    if colors not in (1, 2, 4):
        raise ValueError("colors must be 1, 2 or 4")
    of_patch = np.zeros(len(patches), dtype=np.int64)
    if colors > 1:
        for idx, patch in enumerate(patches):
            stride = coarse.N_H if patch.kind == "cell" else coarse.N_H + 1
            I, J = patch.index % stride, patch.index // stride
            of_patch[idx] = (I + J) % 2 if colors == 2 else (I % 2) + 2 * (J % 2)
    classes = tuple(np.flatnonzero(of_patch == k) for k in range(colors))
    return ColorAssignment(colors, of_patch, classes)


@dataclass(frozen=True)
class VankaSetup:
    """Pre-factorized Vanka application state for one fixed operator.

    Holds the residual matrix, the per-patch DOF sets, reciprocal
    multiplicity weights (sum of R^T W R is the identity on covered DOFs),
    and one factorized local matrix per patch. Constructed once per fixed
    operator; `apply_vanka` never reassembles or refactors anything.
    """

    matrix: scipy.sparse.csr_matrix
    patches: tuple
    coloring: ColorAssignment
    dof_sets: tuple
    weights: tuple
    solves: tuple

    @property
    def n(self):
        return self.matrix.shape[0]


def _as_csr(matrix):
    if hasattr(matrix, "to_scipy"):
        matrix = matrix.to_scipy()
    return scipy.sparse.csr_matrix(matrix)


def _factor_patch(sub, index):
    if sub.shape[0] <= DENSE_PATCH_LIMIT:
        try:
            return DenseFactorization(sub.toarray()).solve
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError("singular local matrix on patch %d" % index)
    try:
        lu = scipy.sparse.linalg.splu(sub.tocsc())
    except RuntimeError:
        raise np.linalg.LinAlgError("singular local matrix on patch %d" % index)
    return lu.solve


def setup_vanka(L_lin, patches, coloring):
    """Extract and factorize every local matrix of the fixed operator.

    Weights are the reciprocal of each DOF's patch multiplicity. Every DOF
    left uncovered must carry an identity row (a Dirichlet-constrained
    DOF); anything else indicates a broken patch cover and raises.
    """
    L = _as_csr(L_lin)
    n = L.shape[0]
    mult = np.zeros(n)
    for patch in patches:
        mult[patch.coupled_dofs] += 1.0
    uncovered = np.flatnonzero(mult == 0.0)
    for i in uncovered:
        row = L.getrow(i)
        if row.nnz != 1 or row.indices[0] != i:
            raise ValueError("DOF %d is not covered by any patch and has no"
                             " identity row" % i)
    dof_sets = []
    weights = []
    solves = []
    for idx, patch in enumerate(patches):
        dofs = patch.coupled_dofs
        sub = L[np.ix_(dofs, dofs)].tocsr()
        dof_sets.append(dofs)
        weights.append(1.0 / mult[dofs])
        solves.append(_factor_patch(sub, idx))
    return VankaSetup(
        matrix=L, patches=tuple(patches), coloring=coloring,
        dof_sets=tuple(dof_sets), weights=tuple(weights), solves=tuple(solves),
    )


def apply_vanka(setup, x, b, sweeps=1):
    """Multicolor additive Vanka sweeps.

    Per sweep and per color, one residual r = b - L x is shared by every
    patch of the color; their weighted local corrections accumulate into a
    single update (additive within the color), and the residual refreshes
    between colors (multiplicative across colors). One color is the plain
    additive method.
    """
    x = np.array(x, dtype=float, copy=True)
    b = np.asarray(b, dtype=float)
    for _ in range(sweeps):
        for cls in setup.coloring.classes:
            r = b - setup.matrix @ x
            dx = np.zeros(setup.n)
            for i in cls:
                dofs = setup.dof_sets[i]
                dx[dofs] += setup.weights[i] * setup.solves[i](r[dofs])
            x += dx
    return x


def apply_pointwise(kind, L, x, b, sweeps=1):
    """Damped Jacobi or forward lexicographic Gauss-Seidel sweeps."""
    L = _as_csr(L)
    x = np.array(x, dtype=float, copy=True)
    b = np.asarray(b, dtype=float)
    diag = L.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if len(zero):
        raise ZeroDivisionError("zero diagonal entry at DOF %d" % zero[0])
    if kind.variant == "jacobi":
        for _ in range(sweeps):
            x = x + kind.damping * (b - L @ x) / diag
        return x
    if kind.variant != "gauss_seidel":
        raise ValueError("apply_pointwise handles jacobi/gauss_seidel, got %r"
                         % (kind.variant,))
    lower = scipy.sparse.tril(L, 0).tocsr()
    upper = (L - lower).tocsr()
    for _ in range(sweeps):
        x = scipy.sparse.linalg.spsolve_triangular(lower, b - upper @ x, lower=True)
    return x
