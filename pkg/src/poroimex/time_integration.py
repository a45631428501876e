"""Time stepping for the coupled unsaturated flow / elasticity system.

Three schemes advance the block system

    [[M + tau A, alpha D], [alpha G, K]] [p; u] = [b_p; b_u]

per step: fully implicit with Picard iteration on the coefficient state,
semi-implicit with coefficients lagged one step, and an implicit-explicit
(ImEx) variant whose matrix is built once per time-step size from per-cell
coefficient bounds and reused for every step. The ImEx right-hand side
moves the state-dependent operator remainders to the explicit side: the
flow row applies them to the last increments, and the mechanics row lags
the whole remainder product, so the quasi-static balance stays consistent
as the operators drift. The first ImEx step bootstraps semi-implicitly.

SplitOperators owns the fixed operator blocks, a per-tau factorization
cache, and instrumentation counters used by the solver studies.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from . import mesh_fem as mf

__all__ = [
    "TimeGrid",
    "PicardSettings",
    "StepReport",
    "TransientResult",
    "DominanceReport",
    "SplitOperators",
    "coupled_matrix",
    "initial_displacement",
    "step_semi_implicit",
    "step_implicit_picard",
    "step_imex",
    "run_transient",
    "dominance_margin",
    "verify_splitting_dominance",
    "relative_l2",
]

SCHEMES = ("picard", "semi_implicit", "imex")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, t_end] into n_steps steps."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if self.t_end <= 0 or self.n_steps < 1:
            raise ValueError("need t_end > 0 and n_steps >= 1")

    @property
    def tau(self):
        return self.t_end / self.n_steps

    @property
    def times(self):
        return np.linspace(0.0, self.t_end, self.n_steps + 1)


@dataclass(frozen=True)
class PicardSettings:
    """Stopping rule for the implicit scheme's coefficient iteration.

    Convergence compares successive iterates of both fields in relative
    Euclidean norm; at least two linear solves are always performed, so the
    reported count includes the confirming solve.
    """

    max_iters: int = 10
    rel_tol: float = 1e-3


@dataclass
class StepReport:
    scheme: str
    linear_solves: int
    converged: bool
    increment_p: float
    increment_u: float


@dataclass
class TransientResult:
    p: np.ndarray
    u: np.ndarray
    reports: list
    times: np.ndarray
    p_history: list = None
    u_history: list = None

    @property
    def total_linear_solves(self):
        return sum(r.linear_solves for r in self.reports)


def relative_l2(x, ref):
    """|| x - ref ||_2 / || ref ||_2 (absolute norm if ref vanishes)."""
    x = np.asarray(x, float)
    ref = np.asarray(ref, float)
    denom = np.linalg.norm(ref)
    err = np.linalg.norm(x - ref)
    return err if denom == 0.0 else err / denom


def coupled_matrix(ops, tau, alpha):
    """Sparse block matrix [[M + tau A, alpha D], [alpha G, K]] (CSR)."""
    Mp = ops.M.to_scipy()
    A = ops.A.to_scipy()
    return scipy.sparse.bmat(
        [
            [Mp + tau * A, alpha * ops.D.to_scipy()],
            [alpha * ops.G.to_scipy(), ops.K.to_scipy()],
        ],
        format="csr",
    )


def _default_factory(matrix):
    """Direct sparse LU; returns a solve callable."""
    lu = scipy.sparse.linalg.splu(matrix.tocsc())
    return lu.solve


class SplitOperators:
    """Fixed operator blocks, state assembly, and per-tau ImEx systems.

    Counters
    --------
    linear_assemblies : fixed-block assemblies (one at construction)
    imex_factorizations : ImEx coupled matrices built and factorized; keyed
        once per time-step size
    state_assemblies : state-dependent block assemblies
    """

    def __init__(self, mesh, vg, elast, fluid, bc, bounds, source=None, elevation=False):
        self.mesh = mesh
        self.vg = vg
        self.elast = elast
        self.fluid = fluid
        self.bc = bc
        self.bounds = bounds
        self.source = source
        self.elevation = elevation
        self.dofmap = mf.build_dofmap(mesh)
        self.counters = {
            "linear_assemblies": 0,
            "imex_factorizations": 0,
            "state_assemblies": 0,
        }
        self.linear = mf.apply_displacement_bc(
            mf.assemble_linear(mesh, fluid, bounds, bc, source=source, elevation=elevation),
            self.dofmap,
        )
        self.counters["linear_assemblies"] += 1
        self._imex_cache = {}

    @property
    def alpha(self):
        return self.fluid.alpha

    @property
    def n_pressure(self):
        return self.dofmap.n_pressure

    def state_operators(self, p_nodal):
        """Assemble all blocks at a nodal pressure, displacement BC applied."""
        ops = mf.assemble_at_state(
            self.mesh, self.vg, self.elast, self.fluid, self.bc, p_nodal,
            source=self.source, elevation=self.elevation,
        )
        self.counters["state_assemblies"] += 1
        return mf.apply_displacement_bc(ops, self.dofmap)

    def imex_system(self, tau, solver_factory=None):
        """Fixed coupled matrix and solver for this step size (cached)."""
        key = float(tau)
        if key not in self._imex_cache:
            matrix = coupled_matrix(self.linear, tau, self.alpha)
            factory = solver_factory if solver_factory is not None else _default_factory
            self._imex_cache[key] = (matrix, factory(matrix))
            self.counters["imex_factorizations"] += 1
        return self._imex_cache[key]


def initial_displacement(split, p0):
    """Consistent u0 from the mechanics row: K u0 = F_u - alpha G p0."""
    ops = split.state_operators(p0)
    rhs = ops.F_u - split.alpha * ops.G.spmv(p0)
    lu = scipy.sparse.linalg.splu(ops.K.to_scipy().tocsc())
    return lu.solve(rhs)


def _state_rhs(split, ops, tau, p_n, u_n):
    b_p = tau * ops.F_p + ops.M.spmv(p_n) + split.alpha * ops.D.spmv(u_n)
    return np.concatenate([b_p, ops.F_u])


def step_semi_implicit(split, tau, p_n, u_n, freeze_pressure=None):
    """One step with coefficients evaluated at the previous state."""
    p_eval = p_n if freeze_pressure is None else freeze_pressure
    ops = split.state_operators(p_eval)
    matrix = coupled_matrix(ops, tau, split.alpha)
    sol = _default_factory(matrix)(_state_rhs(split, ops, tau, p_n, u_n))
    n_p = split.n_pressure
    report = StepReport("semi_implicit", 1, True, np.nan, np.nan)
    return sol[:n_p], sol[n_p:], report


def step_implicit_picard(split, tau, p_n, u_n, picard, freeze_pressure=None,
                         p_guess=None):
    """One fully implicit step; the coefficient state is Picard-iterated.

    Convergence is declared when both relative increments drop below the
    tolerance; the first comparison happens after the second solve, so the
    linear-solve count is at least 2 (it includes the confirming solve).
    `p_guess` seeds the first linearization state (the transient driver
    passes a polynomial extrapolation of the previous steps); the
    iteration falls back to p_n when no guess is supplied.
    """
    p_k, u_k = (p_n if p_guess is None else np.asarray(p_guess, float)), u_n
    n_p = split.n_pressure
    solves = 0
    converged = False
    inc_p = inc_u = np.nan
    while solves < picard.max_iters:
        p_eval = p_k if freeze_pressure is None else freeze_pressure
        ops = split.state_operators(p_eval)
        matrix = coupled_matrix(ops, tau, split.alpha)
        sol = _default_factory(matrix)(_state_rhs(split, ops, tau, p_n, u_n))
        p_new, u_new = sol[:n_p], sol[n_p:]
        solves += 1
        if solves >= 2:
            inc_p = relative_l2(p_new, p_k)
            inc_u = relative_l2(u_new, u_k)
            if inc_p <= picard.rel_tol and inc_u <= picard.rel_tol:
                converged = True
                p_k, u_k = p_new, u_new
                break
        p_k, u_k = p_new, u_new
    report = StepReport("picard", solves, converged, inc_p, inc_u)
    return p_k, u_k, report


def step_imex(split, tau, p_n, u_n, p_prev, u_prev, f_u_prev, nlprod_prev,
              freeze_pressure=None, solver_factory=None):
    """One ImEx step against the fixed (bounds-built) coupled matrix.

    The flow row applies the state-dependent remainders X_nl = X(p_n) - X_lin
    explicitly to the last increments. The mechanics row is the time
    difference of the quasi-static balance, so the explicit part lags the
    whole remainder product alpha G_nl p + K_nl u rather than applying the
    frozen remainder to the increments; both forms coincide when the
    operators are constant, but only the product form keeps the balance
    consistent while the operators drift with the state. Returns the new
    state, the report, and the (mechanics load, remainder product) pair at
    p_n, carried into the next step.
    """
    p_eval = p_n if freeze_pressure is None else freeze_pressure
    ops = split.state_operators(p_eval)
    lin = split.linear
    alpha = split.alpha
    dp = p_n - p_prev
    du = u_n - u_prev

    def nl(name, vec):
        state = getattr(ops, name).to_scipy()
        fixed = getattr(lin, name).to_scipy()
        return state @ vec - fixed @ vec

    b_p = (
        tau * ops.F_p
        + lin.M.spmv(p_n)
        + alpha * lin.D.spmv(u_n)
        - nl("M", dp)
        - alpha * nl("D", du)
        - tau * nl("A", p_n)
    )
    nlprod_n = alpha * nl("G", p_n) + nl("K", u_n)
    b_u = (
        (ops.F_u - f_u_prev)
        + alpha * lin.G.spmv(p_n)
        + lin.K.spmv(u_n)
        - (nlprod_n - nlprod_prev)
    )
    matrix, solve = split.imex_system(tau, solver_factory)
    sol = solve(np.concatenate([b_p, b_u]))
    n_p = split.n_pressure
    report = StepReport("imex", 1, True, np.nan, np.nan)
    return sol[:n_p], sol[n_p:], report, ops.F_u, nlprod_n


def run_transient(split, grid, scheme, p0, u0=None, picard=None,
                  freeze_pressure=None, imex_solver_factory=None,
                  store_history=False):
    """Advance the coupled system over the whole time grid.

    The implicit scheme seeds each step's linearization state with a
    polynomial extrapolation of the back states: quadratic
    3 p_n - 3 p_prev + p_prev2 once three states exist, linear
    2 p_n - p_prev with two, and p_n on the first step. The ImEx scheme
    bootstraps its first step semi-implicitly (it needs two back states);
    that solve does not touch the fixed-system cache. An injected
    `imex_solver_factory` only ever sees the fixed matrix.
    """
    if scheme not in SCHEMES:
        raise ValueError("unknown scheme %r" % (scheme,))
    picard = picard if picard is not None else PicardSettings()
    p_n = np.asarray(p0, dtype=float).copy()
    if p_n.ndim == 0 or p_n.size == 1:
        p_n = np.full(split.n_pressure, float(p0))
    if freeze_pressure is not None:
        freeze_pressure = np.asarray(freeze_pressure, dtype=float)
        if freeze_pressure.ndim == 0 or freeze_pressure.size == 1:
            freeze_pressure = np.full(split.n_pressure, float(freeze_pressure))
    u_n = initial_displacement(split, p_n) if u0 is None else np.asarray(u0, float).copy()
    tau = grid.tau
    reports = []
    p_hist = [p_n.copy()] if store_history else None
    u_hist = [u_n.copy()] if store_history else None
    p_prev = p_prev2 = u_prev = f_u_prev = nlprod_prev = None
    for n in range(grid.n_steps):
        if scheme == "picard":
            if p_prev is None:
                guess = p_n
            elif p_prev2 is None:
                guess = 2.0 * p_n - p_prev
            else:
                guess = 3.0 * p_n - 3.0 * p_prev + p_prev2
            p_new, u_new, rep = step_implicit_picard(
                split, tau, p_n, u_n, picard, freeze_pressure, p_guess=guess
            )
            p_prev2 = p_prev
            p_prev = p_n
        elif scheme == "semi_implicit":
            p_new, u_new, rep = step_semi_implicit(split, tau, p_n, u_n, freeze_pressure)
        else:
            if n == 0:
                # bootstrap: one semi-implicit solve supplies the second
                # back state without touching the fixed-system cache
                p_eval = p_n if freeze_pressure is None else freeze_pressure
                ops = split.state_operators(p_eval)
                matrix = coupled_matrix(ops, tau, split.alpha)
                sol = _default_factory(matrix)(_state_rhs(split, ops, tau, p_n, u_n))
                p_new, u_new = sol[: split.n_pressure], sol[split.n_pressure :]
                f_u_prev = ops.F_u
                lin = split.linear

                def nl0(name, vec):
                    return getattr(ops, name).to_scipy() @ vec - getattr(lin, name).to_scipy() @ vec

                nlprod_prev = split.alpha * nl0("G", p_n) + nl0("K", u_n)
                rep = StepReport("imex_bootstrap", 1, True, np.nan, np.nan)
            else:
                p_new, u_new, rep, f_u_prev, nlprod_prev = step_imex(
                    split, tau, p_n, u_n, p_prev, u_prev, f_u_prev, nlprod_prev,
                    freeze_pressure, imex_solver_factory,
                )
            p_prev, u_prev = p_n, u_n
        p_n, u_n = p_new, u_new
        reports.append(rep)
        if store_history:
            p_hist.append(p_n.copy())
            u_hist.append(u_n.copy())
    return TransientResult(p_n, u_n, reports, grid.times, p_hist, u_hist)


@dataclass
class DominanceReport:
    rho: float
    margins: dict
    coupling_ratios: dict
    passed: bool


def dominance_margin(x_lin, x_state, rho):
    """Smallest eigenvalue of sym((1 - rho) X_lin - (X_state - X_lin)).

    Non-negative margins certify that the fixed operator dominates the
    state-dependent remainder with contraction factor rho.
    """
    lin = x_lin.toarray() if hasattr(x_lin, "toarray") else np.asarray(x_lin, float)
    state = x_state.toarray() if hasattr(x_state, "toarray") else np.asarray(x_state, float)
    work = (1.0 - rho) * lin - (state - lin)
    work = 0.5 * (work + work.T)
    return np.linalg.eigvalsh(work)[0]


def verify_splitting_dominance(split, p_states, rho, tol_scale=1e-10):
    """Check the fixed blocks dominate the remainders over a set of states.

    The symmetric blocks M, A, K must have non-negative dominance margins
    (up to a scale-relative floor) at every supplied pressure state; the
    non-symmetric couplings D, G are reported as remainder/fixed Frobenius
    ratios for information only.
    """
    lin = split.linear
    margins = {"M": np.inf, "A": np.inf, "K": np.inf}
    ratios = {"D": 0.0, "G": 0.0}
    scales = {}
    for name in margins:
        dense = getattr(lin, name).toarray()
        scales[name] = np.abs(dense).max()
    passed = True
    for p in p_states:
        ops = split.state_operators(np.asarray(p, float))
        for name in margins:
            margin = dominance_margin(getattr(lin, name), getattr(ops, name), rho)
            margins[name] = min(margins[name], margin)
            if margin < -tol_scale * scales[name]:
                passed = False
        for name in ratios:
            fixed = getattr(lin, name).to_scipy()
            remainder = getattr(ops, name).to_scipy() - fixed
            denom = scipy.sparse.linalg.norm(fixed)
            ratio = scipy.sparse.linalg.norm(remainder) / denom if denom else np.inf
            ratios[name] = max(ratios[name], ratio)
    return DominanceReport(rho=rho, margins=margins, coupling_ratios=ratios, passed=passed)
