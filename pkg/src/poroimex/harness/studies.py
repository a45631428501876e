"""Experiment drivers: time-scheme study, solver study, result emission.

Both studies are deterministic given (config, seed): rows are produced in
a canonical order and all model-derived columns are bit-stable. The wall
time columns (solve_s, total_s) are environment measurements and are the
one exception to byte-identical output; golden-file comparisons mask them.

The solver study gives every table cell a fresh operator set so the
instrumentation counters prove the offline-reuse contract per transient:
one fixed-matrix assembly and factorization handoff, one coarse
factorization, one smoother setup. Each step solves the defect system
(see StepwiseImexSolver) so the iteration counts measure work at the
scale of the per-step update. A non-convergent solve aborts that cell's
transient immediately and records ">max_iters" (the remaining steps of a
diverging run carry no information); the study then continues with the
next cell.
"""

import csv
import io
import json
import os
import time
from dataclasses import dataclass

import numpy as np

from ..coarse_space import (
    assemble_prolongation,
    build_coarse_grid,
    build_spectral_basis,
)
from ..smoothers import build_patches, color_patches, smoother_from_name
from ..time_integration import (
    PicardSettings,
    TimeGrid,
    initial_displacement,
    relative_l2,
    run_transient,
)
from ..two_grid import StepwiseImexSolver, TwoGridConfig
from .config import build_experiment

__all__ = [
    "CSV_HEADER",
    "ResultRow",
    "TimeStudyResult",
    "SolverStudyResult",
    "emit",
    "run_time_scheme_study",
    "run_solver_study",
]

CSV_HEADER = "experiment,grid,scheme,smoother,colors,sweeps,M,iters_mean,solve_s,total_s,e_p,e_u"
REFERENCE_REL_TOL = 1e-6

_COLUMNS = CSV_HEADER.split(",")
_TIME_COLUMNS = ("solve_s", "total_s")


@dataclass(frozen=True)
class ResultRow:
    """One emitted table row; None renders as an empty CSV cell."""

    experiment: str
    grid: int
    scheme: str
    smoother: str = None
    colors: int = None
    sweeps: int = None
    M: int = None
    iters_mean: object = None
    solve_s: float = None
    total_s: float = None
    e_p: float = None
    e_u: float = None

    def values(self):
        return [getattr(self, c) for c in _COLUMNS]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _sort_key(row):
    return tuple(_fmt(v) for v in
                 (row.experiment, row.grid, row.scheme, row.smoother,
                  row.colors, row.sweeps, row.M))


def rows_to_csv(rows):
    """Canonically sorted CSV text with the fixed header."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(_COLUMNS)
    for row in sorted(rows, key=_sort_key):
        writer.writerow([_fmt(v) for v in row.values()])
    return out.getvalue()


def emit(rows, out_dir, basename="results"):
    """Write the CSV table and its JSON mirror; returns the two paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, basename + ".csv")
    with open(csv_path, "w") as f:
        f.write(rows_to_csv(rows))
    json_path = os.path.join(out_dir, basename + ".json")
    payload = [dict(zip(_COLUMNS, row.values())) for row in sorted(rows, key=_sort_key)]
    with open(json_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, json_path


def rows_from_json(path):
    """Inverse of the JSON mirror written by emit."""
    with open(path) as f:
        payload = json.load(f)
    return [ResultRow(**entry) for entry in payload]


def _reference(config, split, p0, n_t):
    """Implicit reference at a multiple of the finest step count."""
    n_ref = config.time["reference_multiple"] * n_t
    picard = PicardSettings(
        max_iters=config.time["picard_max_iters"], rel_tol=REFERENCE_REL_TOL)
    return run_transient(split, TimeGrid(config.time["T_max"], n_ref), "picard",
                         p0, picard=picard)


@dataclass
class TimeStudyResult:
    rows: list
    picard_counts: dict
    errors: dict
    reference_n_t: int
    elapsed_s: float


def run_time_scheme_study(config, out_dir=None):
    """Run every configured scheme over the N_t list against one field.

    Errors are measured against the implicit reference at
    reference_multiple x max(N_t); the experiment id of each row encodes
    the step count ("time_nt0020"), and `errors` maps (scheme, n_t) to
    (e_p, e_u). The per-step implicit iteration counts are collected per
    N_t (the stabilization trace) and written alongside the result table
    when an output directory is given.
    """
    t0 = time.perf_counter()
    split, p0, _, _ = build_experiment(config)
    N = split.mesh.N
    T_max = config.time["T_max"]
    ref = _reference(config, split, p0, max(config.time["N_t"]))
    rows = []
    counts = {}
    errors = {}
    for n_t in config.time["N_t"]:
        for scheme in config.schemes:
            t1 = time.perf_counter()
            result = run_transient(split, TimeGrid(T_max, n_t), scheme, p0,
                                   picard=config.picard())
            solve_s = time.perf_counter() - t1
            if scheme == "picard":
                counts[n_t] = [rep.linear_solves for rep in result.reports]
            e_p = float(relative_l2(result.p, ref.p))
            e_u = float(relative_l2(result.u, ref.u))
            errors[(scheme, n_t)] = (e_p, e_u)
            rows.append(ResultRow(
                experiment="time_nt%04d" % n_t, grid=N, scheme=scheme,
                iters_mean=float(np.mean([rep.linear_solves for rep in result.reports])),
                solve_s=solve_s, total_s=solve_s, e_p=e_p, e_u=e_u,
            ))
    study = TimeStudyResult(
        rows=rows, picard_counts=counts, errors=errors,
        reference_n_t=config.time["reference_multiple"] * max(config.time["N_t"]),
        elapsed_s=time.perf_counter() - t0,
    )
    if out_dir is not None:
        emit(rows, out_dir)
        _write_picard_counts(counts, out_dir)
    return study


def _write_picard_counts(counts, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "picard_counts.csv")
    with open(path, "w") as f:
        f.write("N_t,step,linear_solves\n")
        for n_t in sorted(counts):
            for step, solves in enumerate(counts[n_t]):
                f.write("%d,%d,%d\n" % (n_t, step, solves))
    return path


class _CellDiverged(Exception):
    """Internal: aborts a transient whose solver failed to converge."""


@dataclass
class SolverStudyResult:
    rows: list
    instrumentation: dict
    elapsed_s: float


def _cell_key(N, name, colors, sweeps, M):
    return "%d/%s/c%s/s%d/M%d" % (N, name, colors, sweeps, M)


def run_solver_study(config, out_dir=None):
    """Iteration-count table over (grid, smoother, colors, sweeps, M).

    Each cell runs the fixed-operator transient with the two-grid solver
    injected; the mean iteration count is taken over the recorded solves
    (the first step bootstraps with a direct solve and is excluded by
    construction). Pointwise smoothers ignore colors and are emitted once,
    under the first configured color count.
    """
    t0 = time.perf_counter()
    sv = config.solver
    T_max = config.time["T_max"]
    n_t = sv["N_t"]
    M_max = max(sv["M"])
    rows = []
    instrumentation = {}
    for N in sv["grids"]:
        shared, p0, k_s, E_d = build_experiment(config, N=N)
        mesh = shared.mesh
        ref = _reference(config, shared, p0, n_t)
        coarse = build_coarse_grid(mesh, config.mesh["N_H"])
        basis = build_spectral_basis(mesh, shared.bounds, config.mesh["N_H"],
                                     M_max_p=M_max, M_max_u=M_max,
                                     dofmap=shared.dofmap)
        patch_cache = {}
        for name in sv["smoothers"]:
            for ci, colors in enumerate(sv["colors"]):
                pointwise = name in ("jacobi", "gs")
                if pointwise and ci > 0:
                    continue
                for sweeps in sv["sweeps"]:
                    for M in sv["M"]:
                        row, info = _run_solver_cell(
                            config, N, name, colors, sweeps, M,
                            coarse, basis, patch_cache, shared.dofmap,
                            (k_s, E_d), p0, ref, T_max, n_t,
                        )
                        rows.append(row)
                        instrumentation[_cell_key(N, name, row.colors, sweeps, M)] = info
    study = SolverStudyResult(
        rows=rows, instrumentation=instrumentation,
        elapsed_s=time.perf_counter() - t0,
    )
    if out_dir is not None:
        emit(rows, out_dir)
        with open(os.path.join(out_dir, "instrumentation.json"), "w") as f:
            json.dump(instrumentation, f, indent=2, sort_keys=True)
            f.write("\n")
    return study


def _run_solver_cell(config, N, name, colors, sweeps, M, coarse, basis,
                     patch_cache, dofmap, fields, p0, ref, T_max, n_t):
    sv = config.solver
    kind = smoother_from_name(name, sweeps=sweeps, colors=colors,
                              damping=sv["jacobi_damping"])
    pointwise = kind.variant != "vanka"
    patches = coloring = None
    if not pointwise:
        cache_key = (kind.patch, kind.o, kind.colors)
        if cache_key not in patch_cache:
            built = build_patches(coarse, kind.patch, kind.o, dofmap=dofmap)
            patch_cache[cache_key] = (built, color_patches(coarse, built, kind.colors))
        patches, coloring = patch_cache[cache_key]
    prol = assemble_prolongation(basis, M, M)
    split, _, _, _ = build_experiment(config, N=N, fields_override=fields)
    u0 = initial_displacement(split, p0)
    factory = StepwiseImexSolver(
        prol,
        TwoGridConfig(smoother=kind, rel_tol=sv["rel_tol"],
                      max_iters=sv["max_iters"]),
        patches=patches, coloring=coloring,
        x0=np.concatenate([p0, u0]),
    )

    def abort_on_divergence(report):
        if not report.converged:
            raise _CellDiverged()

    factory.on_report = abort_on_divergence
    t1 = time.perf_counter()
    diverged = False
    result = None
    try:
        result = run_transient(split, TimeGrid(T_max, n_t), "imex", p0, u0=u0,
                               imex_solver_factory=factory)
    except _CellDiverged:
        diverged = True
    total_s = time.perf_counter() - t1
    reports = factory.reports
    info = {
        "factory_calls": factory.factory_calls,
        "two_grid_setups": factory.solver.setup_count if factory.solver is not None else 0,
        "imex_factorizations": split.counters["imex_factorizations"],
        "linear_assemblies": split.counters["linear_assemblies"],
        "recorded_solves": len(reports),
        "converged": not diverged,
    }
    row = ResultRow(
        experiment="solver", grid=N, scheme="imex", smoother=name,
        colors=None if pointwise else colors, sweeps=sweeps, M=M,
        iters_mean=(">%d" % sv["max_iters"]) if diverged
        else float(np.mean([r.iterations for r in reports])),
        solve_s=float(sum(r.solve_seconds for r in reports)),
        total_s=total_s,
        e_p=None if diverged else float(relative_l2(result.p, ref.p)),
        e_u=None if diverged else float(relative_l2(result.u, ref.u)),
    )
    return row, info
