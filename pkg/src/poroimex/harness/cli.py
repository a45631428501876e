"""Command line entry points.

Verbs:
  simulate            run one transient and write the final nodal solution
  time-study          scheme-vs-step-count error table and Picard counts
  solver-study        two-grid iteration table over smoother variants
  gen-fields          write the seeded heterogeneity fields
  validate-splitting  dominance check of the fixed splitting on a trajectory

Every verb resolves the configuration (defaults < --config file < --seed
flag), creates the run directory, and echoes the resolved configuration
there as resolved_config.json. The exit code is 0 when the requested runs
completed; solver non-convergence and dominance violations are recorded
results, not failures.
"""

import argparse
import json
import os
import sys

import numpy as np

from ..mesh_fem import save_cell_field, save_solution_csv
from ..time_integration import (
    SCHEMES,
    TimeGrid,
    run_transient,
    verify_splitting_dominance,
)
from .config import build_experiment, load_config
from .fields import generate_fields
from .studies import run_solver_study, run_time_scheme_study

__all__ = ["main"]


def _resolve(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    config = load_config(args.config, overrides or None)
    out_dir = args.out or os.path.join(config.output_dir,
                                       args.verb.replace("-", "_"))
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as f:
        json.dump(config.to_json_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return config, out_dir


def _cmd_simulate(args):
    config, out_dir = _resolve(args)
    split, p0, _, _ = build_experiment(config)
    n_steps = args.n_steps or config.time["N_t"][0]
    grid = TimeGrid(config.time["T_max"], n_steps)
    result = run_transient(split, grid, args.scheme, p0, picard=config.picard())
    save_solution_csv(os.path.join(out_dir, "solution.csv"),
                      split.mesh, result.p, result.u)
    steps = [
        {"step": i, "scheme": rep.scheme, "linear_solves": rep.linear_solves,
         "converged": bool(rep.converged),
         "increment_p": float(rep.increment_p),
         "increment_u": float(rep.increment_u)}
        for i, rep in enumerate(result.reports)
    ]
    with open(os.path.join(out_dir, "steps.json"), "w") as f:
        json.dump({"scheme": args.scheme, "n_steps": n_steps,
                   "total_linear_solves": result.total_linear_solves,
                   "steps": steps}, f, indent=2)
        f.write("\n")
    print("simulate: scheme=%s N=%d steps=%d solves=%d -> %s"
          % (args.scheme, split.mesh.N, n_steps,
             result.total_linear_solves, out_dir))
    return 0


def _cmd_time_study(args):
    config, out_dir = _resolve(args)
    study = run_time_scheme_study(config, out_dir=out_dir)
    print("time-study: %d rows in %.1fs -> %s"
          % (len(study.rows), study.elapsed_s, out_dir))
    return 0


def _cmd_solver_study(args):
    config, out_dir = _resolve(args)
    if args.include_128:
        grids = list(config.solver["grids"])
        if 128 not in grids:
            grids.append(128)
        config = load_config(args.config, _merge_seed(args, {"solver": {"grids": grids}}))
    study = run_solver_study(config, out_dir=out_dir)
    n_failed = sum(1 for r in study.rows if isinstance(r.iters_mean, str))
    print("solver-study: %d rows (%d non-convergent) in %.1fs -> %s"
          % (len(study.rows), n_failed, study.elapsed_s, out_dir))
    return 0


def _merge_seed(args, overrides):
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return overrides


def _cmd_gen_fields(args):
    config, out_dir = _resolve(args)
    split, _, k_s, E_d = build_experiment(config)
    save_cell_field(os.path.join(out_dir, "k_s.csv"), k_s)
    save_cell_field(os.path.join(out_dir, "E_d.csv"), E_d)
    meta = {
        "seed": config.seed,
        "construction": config.fields["construction"],
        "contrast": config.fields["contrast"],
        "n_cells": int(len(k_s)),
        "k_s_min": float(k_s.min()), "k_s_max": float(k_s.max()),
        "E_d_min": float(E_d.min()), "E_d_max": float(E_d.max()),
    }
    with open(os.path.join(out_dir, "fields_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print("gen-fields: %d cells, k_s in [%.3e, %.3e] -> %s"
          % (meta["n_cells"], meta["k_s_min"], meta["k_s_max"], out_dir))
    return 0


def _cmd_validate_splitting(args):
    config, out_dir = _resolve(args)
    split, p0, _, _ = build_experiment(config)
    grid = TimeGrid(config.time["T_max"], args.n_states)
    result = run_transient(split, grid, "picard", p0, picard=config.picard(),
                           store_history=True)
    states = [np.asarray(p) for p in result.p_history[1:]]
    report = verify_splitting_dominance(split, states, args.rho)
    payload = {
        "rho": report.rho,
        "passed": bool(report.passed),
        "margins": {k: float(v) for k, v in report.margins.items()},
        "coupling_ratios": {k: float(v) for k, v in report.coupling_ratios.items()},
        "n_states": len(states),
    }
    with open(os.path.join(out_dir, "dominance.json"), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    for name in sorted(report.margins):
        print("validate-splitting: block %s min margin %.3e"
              % (name, report.margins[name]))
    print("validate-splitting: %s (rho=%g, %d states) -> %s"
          % ("PASS" if report.passed else "FAIL", args.rho, len(states), out_dir))
    return 0


def _add_common(parser):
    parser.add_argument("--config", default=None, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None,
                        help="run directory (default: <output_dir>/<verb>)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="poroimex",
        description="Unsaturated poroelastic flow: schemes and solver studies.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("simulate", help="run one transient")
    _add_common(p)
    p.add_argument("--scheme", choices=SCHEMES, default="imex")
    p.add_argument("--n-steps", type=int, default=None,
                   help="time steps (default: first entry of time.N_t)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("time-study", help="scheme error vs step count")
    _add_common(p)
    p.set_defaults(func=_cmd_time_study)

    p = sub.add_parser("solver-study", help="two-grid iteration table")
    _add_common(p)
    p.add_argument("--include-128", action="store_true",
                   help="also run the 128x128 grid")
    p.set_defaults(func=_cmd_solver_study)

    p = sub.add_parser("gen-fields", help="write heterogeneity fields")
    _add_common(p)
    p.set_defaults(func=_cmd_gen_fields)

    p = sub.add_parser("validate-splitting", help="dominance check")
    _add_common(p)
    p.add_argument("--rho", type=float, default=0.05)
    p.add_argument("--n-states", type=int, default=20)
    p.set_defaults(func=_cmd_validate_splitting)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print("poroimex %s failed: %s" % (args.verb, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
