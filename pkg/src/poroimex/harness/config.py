"""Experiment configuration: defaults, JSON loading, validation, builders.

A configuration is a nested JSON object merged over the built-in defaults.
The schema (types in parentheses, defaults shown) is:

    {
      "mesh":    {"N": 32, "L": 10.0, "N_H": 8},
      "time":    {"T_max": 172800.0, "N_t": [10, 20, 40, 80],
                  "reference_multiple": 4,
                  "picard_max_iters": 10, "picard_rel_tol": 1e-3},
      "physics": {"theta_r": 0.03, "theta_s": 0.45, "beta": 0.01,
                  "vg_n": 1.6, "eta": 0.5,
                  "nu": 0.37, "zeta_E": 1.5, "E_w_ratio": 2.0,
                  "rho_w": 1000.0, "rho_s": 2650.0, "g": -9.8,
                  "phi": 0.45, "alpha": 0.9, "C_w": 4.4e-10,
                  "C_s": 1e-11, "mu_w": 1e-3,
                  "gamma": 1e6, "p0": 602700.0, "p1": 202860.0},
      "fields":  {"construction": "white"|"modes", "contrast": 1.0,
                  "k_s0": 6e-10, "E_d0": 3e6, "e_spread": 0.0,
                  "n_modes": 24, "corr_length": 2.5},
      "schemes": ["picard", "semi_implicit", "imex"],
      "solver":  {"grids": [32, 64], "N_t": 5,
                  "smoothers": ["jacobi", "gs", "V", "VK", "VK1", "VK2"],
                  "colors": [4], "sweeps": [3], "M": [1, 8],
                  "rel_tol": 1e-8, "max_iters": 500,
                  "jacobi_damping": 1.0},
      "seed": 1,
      "output_dir": "runs"
    }

Unknown keys, wrong types, and violated invariants raise ValueError with
the offending JSON path. The resolved configuration (defaults merged with
the file and CLI overrides) is echoed into every run directory.

The solver study defaults to undamped Jacobi (damping 1.0) because the
study's purpose is the comparison table in which plain Jacobi fails; the
smoothers module itself defaults to damping 2/3.
"""

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from ..constitutive import (
    ElasticityParams,
    FluidSolidParams,
    VanGenuchtenParams,
    coefficient_bounds,
)
from ..mesh_fem import BoundaryConfig, StructuredTriMesh
from ..smoothers import SMOOTHER_NAMES
from ..time_integration import SCHEMES, PicardSettings, SplitOperators
from .fields import CONSTRUCTIONS, HeterogeneityGenSpec, generate_fields

__all__ = [
    "ExperimentConfig",
    "default_config_dict",
    "load_config",
    "build_experiment",
    "initial_pressure",
]

_DEFAULTS = {
    "mesh": {"N": 32, "L": 10.0, "N_H": 8},
    "time": {
        "T_max": 172800.0,
        "N_t": [10, 20, 40, 80],
        "reference_multiple": 4,
        "picard_max_iters": 10,
        "picard_rel_tol": 1e-3,
    },
    "physics": {
        "theta_r": 0.03, "theta_s": 0.45, "beta": 0.01, "vg_n": 1.6,
        "eta": 0.5, "nu": 0.37, "zeta_E": 1.5, "E_w_ratio": 2.0,
        "rho_w": 1000.0, "rho_s": 2650.0, "g": -9.8, "phi": 0.45,
        "alpha": 0.9, "C_w": 4.4e-10, "C_s": 1e-11, "mu_w": 1e-3,
        "gamma": 1e6, "p0": 602700.0, "p1": 202860.0,
    },
    "fields": {
        "construction": "white", "contrast": 1.0, "k_s0": 6e-10,
        "E_d0": 3e6, "e_spread": 0.0, "n_modes": 24, "corr_length": 2.5,
    },
    "schemes": ["picard", "semi_implicit", "imex"],
    "solver": {
        "grids": [32, 64],
        "N_t": 5,
        "smoothers": ["jacobi", "gs", "V", "VK", "VK1", "VK2"],
        "colors": [4],
        "sweeps": [3],
        "M": [1, 8],
        "rel_tol": 1e-8,
        "max_iters": 500,
        "jacobi_damping": 1.0,
    },
    "seed": 1,
    "output_dir": "runs",
}

_BOOLLESS_NUMBER = (int, float)


def default_config_dict():
    """A deep copy of the built-in defaults."""
    return copy.deepcopy(_DEFAULTS)


def _fail(path, message):
    raise ValueError("%s: %s" % (path, message))


def _check_number(value, path, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, _BOOLLESS_NUMBER):
        _fail(path, "expected a number, got %r" % (value,))
    if positive and not value > 0:
        _fail(path, "must be positive")
    if nonneg and value < 0:
        _fail(path, "must be non-negative")
    return float(value)


def _check_int(value, path, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, "expected an integer, got %r" % (value,))
    if minimum is not None and value < minimum:
        _fail(path, "must be >= %d" % minimum)
    return value


def _check_list(value, path, allowed=None, kind=None, minimum=None):
    if not isinstance(value, list) or not value:
        _fail(path, "expected a non-empty list")
    out = []
    for i, item in enumerate(value):
        sub = "%s[%d]" % (path, i)
        if allowed is not None and item not in allowed:
            _fail(sub, "must be one of %s" % (sorted(allowed),))
        if kind == "int":
            item = _check_int(item, sub, minimum=minimum)
        out.append(item)
    return out


def _merge(base, override, path="config"):
    for key, value in override.items():
        if key not in base:
            _fail("%s.%s" % (path, key), "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                _fail("%s.%s" % (path, key), "expected an object")
            _merge(base[key], value, "%s.%s" % (path, key))
        else:
            base[key] = value
    return base


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see module docstring for schema)."""

    mesh: dict
    time: dict
    physics: dict
    fields: dict
    schemes: tuple
    solver: dict
    seed: int
    output_dir: str
    raw: dict = field(repr=False, default=None)

    def heterogeneity(self):
        f = self.fields
        return HeterogeneityGenSpec(
            seed=self.seed, construction=f["construction"],
            contrast=f["contrast"], k_s0=f["k_s0"], E_d0=f["E_d0"],
            e_spread=f["e_spread"], n_modes=f["n_modes"],
            corr_length=f["corr_length"],
        )

    def picard(self):
        return PicardSettings(
            max_iters=self.time["picard_max_iters"],
            rel_tol=self.time["picard_rel_tol"],
        )

    def to_json_dict(self):
        return copy.deepcopy(self.raw)


def _validate(cfg):
    mesh = cfg["mesh"]
    mesh["N"] = _check_int(mesh["N"], "config.mesh.N", minimum=2)
    mesh["L"] = _check_number(mesh["L"], "config.mesh.L", positive=True)
    mesh["N_H"] = _check_int(mesh["N_H"], "config.mesh.N_H", minimum=1)

    tc = cfg["time"]
    tc["T_max"] = _check_number(tc["T_max"], "config.time.T_max", positive=True)
    tc["N_t"] = _check_list(tc["N_t"], "config.time.N_t", kind="int", minimum=1)
    tc["reference_multiple"] = _check_int(
        tc["reference_multiple"], "config.time.reference_multiple", minimum=1)
    tc["picard_max_iters"] = _check_int(
        tc["picard_max_iters"], "config.time.picard_max_iters", minimum=1)
    tc["picard_rel_tol"] = _check_number(
        tc["picard_rel_tol"], "config.time.picard_rel_tol", positive=True)

    ph = cfg["physics"]
    for key in ph:
        ph[key] = _check_number(ph[key], "config.physics.%s" % key)
    for key in ("theta_s", "beta", "mu_w", "rho_w", "E_w_ratio", "zeta_E"):
        if ph[key] <= 0:
            _fail("config.physics.%s" % key, "must be positive")
    if ph["gamma"] < 0:
        _fail("config.physics.gamma", "must be non-negative")

    fd = cfg["fields"]
    if fd["construction"] not in CONSTRUCTIONS:
        _fail("config.fields.construction", "must be one of %s" % (CONSTRUCTIONS,))
    fd["contrast"] = _check_number(fd["contrast"], "config.fields.contrast", nonneg=True)
    fd["k_s0"] = _check_number(fd["k_s0"], "config.fields.k_s0", positive=True)
    fd["E_d0"] = _check_number(fd["E_d0"], "config.fields.E_d0", positive=True)
    fd["e_spread"] = _check_number(fd["e_spread"], "config.fields.e_spread", nonneg=True)
    fd["n_modes"] = _check_int(fd["n_modes"], "config.fields.n_modes", minimum=0)
    fd["corr_length"] = _check_number(
        fd["corr_length"], "config.fields.corr_length", positive=True)

    cfg["schemes"] = _check_list(cfg["schemes"], "config.schemes", allowed=set(SCHEMES))

    sv = cfg["solver"]
    sv["grids"] = _check_list(sv["grids"], "config.solver.grids", kind="int", minimum=2)
    for N in sv["grids"]:
        if N % cfg["mesh"]["N_H"] != 0:
            _fail("config.solver.grids", "grid %d not divisible by N_H=%d"
                  % (N, cfg["mesh"]["N_H"]))
    sv["N_t"] = _check_int(sv["N_t"], "config.solver.N_t", minimum=1)
    sv["smoothers"] = _check_list(
        sv["smoothers"], "config.solver.smoothers", allowed=set(SMOOTHER_NAMES))
    sv["colors"] = _check_list(sv["colors"], "config.solver.colors", allowed={1, 2, 4})
    sv["sweeps"] = _check_list(sv["sweeps"], "config.solver.sweeps", kind="int", minimum=1)
    sv["M"] = _check_list(sv["M"], "config.solver.M", kind="int", minimum=1)
    sv["rel_tol"] = _check_number(sv["rel_tol"], "config.solver.rel_tol", positive=True)
    sv["max_iters"] = _check_int(sv["max_iters"], "config.solver.max_iters", minimum=1)
    sv["jacobi_damping"] = _check_number(
        sv["jacobi_damping"], "config.solver.jacobi_damping", positive=True)

    cfg["seed"] = _check_int(cfg["seed"], "config.seed", minimum=0)
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        _fail("config.output_dir", "expected a non-empty string")

    if cfg["mesh"]["N"] % cfg["mesh"]["N_H"] != 0:
        _fail("config.mesh", "N=%d not divisible by N_H=%d"
              % (cfg["mesh"]["N"], cfg["mesh"]["N_H"]))
    return cfg


def load_config(path=None, overrides=None):
    """Merge a JSON file and overrides over the defaults and validate.

    `overrides` is a nested dict applied after the file (the CLI uses it
    for flags like --seed). Returns an ExperimentConfig.
    """
    cfg = default_config_dict()
    if path is not None:
        with open(path) as f:
            loaded = json.load(f)
        if not isinstance(loaded, dict):
            raise ValueError("config root must be a JSON object")
        _merge(cfg, loaded)
    if overrides:
        _merge(cfg, overrides)
    cfg = _validate(cfg)
    return ExperimentConfig(
        mesh=cfg["mesh"], time=cfg["time"], physics=cfg["physics"],
        fields=cfg["fields"], schemes=tuple(cfg["schemes"]), solver=cfg["solver"],
        seed=cfg["seed"], output_dir=cfg["output_dir"], raw=cfg,
    )


def initial_pressure(config, mesh):
    """Compatible start: dry everywhere, wetted along the Robin boundary.

    The Robin penalty pins the boundary pressure to p1 within one step; a
    start that already satisfies it keeps the first-step behavior uniform
    across schemes.
    """
    p0 = np.full(mesh.n_vertices, config.physics["p0"])
    p0[mesh.boundary_vertices("top")] = config.physics["p1"]
    return p0


def build_experiment(config, N=None, fields_override=None):
    """Mesh, fields, operators, and initial state for one grid size.

    Returns (split, p0, k_s, E_d). `N` defaults to config.mesh.N;
    `fields_override` bypasses generation with explicit (k_s, E_d).
    """
    ph = config.physics
    N = config.mesh["N"] if N is None else N
    mesh = StructuredTriMesh(N, config.mesh["L"])
    if fields_override is not None:
        k_s, E_d = fields_override
        k_s = np.asarray(k_s, dtype=float)
        E_d = np.asarray(E_d, dtype=float)
    else:
        k_s, E_d = generate_fields(config.heterogeneity(), mesh)
    vg = VanGenuchtenParams(
        theta_r=ph["theta_r"], theta_s=ph["theta_s"], beta=ph["beta"],
        n_theta=ph["vg_n"], eta=ph["eta"],
    )
    elast = ElasticityParams(
        nu=ph["nu"], zeta_E=ph["zeta_E"], E_d=E_d, E_w=E_d / ph["E_w_ratio"],
    )
    fluid = FluidSolidParams(
        rho_w=ph["rho_w"], rho_s=ph["rho_s"], g_scalar=ph["g"],
        g_vec=np.array([0.0, ph["g"]]), phi=ph["phi"], alpha=ph["alpha"],
        C_w=ph["C_w"], C_s=ph["C_s"], mu_w=ph["mu_w"], k_s=k_s,
    )
    bc = BoundaryConfig(gamma=ph["gamma"], p1=ph["p1"])
    bounds = coefficient_bounds(vg, elast, fluid, ph["p1"], ph["p0"])
    split = SplitOperators(mesh, vg, elast, fluid, bc, bounds)
    p0 = initial_pressure(config, mesh)
    return split, p0, k_s, E_d
