"""Constitutive relations for variably saturated poroelastic media.

Van Genuchten retention and relative conductivity, saturation-dependent
elastic moduli, the storage/mobility coefficients of the pressure equation,
and per-cell coefficient bounds for the fixed-operator splitting.

Conventions: pressure p in Pa, head h_w in cm (negative when unsaturated,
under the signed gravity constant g_scalar < 0 positive pressures map to
negative heads). All functions are vectorized over numpy arrays.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "VanGenuchtenParams",
    "ElasticityParams",
    "FluidSolidParams",
    "CoefficientBounds",
    "pressure_to_head",
    "water_content",
    "effective_saturation",
    "relative_conductivity",
    "young_and_lame",
    "saturation_and_derivative",
    "storage_and_mobility",
    "coefficient_bounds",
]


@dataclass(frozen=True)
class VanGenuchtenParams:
    """Retention curve parameters (beta in 1/cm, n_theta > 1)."""

    theta_r: float
    theta_s: float
    beta: float
    n_theta: float
    eta: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.theta_r < self.theta_s:
            raise ValueError("need 0 <= theta_r < theta_s")
        if self.beta <= 0.0:
            raise ValueError("beta must be positive")
        if self.n_theta <= 1.0:
            raise ValueError("n_theta must exceed 1")

    @property
    def m_theta(self):
        return 1.0 - 1.0 / self.n_theta


@dataclass(frozen=True)
class ElasticityParams:
    """Drained/wet Young moduli per cell (Pa) with shared nu and exponent."""

    nu: float
    zeta_E: float
    E_d: np.ndarray
    E_w: np.ndarray

    def __post_init__(self):
        if not 0.0 < self.nu < 0.5:
            raise ValueError("nu must lie in (0, 0.5)")
        object.__setattr__(self, "E_d", np.atleast_1d(np.asarray(self.E_d, dtype=float)))
        object.__setattr__(self, "E_w", np.atleast_1d(np.asarray(self.E_w, dtype=float)))
        if np.any(self.E_d <= 0.0) or np.any(self.E_w <= 0.0):
            raise ValueError("Young moduli must be positive")
        if np.any(self.E_w > self.E_d):
            raise ValueError("wet modulus must not exceed drained modulus")


@dataclass(frozen=True)
class FluidSolidParams:
    """Fluid/solid constants plus the per-cell saturated conductivity k_s."""

    rho_w: float
    rho_s: float
    g_scalar: float
    g_vec: tuple
    phi: float
    alpha: float
    C_w: float
    C_s: float
    mu_w: float
    k_s: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.phi < 1.0:
            raise ValueError("porosity must lie in (0, 1)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("Biot coefficient must lie in (0, 1]")
        if self.mu_w <= 0.0:
            raise ValueError("viscosity must be positive")
        if self.g_scalar == 0.0:
            raise ValueError("g_scalar must be nonzero")
        object.__setattr__(self, "g_vec", tuple(float(g) for g in self.g_vec))
        if self.k_s is not None:
            object.__setattr__(
                self, "k_s", np.atleast_1d(np.asarray(self.k_s, dtype=float))
            )
            if np.any(self.k_s <= 0.0):
                raise ValueError("saturated conductivity must be positive")


@dataclass(frozen=True)
class CoefficientBounds:
    """Per-cell maxima of the nonlinear coefficients over [p_min, p_max]."""

    c_bar: np.ndarray
    kappa_bar: np.ndarray
    S_bar: np.ndarray
    lam_bar: np.ndarray
    mu_bar: np.ndarray
    p_min: float
    p_max: float
    n_samples: int


def pressure_to_head(p, fluid):
    """Water head in cm from pressure in Pa: h_w = p / (rho_w g), m -> cm."""
    return np.asarray(p, dtype=float) / (fluid.rho_w * fluid.g_scalar) * 100.0


def water_content(h_w, vg):
    """Water content theta(h_w) and its analytic derivative d theta / d h_w.

    Unsaturated branch (h_w < 0): theta = theta_r +
    (theta_s - theta_r) * [1 + (beta |h_w|)^n]^(-m); saturated branch
    (h_w >= 0): theta = theta_s with zero derivative. Derivative is per cm.
    """
    h = np.asarray(h_w, dtype=float)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    theta = np.full_like(h, vg.theta_s)
    dtheta = np.zeros_like(h)
    dry = h < 0.0
    if np.any(dry):
        x = vg.beta * np.abs(h[dry])
        xn = x ** vg.n_theta
        bracket = 1.0 + xn
        m = vg.m_theta
        dth = vg.theta_s - vg.theta_r
        theta[dry] = vg.theta_r + dth * bracket ** (-m)
        # d/dh of |h| is -1 on h < 0, so the slope is positive (wetter toward 0)
        dtheta[dry] = (
            dth * m * vg.n_theta * vg.beta * x ** (vg.n_theta - 1.0)
            * bracket ** (-m - 1.0)
        )
    if scalar:
        return theta[0], dtheta[0]
    return theta, dtheta


def effective_saturation(theta, vg):
    """S_e = (theta - theta_r) / (theta_s - theta_r), clamped to [0, 1]."""
    se = (np.asarray(theta, dtype=float) - vg.theta_r) / (vg.theta_s - vg.theta_r)
    return np.clip(se, 0.0, 1.0)


def relative_conductivity(S_e, vg):
    """Mualem relative conductivity k_rw(S_e) in [0, 1]."""
    se = np.clip(np.asarray(S_e, dtype=float), 0.0, 1.0)
    m = vg.m_theta
    inner = 1.0 - (1.0 - se ** (1.0 / m)) ** m
    return se ** vg.eta * inner ** 2


def young_and_lame(S_e, elast, cells=None):
    """Saturation-dependent Young modulus and Lame parameters.

    E = E_d + (E_w - E_d) * S_e^zeta; lam, mu from (E, nu). `cells` selects
    per-cell moduli (any shape broadcastable against S_e); omitted means the
    stored arrays broadcast as-is.
    """
    se = np.clip(np.asarray(S_e, dtype=float), 0.0, 1.0)
    E_d, E_w = elast.E_d, elast.E_w
    if cells is not None:
        E_d, E_w = E_d[cells], E_w[cells]
    E = E_d + (E_w - E_d) * se ** elast.zeta_E
    lam = E * elast.nu / ((1.0 + elast.nu) * (1.0 - 2.0 * elast.nu))
    mu = E / (2.0 * (1.0 + elast.nu))
    return E, lam, mu


def saturation_and_derivative(p, vg, fluid):
    """Saturation S = theta/phi and its signed derivative dS/dp (1/Pa)."""
    h = pressure_to_head(p, fluid)
    theta, dtheta_dh = water_content(h, vg)
    S = theta / fluid.phi
    # head is in cm, pressure in Pa: dh_cm/dp = 100 / (rho_w g)
    dS_dp = dtheta_dh * 100.0 / (fluid.phi * fluid.rho_w * fluid.g_scalar)
    return S, dS_dp


def storage_and_mobility(p, vg, fluid, cells=None):
    """Storage coefficient c, mobility kappa and saturation S at pressure p.

    c = (phi C_w + (alpha - phi) C_s S) S
        + (phi + (alpha - phi) C_s S p) |dS/dp|
    kappa = k_s k_rw(S_e) / mu_w.

    The retention term enters with the magnitude of the storage response so
    the coefficient stays the positive bell of the mass balance under either
    orientation of the head/pressure relabeling. `cells` selects per-cell
    k_s values (broadcastable against p).
    """
    p = np.asarray(p, dtype=float)
    S, dS_dp = saturation_and_derivative(p, vg, fluid)
    theta = S * fluid.phi
    se = effective_saturation(theta, vg)
    k_rw = relative_conductivity(se, vg)
    k_s = fluid.k_s
    if cells is not None:
        k_s = k_s[cells]
    kappa = k_s * k_rw / fluid.mu_w
    a_minus_phi = fluid.alpha - fluid.phi
    c = (fluid.phi * fluid.C_w + a_minus_phi * fluid.C_s * S) * S + (
        fluid.phi + a_minus_phi * fluid.C_s * S * p
    ) * np.abs(dS_dp)
    return c, kappa, S


def coefficient_bounds(vg, elast, fluid, p_min, p_max, n_samples=64):
    """Per-cell maxima of c, kappa, S, lam, mu over [p_min, p_max].

    Uniform sampling including both endpoints; n_samples >= 2.
    """
    if n_samples < 2:
        raise ValueError("need at least the two endpoint samples")
    if p_max < p_min:
        raise ValueError("p_max must be >= p_min")
    n_cells = len(fluid.k_s)
    if len(elast.E_d) != n_cells:
        raise ValueError("k_s and E_d must have equal cell counts")
    ps = np.linspace(p_min, p_max, n_samples)

    S, dS_dp = saturation_and_derivative(ps, vg, fluid)
    theta = S * fluid.phi
    se = effective_saturation(theta, vg)
    k_rw = relative_conductivity(se, vg)
    a_minus_phi = fluid.alpha - fluid.phi
    c_samples = (fluid.phi * fluid.C_w + a_minus_phi * fluid.C_s * S) * S + (
        fluid.phi + a_minus_phi * fluid.C_s * S * ps
    ) * np.abs(dS_dp)

    c_bar = np.full(n_cells, c_samples.max())
    S_bar = np.full(n_cells, S.max())
    kappa_bar = fluid.k_s * (k_rw.max() / fluid.mu_w)

    # E(x, p) = E_d(x) + (E_w - E_d)(x) * se(p)^zeta; maximize per cell
    shape = se[None, :] ** elast.zeta_E
    E_samples = elast.E_d[:, None] + (elast.E_w - elast.E_d)[:, None] * shape
    E_bar = E_samples.max(axis=1)
    lam_bar = E_bar * elast.nu / ((1.0 + elast.nu) * (1.0 - 2.0 * elast.nu))
    mu_bar = E_bar / (2.0 * (1.0 + elast.nu))
    return CoefficientBounds(
        c_bar=c_bar,
        kappa_bar=kappa_bar,
        S_bar=S_bar,
        lam_bar=lam_bar,
        mu_bar=mu_bar,
        p_min=float(p_min),
        p_max=float(p_max),
        n_samples=int(n_samples),
    )
