"""Seeded heterogeneity-field generation with a pinned bit stream.

Reproducibility across platforms and library versions requires that a
(seed, label) pair always yields the same bytes, so the generator is a
named counter-based pipeline rather than a library RNG whose stream layout
may change between releases:

- splitmix64 finalizer: z ^= z >> 30, * 0xBF58476D1CE4E5B9; z ^= z >> 27,
  * 0x94D049BB133111EB; z ^= z >> 31 (all mod 2^64).
- stream state: mix64(seed XOR fnv1a64(label)), where fnv1a64 is the
  64-bit FNV-1a hash of the label's UTF-8 bytes.
- draw i: state advances by the golden-gamma constant 0x9E3779B97F4A7C15;
  uniform = (mix64(state) >> 11) * 2^-53, a float64 in [0, 1).

Two constructions produce per-cell fields from labeled streams ("k_s",
"E_d"):

- "white": independent per-cell draws. log10 k_s fills the window
  log10(k_s0) +/- contrast/2 uniformly; E_d fills E_d0 * (1 +/- half
  spread) uniformly.
- "modes": a random cosine series evaluated at triangle centroids,
  centered, scaled so two standard deviations span the half window, then
  clipped to the window; log scale for k_s, linear for E_d.

The E_d window half-width is e_spread * contrast / 4 relative to E_d0, so
contrast 0 makes both fields constant.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "HeterogeneityGenSpec",
    "SplitMix64Stream",
    "stream_uniforms",
    "generate_fields",
]

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

CONSTRUCTIONS = ("white", "modes")


def _mix64(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _fnv1a64(label):
    h = _FNV_OFFSET
    for b in label.encode("utf-8"):
        h = ((h ^ b) * _FNV_PRIME) & _M64
    return h


class SplitMix64Stream:
    """Counter-based uniform stream named by (seed, label)."""

    def __init__(self, seed, label):
        self.seed = int(seed)
        self.label = str(label)
        self._state = _mix64((self.seed & _M64) ^ _fnv1a64(self.label))

    def uniforms(self, n):
        """Next n float64 draws in [0, 1)."""
        out = np.empty(int(n))
        s = self._state
        for i in range(int(n)):
            s = (s + _GOLDEN) & _M64
            out[i] = (_mix64(s) >> 11) * 2.0 ** -53
        self._state = s
        return out


def stream_uniforms(seed, label, n):
    """The first n uniforms of the (seed, label) stream."""
    return SplitMix64Stream(seed, label).uniforms(n)


@dataclass(frozen=True)
class HeterogeneityGenSpec:
    """Recipe for the per-cell k_s and E_d fields.

    `contrast` is the k_s window width in orders of magnitude; `e_spread`
    scales the linear E_d window (half-width e_spread * contrast / 4 of
    E_d0). The spectrum fields apply to the "modes" construction: n_modes
    cosine modes with integer wave numbers up to round(L / corr_length).
    """

    seed: int = 1
    construction: str = "white"
    contrast: float = 1.0
    k_s0: float = 6e-10
    E_d0: float = 3e6
    e_spread: float = 0.0
    n_modes: int = 24
    corr_length: float = 2.5

    def __post_init__(self):
        if self.construction not in CONSTRUCTIONS:
            raise ValueError("construction must be one of %s" % (CONSTRUCTIONS,))
        if self.contrast < 0.0:
            raise ValueError("contrast must be >= 0")
        if self.k_s0 <= 0.0 or self.E_d0 <= 0.0:
            raise ValueError("base values must be positive")
        if self.e_spread < 0.0:
            raise ValueError("e_spread must be >= 0")
        if self.n_modes < 0:
            raise ValueError("n_modes must be >= 0")
        if self.corr_length <= 0.0:
            raise ValueError("corr_length must be positive")


def _mode_field(spec, label, mesh):
    """Centered random cosine series at triangle centroids, unit window.

    Returns values scaled so two standard deviations reach 1.0, then
    clipped to [-1, 1]; the caller applies its half-window.
    """
    n_cells = mesh.n_cells
    if spec.n_modes == 0 or spec.contrast == 0.0:
        return np.zeros(n_cells)
    stream = SplitMix64Stream(spec.seed, label)
    draws = stream.uniforms(4 * spec.n_modes).reshape(spec.n_modes, 4)
    xy = mesh.cell_centroids()
    k_max = max(1, int(round(mesh.L / spec.corr_length)))
    f = np.zeros(n_cells)
    amp = 1.0 / np.sqrt(spec.n_modes)
    for u1, u2, u3, u4 in draws:
        kx = 1 + int(u1 * k_max)
        ky = 1 + int(u2 * k_max)
        sign = 1.0 if u3 < 0.5 else -1.0
        phase = 2.0 * np.pi * u4
        f += amp * np.cos(
            2.0 * np.pi * (kx * xy[:, 0] + sign * ky * xy[:, 1]) / mesh.L + phase
        )
    f -= f.mean()
    std = f.std()
    if std == 0.0:
        return np.zeros(n_cells)
    return np.clip(f / (2.0 * std), -1.0, 1.0)


def generate_fields(spec, mesh):
    """Per-cell (k_s, E_d) arrays; bit-identical for a fixed (spec, mesh)."""
    n_cells = mesh.n_cells
    half_log = 0.5 * spec.contrast
    half_lin = spec.e_spread * spec.contrast / 4.0
    if spec.construction == "white":
        u = stream_uniforms(spec.seed, "k_s", n_cells)
        v = stream_uniforms(spec.seed, "E_d", n_cells)
        log_dev = (u - 0.5) * spec.contrast
        lin_dev = (v - 0.5) * 2.0 * half_lin
    else:
        log_dev = half_log * _mode_field(spec, "k_s", mesh)
        lin_dev = half_lin * _mode_field(spec, "E_d", mesh)
    k_s = spec.k_s0 * 10.0 ** log_dev
    E_d = spec.E_d0 * (1.0 + lin_dev)
    return k_s, E_d
