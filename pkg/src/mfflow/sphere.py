"""Sphere geometry: split dimensions, angle/radial laws, disintegration.

The unit sphere in R^d is split along a distinguished subspace H spanned by
the first d_H coordinates. A uniform point u decomposes as
u = cos(theta) z_H + sin(theta) z_perp with z_H, z_perp uniform on the unit
spheres of H and its complement and theta following the angle law
d gamma(theta) ~ cos(theta)^{d_H-1} sin(theta)^{d_perp-1} on [0, pi/2].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .rng import RandomSource

ANGLE_TOTAL_MASS_FACTOR = 0.5  # |gamma| = 0.5 * B(d_H/2, d_perp/2)


@dataclass(frozen=True)
class SplitDims:
    """Ambient dimension and the split d = d_H + d_perp, both parts >= 1."""

    d: int
    d_H: int
    d_perp: int = field(init=False)

    def __post_init__(self):
        if self.d < 2 or self.d_H < 1 or self.d_H >= self.d:
            raise ValueError(f"need 1 <= d_H < d, got d={self.d}, d_H={self.d_H}")
        object.__setattr__(self, "d_perp", self.d - self.d_H)


def sphere_surface_area(p: int) -> float:
    """Surface measure of the unit sphere in R^p, 2 pi^{p/2} / Gamma(p/2)."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    return 2.0 * np.pi ** (p / 2.0) / special.gamma(p / 2.0)


def sample_uniform_sphere(n: int, p: int, rs: RandomSource) -> np.ndarray:
    """n i.i.d. uniform points on the unit sphere of R^p, shape (n, p).

    Normalized standard Gaussians; zero draws are redrawn. p = 1 degenerates
    to uniform {-1, +1}.
    """
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    rng = rs.generator()
    g = rng.standard_normal((n, p))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0.0):  # probability ~0, but the contract demands it
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), p))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


@dataclass(frozen=True)
class AngleLaw:
    """Normalized angle law of the split, theta in [0, pi/2].

    Density proportional to cos^{d_H-1} sin^{d_perp-1}; equivalently theta =
    arccos(sqrt(X)) with X ~ Beta(d_H/2, d_perp/2).
    """

    dims: SplitDims

    @property
    def mass(self) -> float:
        """Unnormalized total mass, 0.5 * B(d_H/2, d_perp/2)."""
        return ANGLE_TOTAL_MASS_FACTOR * special.beta(
            self.dims.d_H / 2.0, self.dims.d_perp / 2.0
        )

    def pdf(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        dens = np.where(
            (theta >= 0.0) & (theta <= np.pi / 2.0),
            np.cos(theta) ** (self.dims.d_H - 1) * np.sin(theta) ** (self.dims.d_perp - 1),
            0.0,
        )
        return dens / self.mass

    def sample(self, n: int, rs: RandomSource) -> np.ndarray:
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        rng = rs.generator()
        x = rng.beta(self.dims.d_H / 2.0, self.dims.d_perp / 2.0, size=n)
        return np.arccos(np.sqrt(x))


def sample_angle_gamma(n: int, dims: SplitDims, rs: RandomSource) -> np.ndarray:
    """n draws from the normalized angle law of the split."""
    return AngleLaw(dims).sample(n, rs)


def sample_radial_gamma_p(n: int, p: int, rs: RandomSource) -> np.ndarray:
    """n draws of the signed radial law on [-1, 1] for a p-sphere factor.

    Law of <e, z> for z uniform on the sphere of R^p: eps * sqrt(X) with
    eps uniform on {-1, +1} and X ~ Beta(1/2, (p-1)/2). For p = 1 the law
    degenerates to uniform {-1, +1}.
    """
    if n < 1 or p < 1:
        raise ValueError(f"need n >= 1 and p >= 1, got n={n}, p={p}")
    rng = rs.generator()
    eps = rng.integers(0, 2, size=n) * 2.0 - 1.0
    if p == 1:
        return eps
    x = rng.beta(0.5, (p - 1) / 2.0, size=n)
    return eps * np.sqrt(x)


def compose_disintegration(theta, z_h, z_perp, dims: SplitDims) -> np.ndarray:
    """Assemble u = cos(theta) z_H (+) sin(theta) z_perp on the d-sphere.

    Accepts single vectors or batches (leading axis shared by all three
    inputs). Inputs must be unit vectors within 1e-9.
    """
    theta = np.asarray(theta, dtype=float)
    z_h = np.atleast_2d(np.asarray(z_h, dtype=float))
    z_perp = np.atleast_2d(np.asarray(z_perp, dtype=float))
    single = theta.ndim == 0
    theta = np.atleast_1d(theta)
    if z_h.shape[1] != dims.d_H or z_perp.shape[1] != dims.d_perp:
        raise ValueError(
            f"block shapes {z_h.shape[1]}/{z_perp.shape[1]} do not match "
            f"split {dims.d_H}+{dims.d_perp}"
        )
    for name, z in (("z_h", z_h), ("z_perp", z_perp)):
        err = np.abs(np.linalg.norm(z, axis=1) - 1.0)
        if np.any(err > 1e-9):
            raise ValueError(f"{name} is not unit within 1e-9 (max defect {err.max():.3g})")
    u = np.concatenate(
        [np.cos(theta)[:, None] * z_h, np.sin(theta)[:, None] * z_perp], axis=1
    )
    return u[0] if single else u


# ---- deterministic quadrature over the Beta-type laws ----


def gauss_beta_nodes(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for E[g(X)], X ~ Beta(a, b); weights sum to 1."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    # Jacobi weight (1-t)^{b-1} (1+t)^{a-1} on [-1, 1] maps to Beta under x=(1+t)/2.
    t, w = special.roots_jacobi(n, b - 1.0, a - 1.0)
    return (1.0 + t) / 2.0, w / w.sum()


def gauss_angle_nodes(dims: SplitDims, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for E[g(theta)] under the normalized angle law."""
    x, w = gauss_beta_nodes(dims.d_H / 2.0, dims.d_perp / 2.0, n)
    return np.arccos(np.sqrt(x)), w


def gauss_radial_nodes(p: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for E[g(r)] under the signed radial law of a p-sphere."""
    if p < 1:
        raise ValueError(f"need p >= 1, got {p}")
    if p == 1:
        return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
    alpha = (p - 3) / 2.0
    r, w = special.roots_jacobi(n, alpha, alpha)
    return r, w / w.sum()
