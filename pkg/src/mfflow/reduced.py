"""Exact 1-D angle dynamics of the spherical flow, with MC kernel estimators.

State is a signed atomic pair of measures on [0, pi/2]: atom j carries a
signed coefficient c_j at angle theta_j with a fixed side label
eps_j = sign(c_j(0)). The measure mass of atom j is c_j / mass_scale, so a
cloud built by ``init_reduced`` stores raw +-1 coefficients with
mass_scale = m, while a cloud projected from full-dimensional particles
already carries the 1/m inside c_j and uses mass_scale = 1.

Per iteration the gain G and velocity V at each atom are estimated from a
five-component Monte Carlo batch (one angle sample and two independent
radial pairs), then atoms update multiplicatively in mass and additively in
angle (explicit Euler).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .errors import NumericalBlowupError, UndefinedDistanceError
from .rng import RandomSource
from .sphere import (
    SplitDims,
    gauss_angle_nodes,
    gauss_radial_nodes,
    sample_angle_gamma,
    sample_radial_gamma_p,
)

HALF_PI = np.pi / 2.0


@dataclass
class ReducedCloud:
    """Signed atoms (c_j, theta_j) with fixed side labels eps_j."""

    c: np.ndarray
    theta: np.ndarray
    eps: np.ndarray
    dims: SplitDims
    mass_scale: float = 1.0  # atom j has measure mass c_j / mass_scale

    @property
    def m(self) -> int:
        return self.c.shape[0]

    def copy(self) -> "ReducedCloud":
        return replace(self, c=self.c.copy(), theta=self.theta.copy(), eps=self.eps.copy())


@dataclass(frozen=True)
class McBatch:
    """One iteration's samples: angles phi, radial pairs (r, s) and (r_alt, s_alt)."""

    phi: np.ndarray
    r: np.ndarray
    s: np.ndarray
    r_alt: np.ndarray
    s_alt: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.shape[0]


@dataclass(frozen=True)
class QuadratureSpec:
    """How to evaluate the averaged-kernel integrals.

    kind "mc": n i.i.d. radial pairs from rs. kind "gauss": tensor
    Gauss-Jacobi with n nodes per radial axis (deterministic).
    """

    kind: str = "mc"
    n: int = 100_000
    rs: RandomSource | None = None

    def __post_init__(self):
        if self.kind not in ("mc", "gauss"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.n < 1:
            raise ValueError(f"need n >= 1, got {self.n}")


@dataclass(frozen=True)
class StepEvents:
    """Counters for one explicit Euler step."""

    sign_flips: int
    overshoots: int


def init_reduced(m: int, dims: SplitDims, rs: RandomSource) -> ReducedCloud:
    """Raw-convention init: c_j uniform {-1,+1}, theta_j from the angle law."""
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    rng = rs.split(0).generator()
    c = rng.integers(0, 2, size=m) * 2.0 - 1.0
    theta = sample_angle_gamma(m, dims, rs.split(1))
    return ReducedCloud(c=c, theta=theta, eps=np.sign(c), dims=dims, mass_scale=float(m))


def draw_mc_batch(n: int, dims: SplitDims, rs: RandomSource) -> McBatch:
    """Fresh estimator batch; substreams keep every component replayable."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return McBatch(
        phi=sample_angle_gamma(n, dims, rs.split(0)),
        r=sample_radial_gamma_p(n, dims.d_H, rs.split(1)),
        s=sample_radial_gamma_p(n, dims.d_perp, rs.split(2)),
        r_alt=sample_radial_gamma_p(n, dims.d_H, rs.split(3)),
        s_alt=sample_radial_gamma_p(n, dims.d_perp, rs.split(4)),
    )


def kernel_psi(r, s, theta, phi) -> np.ndarray:
    """relu(r cos(phi) cos(theta) + s sin(phi) sin(theta)), broadcasting."""
    arg = np.asarray(r) * np.cos(phi) * np.cos(theta) + np.asarray(s) * np.sin(phi) * np.sin(theta)
    return np.maximum(arg, 0.0)


def kernel_chi(r, s, theta, phi) -> np.ndarray:
    """d/dtheta of kernel_psi with the zero subgradient at the kink."""
    r = np.asarray(r)
    s = np.asarray(s)
    arg = r * np.cos(phi) * np.cos(theta) + s * np.sin(phi) * np.sin(theta)
    bracket = -r * np.sin(theta) * np.cos(phi) + s * np.cos(theta) * np.sin(phi)
    return np.where(arg > 0.0, bracket, 0.0)


def estimate_g_v(
    cloud: ReducedCloud, batch: McBatch, prefactor: str = "one_over_n"
) -> tuple[np.ndarray, np.ndarray]:
    """Per-atom MC estimates (G_hat, V_hat) of the gain and angle velocity.

    G_hat_j = pref * sum_i Psi_ji (cos(phi_i) - f_i) with the residual built
    from the independent radial pair, f_i = sum_l (c_l / mass_scale)
    Psi_alt_li; V_hat is the same contraction with the chi kernel. The
    default prefactor is 1/N; "d_over_n" rescales by the ambient dimension.
    """
    if prefactor not in ("one_over_n", "d_over_n"):
        raise ValueError(f"unknown prefactor mode {prefactor!r}")
    cth, sth = np.cos(cloud.theta), np.sin(cloud.theta)
    xc = batch.r * np.cos(batch.phi)
    ys = batch.s * np.sin(batch.phi)
    xc_alt = batch.r_alt * np.cos(batch.phi)
    ys_alt = batch.s_alt * np.sin(batch.phi)

    arg = np.outer(cth, xc) + np.outer(sth, ys)
    psi = np.maximum(arg, 0.0)
    psi_alt = np.maximum(np.outer(cth, xc_alt) + np.outer(sth, ys_alt), 0.0)

    f = psi_alt.T @ (cloud.c / cloud.mass_scale)
    resid = np.cos(batch.phi) - f
    scale = 1.0 / batch.n
    if prefactor == "d_over_n":
        scale = cloud.dims.d / batch.n
    g_hat = (psi @ resid) * scale
    chi = np.where(arg > 0.0, np.outer(-sth, xc) + np.outer(cth, ys), 0.0)
    v_hat = (chi @ resid) * scale
    return g_hat, v_hat


def step_reduced(
    cloud: ReducedCloud,
    batch: McBatch,
    eta: float,
    prefactor: str = "one_over_n",
    clamp_theta: bool = False,
    iteration: int | None = None,
) -> tuple[ReducedCloud, StepEvents]:
    """One explicit Euler step; counts sign flips and angle overshoots.

    Masses update by the factor 1 + 2 eta eps_j G_hat_j (a factor <= 0 is a
    sign-flip event); angles move by eta eps_j V_hat_j. Overshoots past
    [0, pi/2] are counted and, unless clamp_theta, left in place.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        g_hat, v_hat = estimate_g_v(cloud, batch, prefactor=prefactor)
        factor = 1.0 + 2.0 * eta * cloud.eps * g_hat
        c_new = factor * cloud.c
        theta_new = cloud.theta + eta * cloud.eps * v_hat
    if not (np.all(np.isfinite(c_new)) and np.all(np.isfinite(theta_new))):
        raise NumericalBlowupError("non-finite reduced update", iteration=iteration)
    events = StepEvents(
        sign_flips=int(np.count_nonzero(factor <= 0.0)),
        overshoots=int(np.count_nonzero((theta_new < 0.0) | (theta_new > HALF_PI))),
    )
    if clamp_theta:
        theta_new = np.clip(theta_new, 0.0, HALF_PI)
    new = ReducedCloud(
        c=c_new, theta=theta_new, eps=cloud.eps, dims=cloud.dims, mass_scale=cloud.mass_scale
    )
    return new, events


# ---- averaged kernel and derived quantities ----


def _radial_pairs(dims: SplitDims, quad: QuadratureSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample or node pairs (r, s) with weights for the double radial average.

    MC pairs are mirrored antithetically, (r, s) with (-r, -s); both radial
    laws are symmetric, so the average stays unbiased with smaller variance.
    """
    if quad.kind == "mc":
        rs = quad.rs if quad.rs is not None else RandomSource(0, (7,))
        half = (quad.n + 1) // 2
        r = sample_radial_gamma_p(half, dims.d_H, rs.split(1))
        s = sample_radial_gamma_p(half, dims.d_perp, rs.split(2))
        r = np.concatenate([r, -r])
        s = np.concatenate([s, -s])
        w = np.full(r.size, 1.0 / r.size)
        return r, s, w
    r, wr = gauss_radial_nodes(dims.d_H, quad.n)
    s, ws = gauss_radial_nodes(dims.d_perp, quad.n)
    rr, ss = np.meshgrid(r, s, indexing="ij")
    return rr.ravel(), ss.ravel(), np.outer(wr, ws).ravel()


def phi_tilde_matrix(
    theta: np.ndarray, phi: np.ndarray, dims: SplitDims, quad: QuadratureSpec
) -> np.ndarray:
    """Averaged kernel on a (theta x phi) grid, shape (len(theta), len(phi)).

    The integrand is rank two in (theta, phi) before the relu, so each chunk
    is one (n x 2) @ (2 x m*k) product followed by a weighted column mean.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    r, s, w = _radial_pairs(dims, quad)
    pairs = np.stack([r, s], axis=1)
    m, k = theta.size, phi.size
    out = np.empty((m, k))
    # chunk phi to keep the n x (m * chunk) intermediate under ~64 MB
    chunk = max(1, int(8_000_000 / max(1, r.size * m)))
    cth, sth = np.cos(theta), np.sin(theta)
    for lo in range(0, k, chunk):
        hi = min(k, lo + chunk)
        a = np.outer(cth, np.cos(phi[lo:hi])).ravel()
        b = np.outer(sth, np.sin(phi[lo:hi])).ravel()
        vals = np.maximum(pairs @ np.stack([a, b]), 0.0)
        out[:, lo:hi] = (w @ vals).reshape(m, hi - lo)
    return out


def phi_tilde(theta, phi, dims: SplitDims, quad: QuadratureSpec | None = None) -> np.ndarray:
    """Double radial average of kernel_psi at (theta, phi), broadcasting."""
    if quad is None:
        quad = QuadratureSpec()
    theta_b, phi_b = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    shape = theta_b.shape
    r, s, w = _radial_pairs(dims, quad)
    a = (np.cos(theta_b) * np.cos(phi_b)).ravel()
    b = (np.sin(theta_b) * np.sin(phi_b)).ravel()
    vals = np.maximum(np.outer(r, a) + np.outer(s, b), 0.0)
    out = w @ vals
    return out.reshape(shape) if shape else float(out[0])


def phi_tilde_zero_angle(d_h: int) -> float:
    """Closed form phi_tilde(0, phi) / cos(phi) = Gamma(d_H/2) / (2 sqrt(pi) Gamma((d_H+1)/2))."""
    return special.gamma(d_h / 2.0) / (2.0 * np.sqrt(np.pi) * special.gamma((d_h + 1) / 2.0))


def alpha_expected(d_h: int) -> float:
    """Limit mass of the plus side, 2 sqrt(pi) Gamma((d_H+1)/2) / Gamma(d_H/2)."""
    if d_h < 1:
        raise ValueError(f"need d_H >= 1, got {d_h}")
    return 2.0 * np.sqrt(np.pi) * special.gamma((d_h + 1) / 2.0) / special.gamma(d_h / 2.0)


def reduced_predict(
    cloud: ReducedCloud, phi, quad: QuadratureSpec | None = None
) -> np.ndarray:
    """f_tilde(phi) = sum_j (c_j / mass_scale) phi_tilde(theta_j, phi)."""
    if quad is None:
        quad = QuadratureSpec()
    phi_arr = np.atleast_1d(np.asarray(phi, dtype=float))
    mat = phi_tilde_matrix(cloud.theta, phi_arr, cloud.dims, quad)
    vals = (cloud.c / cloud.mass_scale) @ mat
    return vals if np.ndim(phi) else float(vals[0])


def objective_a(
    cloud: ReducedCloud,
    n_mc: int,
    rs: RandomSource,
    inner: QuadratureSpec | None = None,
) -> float:
    """MC estimate of the reduced objective E_phi[(cos(phi) - f_tilde(phi))^2] / 2."""
    if inner is None:
        inner = QuadratureSpec(kind="mc", n=1000, rs=rs.split(1))
    phi = sample_angle_gamma(n_mc, cloud.dims, rs.split(0))
    f = reduced_predict(cloud, phi, inner)
    return float(np.mean(0.5 * (np.cos(phi) - f) ** 2))


def objective_a_quadrature(
    cloud: ReducedCloud, n_outer: int = 96, inner: QuadratureSpec | None = None
) -> float:
    """Deterministic variant: Gauss nodes for the outer angle average."""
    if inner is None:
        inner = QuadratureSpec(kind="gauss", n=64)
    phi, w = gauss_angle_nodes(cloud.dims, n_outer)
    f = reduced_predict(cloud, phi, inner)
    return float(w @ (0.5 * (np.cos(phi) - f) ** 2))


# ---- measure summaries ----


def masses(cloud: ReducedCloud) -> tuple[float, float]:
    """(plus, minus) side masses under the cloud's normalization convention."""
    plus = cloud.c[cloud.eps > 0].sum() / cloud.mass_scale
    minus = -cloud.c[cloud.eps < 0].sum() / cloud.mass_scale
    return float(plus), float(minus)


def w2_to_dirac(cloud: ReducedCloud, side: int, location: float) -> float:
    """W2 distance from the normalized side measure to a Dirac at location.

    Closed form sqrt(sum_j w_j (theta_j - location)^2) with w_j the
    normalized absolute masses of the side.
    """
    sel = cloud.eps == side
    weights = np.abs(cloud.c[sel])
    total = weights.sum()
    if total == 0.0:
        raise UndefinedDistanceError(f"side {side:+d} carries no mass")
    w = weights / total
    return float(np.sqrt(w @ (cloud.theta[sel] - location) ** 2))


def angle_histogram(cloud: ReducedCloud, side: int, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Binned absolute masses of one side over [0, pi/2].

    Returns (bin_left, mass); angles past pi/2 fold into the last bin and
    below 0 into the first.
    """
    if bins < 2:
        raise ValueError(f"need bins >= 2, got {bins}")
    sel = cloud.eps == side
    edges = np.linspace(0.0, HALF_PI, bins + 1)
    idx = np.clip(np.floor(cloud.theta[sel] / HALF_PI * bins).astype(int), 0, bins - 1)
    mass = np.zeros(bins)
    np.add.at(mass, idx, np.abs(cloud.c[sel]) / cloud.mass_scale)
    return edges[:-1], mass
