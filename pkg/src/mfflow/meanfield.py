"""Full (d+1)-dimensional particle flow for a wide two-layer ReLU network.

A cloud of m particles (a_j, b_j) represents the predictor
f(x) = (1/m) sum_j a_j relu(<b_j, x>). Explicit Euler steps follow the
per-particle velocity field of the population loss under fresh or frozen
uniform-sphere batches; clouds and batches can be symmetrized over a finite
orthogonal group so that invariance (or anti-invariance) of the predictor
holds exactly along the flow, up to float rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DegenerateParticleError, GroupTooLargeError, NumericalBlowupError
from .reduced import ReducedCloud
from .rng import RandomSource
from .sphere import SplitDims, sample_uniform_sphere

INVARIANT = "invariant"
ANTI_INVARIANT = "anti-invariant"
GROUP_CAP = 64


@dataclass
class ParticleCloud:
    """Particles a (m,), b (m, d); predictor carries the 1/m inside."""

    a: np.ndarray
    b: np.ndarray
    dims: SplitDims

    @property
    def m(self) -> int:
        return self.a.shape[0]

    def copy(self) -> "ParticleCloud":
        return replace(self, a=self.a.copy(), b=self.b.copy())

    def cone_defect(self) -> float:
        """max_j | |a_j| - ||b_j|| |, zero for cone-supported clouds."""
        return float(np.max(np.abs(np.abs(self.a) - np.linalg.norm(self.b, axis=1))))


def init_cloud(m: int, dims: SplitDims, rs: RandomSource) -> ParticleCloud:
    """a_j uniform {-1,+1}, b_j uniform on the sphere: exact cone support."""
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    rng = rs.split(0).generator()
    a = rng.integers(0, 2, size=m) * 2.0 - 1.0
    b = sample_uniform_sphere(m, dims.d, rs.split(1))
    return ParticleCloud(a=a, b=b, dims=dims)


# ---- targets ----


@dataclass(frozen=True)
class TargetSpec:
    """Evaluable target f*; kinds: norm-on-subspace, odd-linear-combination,
    custom-callback."""

    kind: str
    dims: SplitDims | None = None
    vectors: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    powers: np.ndarray | None = None
    fn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind == "norm-on-subspace":
            if self.dims is None:
                raise ValueError("norm-on-subspace needs dims")
        elif self.kind == "odd-linear-combination":
            if self.vectors is None or self.coeffs is None:
                raise ValueError("odd-linear-combination needs vectors and coeffs")
            powers = self.powers
            if powers is None:
                powers = np.ones(len(np.atleast_1d(self.coeffs)), dtype=int)
                object.__setattr__(self, "powers", powers)
            if np.any(np.asarray(powers) % 2 != 1):
                raise ValueError("powers must be odd integers")
        elif self.kind == "custom-callback":
            if self.fn is None:
                raise ValueError("custom-callback needs fn")
        else:
            raise ValueError(f"unknown target kind {self.kind!r}")

    @staticmethod
    def norm_on_subspace(dims: SplitDims) -> "TargetSpec":
        return TargetSpec(kind="norm-on-subspace", dims=dims)

    @staticmethod
    def odd_linear(vectors, coeffs, powers=None) -> "TargetSpec":
        return TargetSpec(
            kind="odd-linear-combination",
            vectors=np.atleast_2d(np.asarray(vectors, float)),
            coeffs=np.atleast_1d(np.asarray(coeffs, float)),
            powers=None if powers is None else np.atleast_1d(np.asarray(powers, int)),
        )

    @staticmethod
    def custom(fn: Callable[[np.ndarray], np.ndarray]) -> "TargetSpec":
        return TargetSpec(kind="custom-callback", fn=fn)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "norm-on-subspace":
            return np.linalg.norm(x[:, : self.dims.d_H], axis=1)
        if self.kind == "odd-linear-combination":
            proj = x @ self.vectors.T
            return (proj ** self.powers) @ self.coeffs
        return np.asarray(self.fn(x), dtype=float)


# ---- orthogonal transforms and group closure ----


@dataclass(frozen=True)
class OrthogonalTransform:
    """Orthogonal matrix with a flavor: invariant maps (a,b) to (a, Tb),
    anti-invariant to (-a, Tb)."""

    matrix: np.ndarray
    flavor: str = INVARIANT

    def __post_init__(self):
        t = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", t)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError(f"transform must be square, got {t.shape}")
        defect = np.max(np.abs(t.T @ t - np.eye(t.shape[0])))
        if defect > 1e-10:
            raise ValueError(f"matrix is not orthogonal (defect {defect:.3g})")
        if self.flavor not in (INVARIANT, ANTI_INVARIANT):
            raise ValueError(f"unknown flavor {self.flavor!r}")

    @property
    def sign(self) -> float:
        return -1.0 if self.flavor == ANTI_INVARIANT else 1.0


def reflection(d: int, axis: int, flavor: str = INVARIANT) -> OrthogonalTransform:
    m = np.eye(d)
    m[axis, axis] = -1.0
    return OrthogonalTransform(m, flavor)


def neg_identity(d: int, flavor: str = ANTI_INVARIANT) -> OrthogonalTransform:
    return OrthogonalTransform(-np.eye(d), flavor)


def coordinate_permutation(perm, flavor: str = INVARIANT) -> OrthogonalTransform:
    perm = np.asarray(perm, dtype=int)
    m = np.eye(len(perm))[perm]
    return OrthogonalTransform(m, flavor)


def _element_key(matrix: np.ndarray, sign: float) -> bytes:
    return (np.round(matrix, 9) + 0.0).tobytes() + (b"+" if sign > 0 else b"-")


def group_closure(
    transforms: list[OrthogonalTransform], d: int, cap: int = GROUP_CAP
) -> list[tuple[np.ndarray, float]]:
    """Finite closure of (matrix, sign) pairs generated by the transforms.

    Signs multiply like a character (anti-invariant generators carry -1),
    so an element reachable with both signs simply appears twice. Identity
    comes first; insertion order is deterministic.
    """
    identity = (np.eye(d), 1.0)
    elements = [identity]
    seen = {_element_key(*identity)}
    gens = [(t.matrix, t.sign) for t in transforms]
    frontier = [identity]
    while frontier:
        nxt = []
        for mat, sign in frontier:
            for gmat, gsign in gens:
                cand = (gmat @ mat, gsign * sign)
                key = _element_key(*cand)
                if key not in seen:
                    if len(elements) >= cap:
                        raise GroupTooLargeError(f"group closure exceeds cap {cap}")
                    seen.add(key)
                    elements.append(cand)
                    nxt.append(cand)
        frontier = nxt
    return elements


def symmetrize_cloud(
    cloud: ParticleCloud, transforms: list[OrthogonalTransform], cap: int = GROUP_CAP
) -> ParticleCloud:
    """Replace each particle by its orbit under the group closure.

    Width becomes m * |G|; blocks are ordered by group element (identity
    block first), so applying a group element permutes whole blocks.
    """
    group = group_closure(transforms, cloud.dims.d, cap=cap)
    a_blocks = [sign * cloud.a for _, sign in group]
    b_blocks = [cloud.b @ mat.T for mat, _ in group]
    return ParticleCloud(
        a=np.concatenate(a_blocks), b=np.concatenate(b_blocks), dims=cloud.dims
    )


def transform_cloud(cloud: ParticleCloud, mat: np.ndarray, sign: float) -> ParticleCloud:
    """Relabel every particle by one group element (a,b) -> (sign a, T b)."""
    return ParticleCloud(a=sign * cloud.a, b=cloud.b @ mat.T, dims=cloud.dims)


def sphere_batch(n: int, d: int, rs: RandomSource) -> np.ndarray:
    """n uniform-sphere data points, the sampling law of the population loss."""
    return sample_uniform_sphere(n, d, rs)


def symmetrize_batch(
    points: np.ndarray, transforms: list[OrthogonalTransform], cap: int = GROUP_CAP
) -> np.ndarray:
    """Stack T y over every group element so the batch is exactly invariant."""
    group = group_closure(transforms, points.shape[1], cap=cap)
    return np.concatenate([points @ mat.T for mat, _ in group], axis=0)


# ---- predictor and flow ----


def predict(cloud: ParticleCloud, x: np.ndarray) -> np.ndarray:
    """f(x) = (1/m) sum_j a_j relu(<b_j, x>); x may be (d,) or (n, d)."""
    x_arr = np.atleast_2d(np.asarray(x, dtype=float))
    vals = np.maximum(x_arr @ cloud.b.T, 0.0) @ cloud.a / cloud.m
    return float(vals[0]) if np.ndim(x) == 1 else vals


def velocity(
    cloud: ParticleCloud, target: TargetSpec, batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Per-particle velocity of the batch loss under the 1/m parameterization.

    a-component: mean_y R(y) relu(<b_j, y>); b-component:
    mean_y R(y) a_j 1{<b_j, y> > 0} y, with residual R = f* - f and the zero
    subgradient at the kink. Equals -m times the batch-loss gradient.
    """
    z = batch @ cloud.b.T
    act = np.maximum(z, 0.0)
    resid = target(batch) - act @ cloud.a / cloud.m
    n = batch.shape[0]
    va = act.T @ resid / n
    vb = ((z > 0.0) * resid[:, None]).T @ batch * (cloud.a[:, None] / n)
    return va, vb


def step(
    cloud: ParticleCloud,
    target: TargetSpec,
    eta: float,
    batch: np.ndarray,
    iteration: int | None = None,
) -> ParticleCloud:
    """One explicit Euler step along the velocity field."""
    with np.errstate(over="ignore", invalid="ignore"):
        va, vb = velocity(cloud, target, batch)
        a_new = cloud.a + eta * va
        b_new = cloud.b + eta * vb
    if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(b_new))):
        raise NumericalBlowupError("non-finite particle update", iteration=iteration)
    return ParticleCloud(a=a_new, b=b_new, dims=cloud.dims)


def batch_loss(cloud: ParticleCloud, target: TargetSpec, batch: np.ndarray) -> float:
    """Empirical squared loss mean_y (f*(y) - f(y))^2 / 2."""
    resid = target(batch) - predict(cloud, batch)
    return float(np.mean(0.5 * resid**2))


# ---- diagnostics and projections ----


def invariance_defect(
    cloud: ParticleCloud, transform: OrthogonalTransform, points: np.ndarray
) -> float:
    """max |f(Tx) - f(x)| (invariant) or |f(Tx) + f(x)| (anti-invariant)."""
    f = predict(cloud, points)
    ft = predict(cloud, points @ transform.matrix.T)
    return float(np.max(np.abs(ft - transform.sign * f)))


def perp_dependence_scan(cloud: ParticleCloud, u_h: np.ndarray, r_grid) -> np.ndarray:
    """Predictor along u_H + r e_perp with e_perp the first basis vector of
    the complement; u_h is a unit vector of the H block."""
    dims = cloud.dims
    u_h = np.asarray(u_h, dtype=float)
    if u_h.shape != (dims.d_H,):
        raise ValueError(f"u_h must have shape ({dims.d_H},), got {u_h.shape}")
    if abs(np.linalg.norm(u_h) - 1.0) > 1e-9:
        raise ValueError("u_h must be a unit vector")
    r_grid = np.asarray(r_grid, dtype=float)
    pts = np.zeros((r_grid.size, dims.d))
    pts[:, : dims.d_H] = u_h
    pts[:, dims.d_H] = r_grid
    return predict(cloud, pts)


def odd_part_loss_gap(
    cloud: ParticleCloud, target: TargetSpec, batch: np.ndarray
) -> tuple[float, float]:
    """(loss of f, loss of the odd part of f) on the batch."""
    y = target(batch)
    f = predict(cloud, batch)
    f_odd = 0.5 * (f - predict(cloud, -batch))
    loss = float(np.mean(0.5 * (y - f) ** 2))
    odd_loss = float(np.mean(0.5 * (y - f_odd) ** 2))
    return loss, odd_loss


def project_to_angles(cloud: ParticleCloud) -> ReducedCloud:
    """Push particles to signed angle atoms: c_j = a_j ||b_j|| / m at
    theta_j = arccos(||b_j^H|| / ||b_j||); absolute mass convention."""
    norms = np.linalg.norm(cloud.b, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateParticleError("zero direction vector has no angle")
    norms_h = np.linalg.norm(cloud.b[:, : cloud.dims.d_H], axis=1)
    theta = np.arccos(np.clip(norms_h / norms, 0.0, 1.0))
    c = cloud.a * norms / cloud.m
    eps = np.where(cloud.a >= 0.0, 1.0, -1.0)
    return ReducedCloud(c=c, theta=theta, eps=eps, dims=cloud.dims, mass_scale=1.0)
