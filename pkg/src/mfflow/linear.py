"""Mean-field flow of a two-layer linear network against a fixed dataset.

With activation z/2 the predictor collapses to f(x) = <w, x> with
w = (1/2m) sum_j a_j b_j, and the particle flow induces
w'(t) = -H(t) grad Q(w(t)) for the least-squares objective Q and the
positive-definite preconditioner H(t) built from the particle second
moments. Convergence of the Q-gap is exponential; the fit helper extracts
the empirical rate from a logged gap series.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import IllPosedError, InsufficientDataError, NumericalBlowupError
from .rng import RandomSource
from .sphere import sample_uniform_sphere

COND_LIMIT = 1e12


@dataclass(frozen=True)
class Dataset:
    """Fixed design x (n, d) and labels y (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise ValueError(f"inconsistent shapes x{self.x.shape}, y{self.y.shape}")
        if self.x.shape[0] < 1:
            raise ValueError("dataset is empty")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def cov(self) -> np.ndarray:
        """Second-moment matrix C = (1/n) sum_i x_i x_i^T."""
        return self.x.T @ self.x / self.n

    def rhs(self) -> np.ndarray:
        """Cross moment beta = (1/n) sum_i y_i x_i."""
        return self.x.T @ self.y / self.n


@dataclass
class LinearFlowState:
    """Particles of the linear-activation flow over a fixed dataset."""

    a: np.ndarray
    b: np.ndarray
    dataset: Dataset

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def w(self) -> np.ndarray:
        """Collapsed linear predictor w = (1/2m) sum_j a_j b_j."""
        return self.a @ self.b / (2.0 * self.m)

    def copy(self) -> "LinearFlowState":
        return replace(self, a=self.a.copy(), b=self.b.copy())


def init_linear_state(m: int, dataset: Dataset, rs: RandomSource) -> LinearFlowState:
    """Cone init in mirrored pairs (a, b), (a, -b), so w(0) = 0 exactly."""
    if m < 2 or m % 2 != 0:
        raise ValueError(f"need even m >= 2 for mirrored pairs, got {m}")
    half = m // 2
    rng = rs.split(0).generator()
    a_half = rng.integers(0, 2, size=half) * 2.0 - 1.0
    b_half = sample_uniform_sphere(half, dataset.d, rs.split(1))
    a = np.concatenate([a_half, a_half])
    b = np.concatenate([b_half, -b_half])
    return LinearFlowState(a=a, b=b, dataset=dataset)


def q_value_and_grad(dataset: Dataset, w: np.ndarray) -> tuple[float, np.ndarray]:
    """Q(w) = (1/2n) sum_i (y_i - <w, x_i>)^2 and its gradient C w - beta."""
    resid = dataset.y - dataset.x @ w
    q = float(0.5 * np.mean(resid**2))
    grad = -(dataset.x.T @ resid) / dataset.n
    return q, grad


def ols_optimum(dataset: Dataset) -> tuple[np.ndarray, float]:
    """Minimizer of Q (solution of C w = beta) and the attained value Q(w*)."""
    c = dataset.cov()
    if np.linalg.cond(c) > COND_LIMIT:
        raise IllPosedError("design second-moment matrix is numerically singular")
    w_star = np.linalg.solve(c, dataset.rhs())
    q_min, _ = q_value_and_grad(dataset, w_star)
    return w_star, q_min


def h_matrix(state: LinearFlowState) -> np.ndarray:
    """Preconditioner H = (1/4m) (sum_j b_j b_j^T + sum_j a_j^2 I)."""
    d = state.b.shape[1]
    return (state.b.T @ state.b + np.sum(state.a**2) * np.eye(d)) / (4.0 * state.m)


def linear_velocity(state: LinearFlowState) -> tuple[np.ndarray, np.ndarray]:
    """Particle velocity under activation z/2.

    a-component: mean_i R_i <b_j, x_i> / 2, b-component: mean_i R_i a_j x_i / 2
    with residual R = y - <w, x>. Since mean_i R_i x_i = -grad Q(w), both
    components contract through the single vector g = -grad Q.
    """
    _, grad = q_value_and_grad(state.dataset, state.w)
    g = -grad
    va = state.b @ g / 2.0
    vb = np.outer(state.a, g) / 2.0
    return va, vb


def step_mean_field_linear(
    state: LinearFlowState, eta: float, iteration: int | None = None
) -> LinearFlowState:
    """One explicit Euler step of the linear-activation particle flow."""
    with np.errstate(over="ignore", invalid="ignore"):
        va, vb = linear_velocity(state)
        a_new = state.a + eta * va
        b_new = state.b + eta * vb
    if not (np.all(np.isfinite(a_new)) and np.all(np.isfinite(b_new))):
        raise NumericalBlowupError("non-finite linear-flow update", iteration=iteration)
    return LinearFlowState(a=a_new, b=b_new, dataset=state.dataset)


def gd_on_q_baseline(
    dataset: Dataset, w0: np.ndarray, lr: float, steps: int
) -> np.ndarray:
    """Plain gradient descent on Q; returns the (steps+1, d) trajectory."""
    traj = np.empty((steps + 1, dataset.d))
    w = np.asarray(w0, dtype=float).copy()
    traj[0] = w
    for k in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            _, grad = q_value_and_grad(dataset, w)
            w = w - lr * grad
        if not np.all(np.isfinite(w)):
            raise NumericalBlowupError("non-finite GD update", iteration=k)
        traj[k + 1] = w
    return traj


def fit_exponential_rate(times: np.ndarray, gaps: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log(gap) over the final half of the series.

    Returns (rate, r_squared) with rate = -slope. Points with gap <= 1e-14
    are dropped first; fewer than 10 usable points is an error.
    """
    times = np.asarray(times, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    keep = gaps > 1e-14
    times, gaps = times[keep], gaps[keep]
    start = times.size // 2
    times, gaps = times[start:], gaps[start:]
    if times.size < 10:
        raise InsufficientDataError(f"only {times.size} usable points in the fit window")
    logg = np.log(gaps)
    slope, intercept = np.polyfit(times, logg, 1)
    fitted = slope * times + intercept
    ss_res = float(np.sum((logg - fitted) ** 2))
    ss_tot = float(np.sum((logg - logg.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), float(r2)
