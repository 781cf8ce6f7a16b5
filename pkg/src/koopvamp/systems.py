"""Reference systems: exact discretized oracles and seeded simulators.

* ``onedim``: the double-well style map on [-20, 20], 2000 bins, lag 1.
* ``double-gyre``: stochastic double gyre on [0, 2] x [0, 1], 50 x 25 bins,
  step 0.02, lag 2 (100 steps).
* ``lorenz``: stochastic Lorenz SDE with multiplicative noise (no oracle).
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import BasisSpec, grid_centers, indicator_grid
from .trajectory_store import TrajectoryCollection

__all__ = [
    "TruthModel",
    "stationary_distribution",
    "truth_from_transition_matrix",
    "build_onedim_truth",
    "simulate_onedim",
    "build_double_gyre_truth",
    "simulate_double_gyre",
    "simulate_lorenz",
    "eta_map",
    "trajectory_rng",
    "DivergenceError",
    "ONEDIM_BOUNDS",
    "GYRE_BOUNDS",
]

ONEDIM_BOUNDS = ((-20.0, 20.0),)
ONEDIM_BINS = 2000
ONEDIM_NOISE_VAR = 10.0

GYRE_BOUNDS = ((0.0, 2.0), (0.0, 1.0))
GYRE_BINS = (50, 25)
GYRE_A = 0.25
GYRE_EPS = 0.1
GYRE_DT = 0.02
GYRE_LAG_TIME = 2.0

LORENZ_S, LORENZ_R, LORENZ_B = 10.0, 28.0, 8.0 / 3.0
LORENZ_EPS = 0.3
LORENZ_DT = 0.005
LORENZ_LAG_TIME = 0.75
LORENZ_INIT_BOX = ((-20.0, 20.0), (-25.0, 25.0), (5.0, 45.0))
LORENZ_BURN_IN = 2.0


class DivergenceError(RuntimeError):
    pass


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``index``; independent of sibling streams."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


@dataclass(frozen=True, eq=False)
class TruthModel:
    """Exact discrete oracle of a reference system at its analysis lag.

    ``psi`` and ``phi`` hold the leading ``n_components`` singular functions
    on the bin centers; ``sigma`` holds all singular values.
    """

    name: str
    centers: np.ndarray
    basis: BasisSpec
    mu: np.ndarray
    mu1: np.ndarray
    P: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray
    phi: np.ndarray
    lag_steps: int = 1
    dt: float = 1.0
    one_step: Optional[np.ndarray] = None

    @property
    def hs_norm_sq(self) -> float:
        return float(np.sum(self.sigma ** 2))

    def relative_truncation_error(self, k: int) -> float:
        """Relative HS error of the rank-k truncation of the exact operator."""
        return float(np.sqrt(np.sum(self.sigma[k:] ** 2) / self.hs_norm_sq))


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Left null vector of ``P - I`` normalized to a probability vector."""
    n = P.shape[0]
    a = P.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    mu = np.linalg.solve(a, b)
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def _readonly(*arrays):
    for a in arrays:
        if a is not None:
            a.setflags(write=False)


def truth_from_transition_matrix(name, P, basis: BasisSpec, lag_steps=1, dt=1.0, n_components=10,
                                 mu=None, one_step=None) -> TruthModel:
    """Exact singular components of a finite chain via feature TCCA on indicators.

    With indicator features the exact covariances are ``C00 = diag(mu)``,
    ``C01 = diag(mu) P`` and ``C11 = diag(mu P)``.
    """
    from .covariance import CovarianceTriple
    from .tcca import feature_tcca

    P = np.asarray(P, dtype=float)
    mu = stationary_distribution(P) if mu is None else np.asarray(mu, dtype=float)
    mu1 = mu @ P
    cov = CovarianceTriple(np.diag(mu), mu[:, None] * P, np.diag(mu1), 0, lag_steps)
    model = feature_tcca(cov, None, eps=0.0)
    k = min(n_components, P.shape[0])
    sigma = model.singular_values
    psi, phi = model.U[:, :k].copy(), model.V[:, :k].copy()
    centers = grid_centers(basis.bounds, basis.bins)
    _readonly(P, mu, mu1, sigma, psi, phi, centers, one_step)
    return TruthModel(name, centers, basis, mu, mu1, P, sigma, psi, phi, lag_steps, dt, one_step)


def _row_normalized_gaussian(log_kernel: np.ndarray) -> np.ndarray:
    log_kernel -= log_kernel.max(axis=1, keepdims=True)
    P = np.exp(log_kernel)
    P /= P.sum(axis=1, keepdims=True)
    return P


def onedim_drift(x):
    return x / 2 + 7 * x / (1 + 0.12 * x ** 2) + 6 * np.cos(x)


@functools.lru_cache(maxsize=2)
def build_onedim_truth(n_bins: int = ONEDIM_BINS, n_components: int = 10) -> TruthModel:
    """Discretized oracle of the 1D system on ``n_bins`` uniform bins (lag 1)."""
    basis = indicator_grid(ONEDIM_BOUNDS, (n_bins,))
    s = grid_centers(basis.bounds, basis.bins)[:, 0]
    P = _row_normalized_gaussian(-(s[None, :] - onedim_drift(s)[:, None]) ** 2 / (2 * ONEDIM_NOISE_VAR))
    return truth_from_transition_matrix("onedim", P, basis, 1, 1.0, n_components)


def _sample_chain(P: np.ndarray, mu: np.ndarray, n_traj: int, length: int, seed: int):
    """Bin sequences of a finite chain started from ``mu``; one stream per trajectory."""
    cum = np.cumsum(P, axis=1)
    cum[:, -1] = 1.0
    cmu = np.cumsum(mu)
    cmu[-1] = 1.0
    rngs = [trajectory_rng(seed, i) for i in range(n_traj)]
    u = np.stack([r.random(length) for r in rngs])
    states = np.empty((n_traj, length), dtype=np.int64)
    states[:, 0] = np.searchsorted(cmu, u[:, 0], side="right")
    for t in range(1, length):
        rows = cum[states[:, t - 1]]
        states[:, t] = (rows <= u[:, t, None]).sum(axis=1)
    np.minimum(states, P.shape[0] - 1, out=states)
    return states, rngs


def _uniform_in_bins(states: np.ndarray, basis: BasisSpec, rngs) -> list:
    """Continuous states drawn uniformly inside each visited bin."""
    lo = np.array([b[0] for b in basis.bounds])
    width = np.array([(hi - l) / n for (l, hi), n in zip(basis.bounds, basis.bins)])
    trajs = []
    for i, seq in enumerate(states):
        multi = np.array(np.unravel_index(seq, basis.bins)).T
        offset = rngs[i].random(multi.shape)
        trajs.append(lo + (multi + offset) * width)
    return trajs


def simulate_onedim(n_traj: int = 10, length: int = 500, seed: int = 0,
                    truth: Optional[TruthModel] = None) -> TrajectoryCollection:
    """Trajectories of the discretized 1D chain, stationary start, uniform within bins."""
    truth = truth or build_onedim_truth()
    states, rngs = _sample_chain(truth.P, truth.mu, n_traj, length, seed)
    return TrajectoryCollection(tuple(_uniform_in_bins(states, truth.basis, rngs)), 1.0)


def double_gyre_one_step(A=GYRE_A, eps=GYRE_EPS, dt=GYRE_DT, bins=GYRE_BINS, scale_noise_by_dt=True):
    """One-step transition matrix of the spatially discretized double gyre.

    ``scale_noise_by_dt=False`` uses variances ``eps^2 (x/4 + 1)`` and
    ``eps^2`` without the step factor.
    """
    centers = grid_centers(GYRE_BOUNDS, bins)
    x, y = centers[:, 0], centers[:, 1]
    f = dt if scale_noise_by_dt else 1.0
    vx = eps ** 2 * (x / 4 + 1) * f
    vy = eps ** 2 * f
    mx = x - np.pi * A * np.sin(np.pi * x) * np.cos(np.pi * y) * dt
    my = y + np.pi * A * np.cos(np.pi * x) * np.sin(np.pi * y) * dt
    logk = (-(x[None, :] - mx[:, None]) ** 2 / (2 * vx[:, None])
            - (y[None, :] - my[:, None]) ** 2 / (2 * vy))
    return _row_normalized_gaussian(logk)


@functools.lru_cache(maxsize=2)
def build_double_gyre_truth(scale_noise_by_dt: bool = True, n_components: int = 10) -> TruthModel:
    """1250-state double-gyre oracle at lag 2 (the 100th power of the one-step chain)."""
    P1 = double_gyre_one_step(scale_noise_by_dt=scale_noise_by_dt)
    steps = int(round(GYRE_LAG_TIME / GYRE_DT))
    Pt = np.linalg.matrix_power(P1, steps)
    Pt /= Pt.sum(axis=1, keepdims=True)
    mu = stationary_distribution(P1)
    basis = indicator_grid(GYRE_BOUNDS, GYRE_BINS)
    return truth_from_transition_matrix("double-gyre", Pt, basis, steps, GYRE_DT, n_components, mu=mu,
                                        one_step=P1)


def simulate_double_gyre(n_traj: int = 10, length_time: float = 4.0, seed: int = 0,
                         truth: Optional[TruthModel] = None) -> TrajectoryCollection:
    """Samples of the one-step double-gyre chain, ``length_time / 0.02`` points each."""
    truth = truth or build_double_gyre_truth()
    length = int(round(length_time / GYRE_DT))
    states, rngs = _sample_chain(truth.one_step, truth.mu, n_traj, length, seed)
    return TrajectoryCollection(tuple(_uniform_in_bins(states, truth.basis, rngs)), GYRE_DT)


def simulate_lorenz(n_traj: int = 20, length_time: float = 25.0, seed: int = 0, eps: float = LORENZ_EPS,
                    dt: float = LORENZ_DT, burn_in: float = LORENZ_BURN_IN) -> TrajectoryCollection:
    """Euler-Maruyama paths of the stochastic Lorenz system.

    Noise is multiplicative (``eps * x dW1`` etc.) with three independent
    Wiener increments. Starts are uniform in a box around the attractor and
    the first ``burn_in`` time units are discarded.
    """
    n_steps = length_time / dt
    if abs(n_steps - round(n_steps)) > 1e-9:
        raise ValueError("length_time must be an integer multiple of dt")
    n_steps = int(round(n_steps))
    n_burn = int(round(burn_in / dt))
    sq = np.sqrt(dt)
    box = np.array(LORENZ_INIT_BOX)
    trajs = []
    for i in range(n_traj):
        rng = trajectory_rng(seed, i)
        z = box[:, 0] + rng.random(3) * (box[:, 1] - box[:, 0])
        noise = rng.standard_normal((n_burn + n_steps, 3)) * sq
        out = np.empty((n_steps, 3))
        for t in range(n_burn + n_steps):
            x, y, w = z
            drift = np.array([LORENZ_S * (y - x), LORENZ_R * x - y - x * w, -LORENZ_B * w + x * y])
            z = z + drift * dt + eps * z * noise[t]
            if not np.all(np.abs(z) < 1e6):
                raise DivergenceError(f"trajectory {i} diverged at step {t}: state {z}")
            if t >= n_burn:
                out[t - n_burn] = z
        trajs.append(out)
    return TrajectoryCollection(tuple(trajs), dt)


def eta_map(x, y=None, z=None) -> np.ndarray:
    """Six trigonometric observables of a Lorenz state (rows of ``(N, 3)`` or scalars)."""
    if y is None:
        s = np.asarray(x, dtype=float)
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
    x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
    amp = z / 50 + 0.5
    phase = z / 50 - 1
    return np.stack([
        amp * np.cos(np.pi * x / 30 + phase),
        amp * np.sin(np.pi * x / 30 + phase),
        amp * np.cos(np.pi * y / 30 + phase),
        amp * np.sin(np.pi * y / 30 + phase),
        np.cos(np.pi * (x + y) / 40),
        np.cos(np.pi * (x - y) / 40),
    ], axis=-1)
