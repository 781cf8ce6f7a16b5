"""Feature TCCA: optimal rank-k linear model in a fixed feature space."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .basis import INDICATOR, BasisSpec, featurize, grid_centers
from .covariance import CovarianceTriple, covariances_of_pairs, estimate_covariances, feature_pairs
from .trajectory_store import lagged_pair_count
from .whitening import EPS0, DecorrelationRecord, decorrelation_from_pairs

__all__ = [
    "KoopmanModel",
    "SingularCovarianceError",
    "spd_inv_sqrt",
    "feature_tcca",
    "fit_tcca",
    "koopman_matrix",
    "reconstruct_transition_density",
    "save_model",
    "load_model",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1


class SingularCovarianceError(np.linalg.LinAlgError):
    """A covariance that must be inverted is numerically singular."""


def spd_inv_sqrt(c: np.ndarray, eps: float = EPS0) -> np.ndarray:
    """Inverse square root of a symmetric positive definite matrix."""
    evals, evecs = np.linalg.eigh(0.5 * (c + c.T))
    if evals.min() <= eps:
        raise SingularCovarianceError(
            f"matrix is numerically singular (min eigenvalue {evals.min():.3g}); whiten the basis first")
    return (evecs / np.sqrt(evals)) @ evecs.T


@dataclass(frozen=True, eq=False)
class KoopmanModel:
    """Estimated singular triples ``(s_i, f_i, g_i)`` of the Koopman operator.

    ``f_i = U[:, i] . chi0`` and ``g_i = V[:, i] . chi1``, where ``chi0`` and
    ``chi1`` are the (whitened, if ``decorrelation`` is set) features.
    """

    singular_values: np.ndarray
    U: np.ndarray
    V: np.ndarray
    basis0: Optional[BasisSpec] = None
    basis1: Optional[BasisSpec] = None
    decorrelation: Optional[DecorrelationRecord] = None
    lag_steps: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def k(self) -> int:
        return self.singular_values.size

    @property
    def S(self) -> np.ndarray:
        return np.diag(self.singular_values)

    def truncate(self, k: int) -> "KoopmanModel":
        if not 1 <= k <= self.k:
            raise ValueError(f"k must be in [1, {self.k}]")
        return KoopmanModel(self.singular_values[:k], self.U[:, :k], self.V[:, :k], self.basis0,
                            self.basis1, self.decorrelation, self.lag_steps, dict(self.meta))

    def features0(self, x) -> np.ndarray:
        """Model-space start features of raw states ``x`` (rows)."""
        f = featurize(self.basis0, x)
        return self.decorrelation.apply0(f) if self.decorrelation is not None else f

    def features1(self, x) -> np.ndarray:
        f = featurize(self.basis1, x)
        return self.decorrelation.apply1(f) if self.decorrelation is not None else f

    def left_functions(self, x) -> np.ndarray:
        """Estimated left singular functions evaluated at ``x``, shape ``(N, k)``."""
        return self.features0(x) @ self.U

    def right_functions(self, x) -> np.ndarray:
        return self.features1(x) @ self.V

    def covariances(self, data, lag: Optional[int] = None) -> CovarianceTriple:
        """Covariances of ``data`` in this model's feature space."""
        return estimate_covariances(data, self.basis0, self.basis1, lag or self.lag_steps, self.decorrelation)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "lag_steps": self.lag_steps,
            "k": self.k,
            "singular_values": self.singular_values.tolist(),
            "U": self.U.tolist(),
            "V": self.V.tolist(),
            "basis0": self.basis0.to_dict() if self.basis0 is not None else None,
            "basis1": self.basis1.to_dict() if self.basis1 is not None else None,
            "decorrelation": self.decorrelation.to_dict() if self.decorrelation is not None else None,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KoopmanModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format_version {d.get('format_version')!r}")
        k = d["k"]
        U = np.asarray(d["U"], dtype=float).reshape(-1, k)
        V = np.asarray(d["V"], dtype=float).reshape(-1, k)
        b0 = BasisSpec.from_dict(d["basis0"]) if d.get("basis0") else None
        b1 = BasisSpec.from_dict(d["basis1"]) if d.get("basis1") else None
        dec = DecorrelationRecord.from_dict(d["decorrelation"]) if d.get("decorrelation") else None
        return cls(np.asarray(d["singular_values"], dtype=float), U, V, b0, b1, dec, int(d["lag_steps"]),
                   dict(d.get("meta") or {}))


def save_model(model: KoopmanModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=1))


def load_model(path) -> KoopmanModel:
    return KoopmanModel.from_dict(json.loads(Path(path).read_text()))


def _fix_signs(u: np.ndarray, v: np.ndarray):
    for i in range(u.shape[1]):
        col = u[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(np.abs(col).max(), 1e-300))
        if nz.size and col[nz[0]] < 0:
            u[:, i] *= -1
            v[:, i] *= -1


def feature_tcca(cov: CovarianceTriple, k: Optional[int] = None, eps: float = EPS0,
                 basis0: Optional[BasisSpec] = None, basis1: Optional[BasisSpec] = None) -> KoopmanModel:
    """Rank-``k`` truncated SVD of ``C00^-1/2 C01 C11^-1/2``.

    ``k=None`` keeps ``min(n, m)`` components. Left singular vectors are
    sign-normalized so their first nonzero entry is positive.
    """
    n, m = cov.C01.shape
    kmax = min(n, m)
    if k is None:
        k = kmax
    if not 1 <= k <= kmax:
        raise ValueError(f"k={k} outside [1, {kmax}]")
    r0 = spd_inv_sqrt(cov.C00, eps)
    r1 = spd_inv_sqrt(cov.C11, eps)
    kbar = r0 @ cov.C01 @ r1
    u, s, vt = np.linalg.svd(kbar, full_matrices=False)
    u, v = u[:, :k].copy(), vt[:k].T.copy()
    _fix_signs(u, v)
    return KoopmanModel(s[:k].copy(), r0 @ u, r1 @ v, basis0, basis1, cov.decorrelation, cov.lag_steps)


def fit_tcca(data, basis0: BasisSpec, basis1: Optional[BasisSpec], lag: int, k: Optional[int] = None,
             eps: float = EPS0, whiten: bool = True) -> KoopmanModel:
    """De-correlate, estimate covariances and run feature TCCA in one call."""
    basis1 = basis0 if basis1 is None else basis1
    if lagged_pair_count(data, lag) == 0:
        raise ValueError(f"no lagged pairs at lag {lag}")
    pairs = feature_pairs(data, basis0, basis1, lag)
    rec = decorrelation_from_pairs(pairs, eps) if whiten else None
    cov = covariances_of_pairs(pairs, lag, rec)
    return feature_tcca(cov, k, eps, basis0, basis1)


def koopman_matrix(cov: CovarianceTriple) -> np.ndarray:
    """Least-squares Koopman matrix ``C00^-1 C01`` (the EDMD/MSM estimate)."""
    try:
        if np.linalg.cond(cov.C00) > 1e14:
            raise np.linalg.LinAlgError
        return np.linalg.solve(cov.C00, cov.C01)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("C00 is singular") from None


def reconstruct_transition_density(model: KoopmanModel, stationary_weights) -> np.ndarray:
    """Rank-k transition matrix ``sum_i s_i f_i(x) g_i(y) mu(y)`` on bin centers.

    Rows index start bins of ``basis0``; columns index end bins of
    ``basis1``, weighted by ``stationary_weights`` (the end-point law).
    """
    for b in (model.basis0, model.basis1):
        if b is None or b.kind != INDICATOR:
            raise ValueError("transition density reconstruction needs indicator bases")
    mu = np.asarray(stationary_weights, dtype=float)
    if mu.size != model.basis1.m or np.any(mu < 0) or not np.isclose(mu.sum(), 1.0):
        raise ValueError("weights must be a probability vector over the end-space bins")
    x = grid_centers(model.basis0.bounds, model.basis0.bins)
    y = grid_centers(model.basis1.bounds, model.basis1.bins)
    f = model.left_functions(x)
    g = model.right_functions(y)
    return (f * model.singular_values) @ g.T * mu[None, :]
