"""PCA de-correlation of basis functions with an appended constant feature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CompensatedSum, feature_pairs, rechunk
from .trajectory_store import TrajectoryCollection, lagged_pair_count

__all__ = ["DecorrelationRecord", "decorrelate", "apply_decorrelation", "DegenerateBasisError",
           "decorrelation_from_pairs"]

EPS0 = 1e-10


class DegenerateBasisError(ValueError):
    """No basis direction has variance above the threshold."""


def _whitener(cov: np.ndarray, eps: float):
    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    keep = np.abs(evals) > eps
    # descending variance order
    order = np.argsort(-np.abs(evals[keep]))
    lam = np.abs(evals[keep])[order]
    q = evecs[:, keep][:, order]
    return q / np.sqrt(lam)[None, :]


@dataclass(frozen=True, eq=False)
class DecorrelationRecord:
    """Means and projections mapping raw features to whitened ones.

    ``proj0`` is ``(n, kept0)``; a raw start feature vector ``chi`` maps to
    ``[(chi - mean0) @ proj0, 1]``. Same for the end side.
    """

    mean0: np.ndarray
    mean1: np.ndarray
    proj0: np.ndarray
    proj1: np.ndarray
    eps: float = EPS0

    @property
    def kept0(self) -> int:
        return self.proj0.shape[1]

    @property
    def kept1(self) -> int:
        return self.proj1.shape[1]

    @property
    def n_in(self) -> tuple:
        return self.proj0.shape[0], self.proj1.shape[0]

    @property
    def n_out(self) -> tuple:
        return self.kept0 + 1, self.kept1 + 1

    def apply0(self, features: np.ndarray) -> np.ndarray:
        return _apply(features, self.mean0, self.proj0)

    def apply1(self, features: np.ndarray) -> np.ndarray:
        return _apply(features, self.mean1, self.proj1)

    def to_dict(self) -> dict:
        return {
            "mean0": self.mean0.tolist(), "mean1": self.mean1.tolist(),
            "proj0": self.proj0.tolist(), "proj1": self.proj1.tolist(),
            "kept0": self.kept0, "kept1": self.kept1, "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecorrelationRecord":
        def mat(key, n_in, k):
            return np.asarray(d[key], dtype=float).reshape(n_in, k)
        m0 = np.asarray(d["mean0"], dtype=float)
        m1 = np.asarray(d["mean1"], dtype=float)
        return cls(m0, m1, mat("proj0", m0.size, d["kept0"]), mat("proj1", m1.size, d["kept1"]), d["eps"])


def _apply(features, mean, proj):
    f = np.asarray(features, dtype=float)
    single = f.ndim == 1
    f = np.atleast_2d(f)
    if f.shape[1] != mean.size:
        raise ValueError(f"feature length {f.shape[1]} does not match record ({mean.size})")
    out = np.empty((f.shape[0], proj.shape[1] + 1))
    out[:, :-1] = (f - mean) @ proj
    out[:, -1] = 1.0
    return out[0] if single else out


def apply_decorrelation(rec: DecorrelationRecord, features, side: int = 0) -> np.ndarray:
    """Whiten ``features`` (one vector or rows) for the start (0) or end (1) side."""
    return rec.apply0(features) if side == 0 else rec.apply1(features)


def decorrelate(c: TrajectoryCollection, basis0, basis1, lag: int, eps: float = EPS0,
                strict: bool = False) -> DecorrelationRecord:
    """Fit the de-correlation transform on the lagged pairs of ``c``.

    Means and covariances are taken over pair start points (for ``basis0``)
    and pair end points (for ``basis1``). Eigen-directions with
    ``|lambda| <= eps`` are dropped. When every direction is dropped the
    record keeps only the constant feature, unless ``strict`` is set.
    """
    if lagged_pair_count(c, lag) == 0:
        raise ValueError(f"no lagged pairs at lag {lag}")
    return decorrelation_from_pairs(feature_pairs(c, basis0, basis1, lag), eps, strict)


def decorrelation_from_pairs(pairs, eps: float = EPS0, strict: bool = False) -> DecorrelationRecord:
    """Same as :func:`decorrelate` on precomputed raw ``(X, Y)`` feature blocks."""
    s0 = s1 = ss0 = ss1 = None
    n_pairs = 0
    for X, Y in rechunk(pairs):
        if s0 is None:
            s0, s1 = CompensatedSum(X.shape[1]), CompensatedSum(Y.shape[1])
            ss0 = CompensatedSum((X.shape[1],) * 2)
            ss1 = CompensatedSum((Y.shape[1],) * 2)
        s0.add(X.sum(0))
        s1.add(Y.sum(0))
        ss0.add(X.T @ X)
        ss1.add(Y.T @ Y)
        n_pairs += X.shape[0]
    if n_pairs == 0:
        raise ValueError("no lagged pairs")
    pi0, pi1 = s0.value / n_pairs, s1.value / n_pairs
    cov0 = ss0.value / n_pairs - np.outer(pi0, pi0)
    cov1 = ss1.value / n_pairs - np.outer(pi1, pi1)
    p0, p1 = _whitener(cov0, eps), _whitener(cov1, eps)
    if strict and (p0.shape[1] == 0 or p1.shape[1] == 0):
        raise DegenerateBasisError("all covariance eigenvalues are below the threshold")
    return DecorrelationRecord(pi0, pi1, p0, p1, eps)
