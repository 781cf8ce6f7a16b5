"""Instantaneous and time-lagged covariance matrices of featurized pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .basis import BasisSpec, featurize
from .trajectory_store import TrajectoryCollection, lagged_pair_count

__all__ = ["CovarianceTriple", "estimate_covariances", "covariances_from_features", "CompensatedSum",
           "feature_pairs", "covariances_of_pairs"]

CHUNK = 8192


class CompensatedSum:
    """Neumaier-compensated running sum of equally shaped arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, x):
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self._comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t

    @property
    def value(self) -> np.ndarray:
        return self.total + self._comp


@dataclass(frozen=True, eq=False)
class CovarianceTriple:
    """``C00``, ``C01``, ``C11`` averaged over ``pair_count`` lagged pairs."""

    C00: np.ndarray
    C01: np.ndarray
    C11: np.ndarray
    pair_count: int
    lag_steps: int
    decorrelation: Optional[object] = None

    @property
    def shape(self):
        return self.C01.shape

    def block(self) -> np.ndarray:
        """The stacked ``[[C00, C01], [C01^T, C11]]`` second-moment matrix."""
        return np.block([[self.C00, self.C01], [self.C01.T, self.C11]])


def rechunk(pairs, size: int = CHUNK):
    """Regroup ``(X, Y)`` blocks into row-aligned chunks of about ``size`` rows."""
    bx, by, n = [], [], 0
    for X, Y in pairs:
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("start and end feature blocks must have equal length")
        for s in range(0, X.shape[0], size):
            bx.append(X[s:s + size])
            by.append(Y[s:s + size])
            n += bx[-1].shape[0]
            if n >= size:
                yield np.concatenate(bx), np.concatenate(by)
                bx, by, n = [], [], 0
    if bx:
        yield np.concatenate(bx), np.concatenate(by)


def _sym(a):
    return 0.5 * (a + a.T)


def covariances_from_features(pairs, lag: int = 1, decorrelation=None) -> CovarianceTriple:
    """Accumulate covariances from an iterable of ``(X, Y)`` feature blocks.

    ``X`` holds features of pair start points and ``Y`` features of pair end
    points, row-aligned.
    """
    acc = None
    count = 0
    for X, Y in rechunk(pairs):
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise ValueError("non-finite feature values")
        if acc is None:
            n, m = X.shape[1], Y.shape[1]
            acc = (CompensatedSum((n, n)), CompensatedSum((n, m)), CompensatedSum((m, m)))
        acc[0].add(X.T @ X)
        acc[1].add(X.T @ Y)
        acc[2].add(Y.T @ Y)
        count += X.shape[0]
    if acc is None or count == 0:
        raise ValueError("no lagged pairs available for covariance estimation")
    c00, c01, c11 = (a.value / count for a in acc)
    return CovarianceTriple(_sym(c00), c01, _sym(c11), count, lag, decorrelation)


def _feature_map(basis) -> Callable:
    if isinstance(basis, BasisSpec):
        return lambda x: featurize(basis, x)
    if callable(basis):
        return basis
    raise TypeError("basis must be a BasisSpec or a callable feature map")


def feature_pairs(c: TrajectoryCollection, basis0, basis1, lag: int) -> list:
    """Featurized ``(X, Y)`` blocks per trajectory.

    When both sides share one basis each trajectory is featurized once and
    sliced, since start and end points overlap.
    """
    f0, f1 = _feature_map(basis0), _feature_map(basis1)
    same = basis0 is basis1 or (isinstance(basis0, BasisSpec) and basis0 == basis1)
    out = []
    for traj in c.trajectories:
        if traj.shape[0] <= lag:
            continue
        if same:
            F = f0(traj)
            out.append((F[:-lag], F[lag:]))
        else:
            out.append((f0(traj[:-lag]), f1(traj[lag:])))
    return out


def estimate_covariances(c: TrajectoryCollection, basis0, basis1, lag: int,
                         decorrelation=None) -> CovarianceTriple:
    """Direct estimators of ``C00``, ``C01``, ``C11`` at ``lag`` steps.

    Pairs never cross trajectory boundaries; all pairs share one divisor.
    With a ``decorrelation`` record the raw features are whitened (and the
    constant appended) before accumulation.

    Parameters
    ----------
    c : TrajectoryCollection
    basis0, basis1 : BasisSpec or callable
        Feature maps for pair start and end points.
    lag : int
        Lag in steps.
    decorrelation : DecorrelationRecord, optional
    """
    if lagged_pair_count(c, lag) == 0:
        raise ValueError(f"no lagged pairs at lag {lag}")
    return covariances_of_pairs(feature_pairs(c, basis0, basis1, lag), lag, decorrelation)


def covariances_of_pairs(pairs, lag: int, decorrelation=None) -> CovarianceTriple:
    """Covariances of precomputed raw feature blocks, whitened when a record is given."""
    if decorrelation is not None:
        w0, w1 = decorrelation.apply0, decorrelation.apply1
    else:
        w0 = w1 = None

    def blocks():
        for X, Y in pairs:
            if w0 is not None:
                X, Y = w0(X), w1(Y)
            yield X, Y

    return covariances_from_features(blocks(), lag, decorrelation)
