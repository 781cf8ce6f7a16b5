"""Feature families: indicator grids and normalized Gaussian RBFs."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

__all__ = [
    "BasisSpec",
    "indicator_grid",
    "uniform_rbf",
    "eval_indicator",
    "eval_rbf",
    "featurize",
    "kmeans_centers",
    "grid_centers",
]

INDICATOR = "indicator-grid"
RBF = "normalized-rbf"


@dataclass(frozen=True)
class BasisSpec:
    """Immutable description of one feature family.

    Parameters
    ----------
    kind : {"indicator-grid", "normalized-rbf"}
    bounds : tuple of (lo, hi) per state dimension
    bins : bins per dimension (indicator only); ``m`` is their product
    centers : ``(m, d)`` array of RBF centers
    w : RBF smoothing parameter, ``w >= 0``
    """

    kind: str
    bounds: tuple
    bins: Optional[tuple] = None
    centers: Optional[np.ndarray] = None
    w: float = 1.0

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if not bounds or any(not lo < hi for lo, hi in bounds):
            raise ValueError("bounds need lo < hi in every dimension")
        object.__setattr__(self, "bounds", bounds)
        if self.kind == INDICATOR:
            if self.bins is None or len(self.bins) != len(bounds):
                raise ValueError("indicator grid needs one bin count per dimension")
            bins = tuple(int(b) for b in self.bins)
            if any(b < 1 for b in bins):
                raise ValueError("bin counts must be >= 1")
            object.__setattr__(self, "bins", bins)
        elif self.kind == RBF:
            if self.centers is None:
                raise ValueError("rbf basis needs centers")
            c = np.array(self.centers, dtype=float)
            if c.ndim == 1:
                c = c[:, None]
            if c.shape[1] != len(bounds) or c.shape[0] < 1:
                raise ValueError("centers must be (m, d) with d matching bounds")
            lo = np.array([b[0] for b in bounds])
            hi = np.array([b[1] for b in bounds])
            if np.any(c < lo - 1e-12) or np.any(c > hi + 1e-12):
                raise ValueError("rbf centers must lie within the domain bounds")
            c.setflags(write=False)
            object.__setattr__(self, "centers", c)
            if not (np.isfinite(self.w) and self.w >= 0):
                raise ValueError("w must be a finite number >= 0")
            object.__setattr__(self, "w", float(self.w))
        else:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def m(self) -> int:
        if self.kind == INDICATOR:
            return int(np.prod(self.bins))
        return self.centers.shape[0]

    def with_w(self, w: float) -> "BasisSpec":
        return replace(self, w=w)

    def __eq__(self, other):
        if not isinstance(other, BasisSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((self.kind, self.bounds, self.bins, self.w))

    def __call__(self, x) -> np.ndarray:
        return featurize(self, x)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "bounds": [list(b) for b in self.bounds]}
        if self.kind == INDICATOR:
            d["bins"] = list(self.bins)
        else:
            d["centers"] = self.centers.tolist()
            d["w"] = self.w
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        if d["kind"] == INDICATOR:
            return cls(INDICATOR, tuple(tuple(b) for b in d["bounds"]), bins=tuple(d["bins"]))
        return cls(RBF, tuple(tuple(b) for b in d["bounds"]), centers=np.asarray(d["centers"]), w=d["w"])


def grid_centers(bounds, bins) -> np.ndarray:
    """Bin centers of a uniform grid, flattened row-major (last axis fastest)."""
    axes = [lo + (np.arange(n) + 0.5) * (hi - lo) / n for (lo, hi), n in zip(bounds, bins)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def indicator_grid(bounds, bins) -> BasisSpec:
    if np.isscalar(bins):
        bins = (bins,)
    return BasisSpec(INDICATOR, tuple(bounds), bins=tuple(bins))


def uniform_rbf(bounds, m: int, w: float = 1.0) -> BasisSpec:
    """1D RBF basis with centers ``lo + (i - 1/2) (hi - lo) / m``."""
    (lo, hi), = bounds
    centers = lo + (np.arange(m) + 0.5) * (hi - lo) / m
    return BasisSpec(RBF, tuple(bounds), centers=centers[:, None], w=w)


def _as_states(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    if x.shape[1] != d:
        raise ValueError(f"state dimension {x.shape[1]} does not match basis dimension {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite state passed to basis")
    return x


def _bin_index(spec: BasisSpec, x: np.ndarray) -> np.ndarray:
    idx = np.zeros(x.shape[0], dtype=np.int64)
    for j, ((lo, hi), n) in enumerate(zip(spec.bounds, spec.bins)):
        k = np.floor((x[:, j] - lo) / (hi - lo) * n).astype(np.int64)
        idx = idx * n + np.clip(k, 0, n - 1)
    return idx


def eval_indicator(spec: BasisSpec, x) -> np.ndarray:
    """One-hot features; states outside the domain clamp to the boundary bin.

    Returns shape ``(m,)`` for a single state and ``(N, m)`` for ``N`` states.
    """
    if spec.kind != INDICATOR:
        raise ValueError("eval_indicator needs an indicator-grid basis")
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and spec.dim > 1)
    xs = _as_states(x, spec.dim)
    out = np.zeros((xs.shape[0], spec.m))
    out[np.arange(xs.shape[0]), _bin_index(spec, xs)] = 1.0
    return out[0] if single else out


def eval_rbf(spec: BasisSpec, x) -> np.ndarray:
    """Softmax-normalized Gaussian features ``exp(-w|x-c_i|^2) / sum_j exp(-w|x-c_j|^2)``."""
    if spec.kind != RBF:
        raise ValueError("eval_rbf needs a normalized-rbf basis")
    single = np.ndim(x) == 0 or (np.ndim(x) == 1 and spec.dim > 1)
    xs = _as_states(x, spec.dim)
    c = spec.centers
    d2 = (xs * xs).sum(1)[:, None] - 2.0 * xs @ c.T + (c * c).sum(1)[None, :]
    np.maximum(d2, 0.0, out=d2)
    z = -spec.w * d2
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z[0] if single else z


def featurize(spec: BasisSpec, x) -> np.ndarray:
    if spec.kind == INDICATOR:
        return eval_indicator(spec, x)
    return eval_rbf(spec, x)


def kmeans_centers(data, m: int, seed: int = 0, max_iter: int = 100) -> np.ndarray:
    """Lloyd k-means centers from a seeded draw of ``m`` distinct samples.

    ``data`` is a ``TrajectoryCollection`` or an ``(N, d)`` array. Empty
    clusters are reseeded with the sample farthest from its assigned center.
    """
    x = data.concatenated() if hasattr(data, "concatenated") else np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < m:
        raise ValueError(f"need at least m={m} samples, got {x.shape[0]}")
    distinct, first = np.unique(x, axis=0, return_index=True)
    if distinct.shape[0] < m:
        raise ValueError(f"m={m} exceeds the number of distinct samples ({distinct.shape[0]})")
    rng = np.random.default_rng(seed)
    # choose among distinct points, in order of first appearance for determinism
    candidates = np.sort(first)
    centers = x[rng.choice(candidates, size=m, replace=False)].copy()
    xx = (x * x).sum(1)
    labels = None
    for _ in range(max_iter):
        d2 = xx[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(1)[None, :]
        new = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=m)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            resid = d2[np.arange(x.shape[0]), labels]
            for j in np.flatnonzero(~nonempty):
                far = int(resid.argmax())
                centers[j] = x[far]
                resid[far] = -np.inf
            labels = None
    return centers
