"""J-fold cross-validation of feature and nonlinear TCCA hyper-parameters."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .basis import INDICATOR, RBF, BasisSpec, indicator_grid, kmeans_centers, uniform_rbf
from .nonlinear import GoldenSectionConfig, optimize_w
from .scores import ScoreSpec, SingularProjectionError, exact_vamp_e, score
from .tcca import fit_tcca
from .trajectory_store import FoldAssignment, TrajectoryCollection
from .whitening import EPS0

__all__ = ["HyperParamPoint", "CvCell", "CvReport", "cross_validate", "build_basis", "fit_point",
           "exact_cv_curve"]

FULL = "full"


@dataclass(frozen=True)
class HyperParamPoint:
    """One hyper-parameter set.

    Parameters
    ----------
    kind : {"indicator-grid", "normalized-rbf"}
    m : int
        Basis size. Indicator grids take ``bins`` instead when the state is
        more than one-dimensional.
    bounds : tuple of (lo, hi) pairs
    w : float
        Fixed smoothing, or the initial value when ``optimize_w`` is set.
    optimize_w : bool
        Run the golden-section search on each training fold.
    k : int or "full"
    lag : int
        Lag in steps.
    centers : {"uniform", "kmeans"}
        Center placement for rbf bases; k-means uses the training fold only.
    bins : tuple of int, optional
    """

    kind: str
    m: int
    bounds: tuple
    w: float = 1.0
    optimize_w: bool = False
    k: Union[int, str] = FULL
    lag: int = 1
    centers: str = "uniform"
    bins: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (INDICATOR, RBF):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.k != FULL and (int(self.k) != self.k or self.k < 1):
            raise ValueError("k must be a positive integer or 'full'")
        if self.lag < 1:
            raise ValueError("lag must be >= 1")
        if self.centers not in ("uniform", "kmeans"):
            raise ValueError("centers must be 'uniform' or 'kmeans'")
        if self.optimize_w and self.kind != RBF:
            raise ValueError("w optimization needs a normalized-rbf basis")

    @property
    def k_value(self) -> Optional[int]:
        return None if self.k == FULL else int(self.k)

    @property
    def _k_sort(self) -> float:
        return math.inf if self.k == FULL else float(self.k)


def build_basis(point: HyperParamPoint, train: TrajectoryCollection, seed: int = 0) -> BasisSpec:
    """Basis for ``point`` whose data-dependent parts come from ``train`` only."""
    if point.kind == INDICATOR:
        bins = point.bins if point.bins is not None else (point.m,)
        return indicator_grid(point.bounds, bins)
    if point.centers == "kmeans":
        centers = kmeans_centers(train.concatenated(), point.m, seed=seed)
        return BasisSpec(RBF, point.bounds, centers=centers, w=point.w)
    return uniform_rbf(point.bounds, point.m, point.w)


def fit_point(point: HyperParamPoint, train: TrajectoryCollection, gs: GoldenSectionConfig = GoldenSectionConfig(),
              eps: float = EPS0, seed: int = 0):
    """Fit feature TCCA (fixed ``w``) or nonlinear TCCA (optimized ``w``)."""
    basis = build_basis(point, train, seed)
    if point.optimize_w:
        w, _ = optimize_w(train, basis, point.lag, gs, eps)
        basis = basis.with_w(w)
    return fit_tcca(train, basis, basis, point.lag, point.k_value, eps)


@dataclass
class CvCell:
    theta_id: int
    fold: int
    train_score: float
    test_score: float
    w: float = math.nan
    error: str = ""


@dataclass
class CvReport:
    """Per-cell scores, mean CV score per point and the selected point."""

    grid: list
    cells: list
    score_spec: ScoreSpec
    folds: FoldAssignment
    mcv: list = field(init=False)
    selected: int = field(init=False)

    def __post_init__(self):
        self.mcv = [float(np.mean(self.fold_scores(t))) for t in range(len(self.grid))]
        self.selected = self._select()

    def fold_scores(self, theta_id: int, which: str = "test") -> np.ndarray:
        cells = sorted((c for c in self.cells if c.theta_id == theta_id), key=lambda c: c.fold)
        return np.array([getattr(c, f"{which}_score") for c in cells])

    def train_means(self) -> list:
        return [float(np.mean(self.fold_scores(t, "train"))) for t in range(len(self.grid))]

    def _select(self) -> int:
        best = max(self.mcv)
        # ties go to the smaller model
        ties = [t for t, v in enumerate(self.mcv) if v == best]
        return min(ties, key=lambda t: (self.grid[t].m, self.grid[t]._k_sort, t))

    @property
    def best(self) -> HyperParamPoint:
        return self.grid[self.selected]

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["theta_id", "basis", "m", "w", "k", "fold", "train_score", "test_score"])
        for c in sorted(self.cells, key=lambda c: (c.theta_id, c.fold)):
            p = self.grid[c.theta_id]
            w = c.w if (p.optimize_w and math.isfinite(c.w)) else p.w
            wtxt = "inf" if p.kind == INDICATOR else repr(float(w))
            out.writerow([c.theta_id, p.kind, p.m, wtxt, p.k, c.fold, repr(c.train_score), repr(c.test_score)])
        out.writerow([])
        out.writerow(["theta_id", "mcv", "selected"])
        for t, v in enumerate(self.mcv):
            out.writerow([t, repr(v), int(t == self.selected)])
        return buf.getvalue()


def _run_cell(data, point, theta_id, folds, j, spec, gs, eps, seed) -> CvCell:
    train = data.subset(folds.train_blocks(j))
    test = data.subset(folds.test_blocks(j))
    try:
        model = fit_point(point, train, gs, eps, seed)
        tr = score(model, model.covariances(train, point.lag), spec)
        # test features go through the training basis and training whitening
        te = score(model, model.covariances(test, point.lag), spec)
        if not (math.isfinite(tr) and math.isfinite(te)):
            raise FloatingPointError("non-finite score")
        return CvCell(theta_id, j, tr, te, model.basis0.w)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, SingularProjectionError) as exc:
        return CvCell(theta_id, j, -math.inf, -math.inf, math.nan, f"{type(exc).__name__}: {exc}")


def cross_validate(data: TrajectoryCollection, grid: Sequence[HyperParamPoint], folds: FoldAssignment,
                   score_spec: ScoreSpec = ScoreSpec("vamp-e"), gs: GoldenSectionConfig = GoldenSectionConfig(),
                   eps: float = EPS0, n_jobs: int = 1, seed: int = 0) -> CvReport:
    """Score every grid point on every fold.

    A cell that fails numerically (fold too small, singular projection)
    scores ``-inf`` and the run continues. ``n_jobs`` threads evaluate cells
    concurrently; the report does not depend on the execution order.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty hyper-parameter grid")
    for p in grid:
        folds.check_lag(p.lag)
    tasks = [(t, j) for t in range(len(grid)) for j in range(folds.n_folds)]

    def run(task):
        t, j = task
        return _run_cell(data, grid[t], t, folds, j, score_spec, gs, eps, seed)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            cells = list(pool.map(run, tasks))
    else:
        cells = [run(task) for task in tasks]
    return CvReport(grid, cells, score_spec, folds)


def exact_cv_curve(report_grid: Sequence[HyperParamPoint], data: TrajectoryCollection, truth,
                   gs: GoldenSectionConfig = GoldenSectionConfig(), eps: float = EPS0, seed: int = 0) -> list:
    """Exact VAMP-E of models fitted on all of ``data``, one per grid point."""
    out = []
    for p in report_grid:
        try:
            out.append(exact_vamp_e(fit_point(p, data, gs, eps, seed), truth))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            out.append(-math.inf)
    return out

