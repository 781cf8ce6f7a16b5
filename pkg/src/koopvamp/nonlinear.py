"""Nonlinear TCCA: choose the RBF smoothing ``w`` by golden-section search on VAMP-2."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import BasisSpec, RBF
from .covariance import covariances_of_pairs, feature_pairs
from .scores import vamp_r_matrix
from .tcca import KoopmanModel, fit_tcca
from .whitening import EPS0, decorrelation_from_pairs

__all__ = ["GoldenSectionConfig", "SearchResult", "golden_section_max", "optimize_w", "nonlinear_tcca",
           "vamp2_of_w"]

LEFT, RIGHT = 0.618, 0.382


@dataclass(frozen=True)
class GoldenSectionConfig:
    """Search window in ``log w`` and stopping width.

    ``comparison="paired"`` compares ``max(R(a), R(c))`` with
    ``max(R(d), R(b))``. ``"overlapping"`` compares the triples
    ``{a, b, c}`` and ``{b, c, d}``; that rule can discard the bracket
    containing the maximum when ``c`` is the best probe.
    """

    log_lo: float = -6.0
    log_hi: float = 6.0
    tol: float = 1e-3
    r: int = 2
    max_iter: int = 200
    comparison: str = "paired"

    def __post_init__(self):
        if not self.log_lo < self.log_hi:
            raise ValueError("log_lo must be < log_hi")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.comparison not in ("paired", "overlapping"):
            raise ValueError("comparison must be 'paired' or 'overlapping'")


@dataclass
class SearchResult:
    x: float
    value: float
    iterations: int
    probes: list = field(default_factory=list)


def golden_section_max(objective: Callable[[float], float], cfg: GoldenSectionConfig = GoldenSectionConfig()
                       ) -> SearchResult:
    """Maximize a scalar function on ``[cfg.log_lo, cfg.log_hi]``.

    Returns the best probe seen. Failed evaluations (numerical exceptions
    or NaN) score ``-inf``. Values are
    cached by abscissa, so revisited points are not recomputed. Ties go to
    the right-hand bracket.
    """
    cache: dict = {}
    probes = []

    def f(x):
        if x not in cache:
            try:
                v = float(objective(x))
            except (ArithmeticError, ValueError, np.linalg.LinAlgError):
                v = -math.inf
            cache[x] = -math.inf if math.isnan(v) else v
            probes.append((x, cache[x]))
        return cache[x]

    a, b = cfg.log_lo, cfg.log_hi
    c, d = LEFT * a + RIGHT * b, RIGHT * a + LEFT * b
    it = 0
    while True:
        fa, fb, fc, fd = f(a), f(b), f(c), f(d)
        if abs(a - b) < cfg.tol or it >= cfg.max_iter:
            break
        if cfg.comparison == "paired":
            go_left = max(fa, fc) > max(fd, fb)
        else:
            go_left = max(fa, fb, fc) > max(fb, fc, fd)
        if go_left:
            a, b, c, d = a, d, LEFT * a + RIGHT * d, c
        else:
            a, b, c, d = c, b, d, LEFT * b + RIGHT * c
        it += 1
    # best over every probe, so the result is never worse than the endpoints
    best = max(cache, key=lambda x: (cache[x], -abs(x - 0.5 * (a + b))))
    return SearchResult(best, cache[best], it, probes)


def vamp2_of_w(data, template: BasisSpec, lag: int, r: int = 2, eps: float = EPS0) -> Callable[[float], float]:
    """Objective ``log w -> ||C00^-1/2 C01 C11^-1/2||_r^r`` on whitened features."""

    def objective(log_w: float) -> float:
        basis = template.with_w(math.exp(log_w))
        pairs = feature_pairs(data, basis, basis, lag)
        cov = covariances_of_pairs(pairs, lag, decorrelation_from_pairs(pairs, eps))
        return vamp_r_matrix(cov, r, eps)

    return objective


def optimize_w(data, template: BasisSpec, lag: int, cfg: GoldenSectionConfig = GoldenSectionConfig(),
               eps: float = EPS0):
    """Golden-section search for the RBF smoothing parameter.

    Returns ``(w_star, objective_value)``; the search runs in ``log w``.
    """
    if template.kind != RBF:
        raise ValueError("w optimization needs a normalized-rbf basis")
    res = golden_section_max(vamp2_of_w(data, template, lag, cfg.r, eps), cfg)
    return math.exp(res.x), res.value


def nonlinear_tcca(data, template: BasisSpec, lag: int, k: Optional[int] = None,
                   cfg: Optional[GoldenSectionConfig] = GoldenSectionConfig(), eps: float = EPS0) -> KoopmanModel:
    """Optimize ``w`` (skipped when ``cfg`` is None) and run whitened feature TCCA.

    ``k=None`` keeps ``min(dim chi0, dim chi1)`` components.
    """
    if cfg is None:
        basis, value = template, None
    else:
        w, value = optimize_w(data, template, lag, cfg, eps)
        basis = template.with_w(w)
    model = fit_tcca(data, basis, basis, lag, k, eps)
    model.meta.update({"w": basis.w, "w_objective": value})
    return model
