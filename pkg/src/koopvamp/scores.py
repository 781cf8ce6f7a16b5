"""VAMP-r, VAMP-E and subspace VAMP-r scores; Hilbert-Schmidt error vs an oracle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .covariance import CovarianceTriple
from .tcca import KoopmanModel, SingularCovarianceError, spd_inv_sqrt
from .whitening import EPS0

__all__ = [
    "ScoreSpec",
    "SingularProjectionError",
    "vamp_r",
    "vamp_r_matrix",
    "vamp_e",
    "subspace_vamp_r",
    "score",
    "HSError",
    "oracle_covariances",
    "hs_error_vs_oracle",
    "exact_vamp_e",
]

SCORE_KINDS = ("vamp-r", "vamp-e", "subspace-vamp-r")


class SingularProjectionError(np.linalg.LinAlgError):
    """Projected test covariance ``U^T C00 U`` or ``V^T C11 V`` is singular."""


@dataclass(frozen=True)
class ScoreSpec:
    kind: str = "vamp-e"
    r: int = 2

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}; expected one of {SCORE_KINDS}")
        if int(self.r) != self.r or self.r < 1:
            raise ValueError("r must be a positive integer")

    def label(self) -> str:
        return self.kind if self.kind == "vamp-e" else f"{self.kind}{self.r}"


def _check_dims(model: KoopmanModel, cov: CovarianceTriple):
    n, m = cov.C01.shape
    if model.U.shape[0] != n or model.V.shape[0] != m:
        raise ValueError(f"model dimensions {model.U.shape[0]}x{model.V.shape[0]} do not match covariances {n}x{m}")


def vamp_r(model: KoopmanModel, cov: CovarianceTriple, r: int = 2) -> float:
    """``sum_i (u_i^T C01 v_i)^r`` on the supplied covariances."""
    _check_dims(model, cov)
    corr = np.einsum("ik,ij,jk->k", model.U, cov.C01, model.V)
    return float(np.sum(corr ** r))


def _schatten(a: np.ndarray, r: int) -> float:
    return float(np.sum(np.linalg.svd(a, compute_uv=False) ** r))


def vamp_r_matrix(cov: CovarianceTriple, r: int = 2, eps: float = EPS0) -> float:
    """``|| C00^-1/2 C01 C11^-1/2 ||_r^r``, the full-rank VAMP-r optimum."""
    kbar = spd_inv_sqrt(cov.C00, eps) @ cov.C01 @ spd_inv_sqrt(cov.C11, eps)
    return _schatten(kbar, r)


def vamp_e(model: KoopmanModel, cov: CovarianceTriple) -> float:
    """``tr[2 S U^T C01 V - S U^T C00 U S V^T C11 V]``; needs no inversion."""
    _check_dims(model, cov)
    s = model.singular_values
    cfg = model.U.T @ cov.C01 @ model.V
    cff = model.U.T @ cov.C00 @ model.U
    cgg = model.V.T @ cov.C11 @ model.V
    return float(2.0 * np.sum(s * np.diag(cfg)) - np.sum((s[:, None] * cff * s[None, :]) * cgg.T))


def _projected_inv_sqrt(c: np.ndarray, rtol: float) -> np.ndarray:
    c = 0.5 * (c + c.T)
    evals, evecs = np.linalg.eigh(c)
    scale = max(np.abs(evals).max(), 1e-300)
    if evals.min() <= rtol * scale:
        raise SingularProjectionError(f"projected covariance is singular (min eigenvalue {evals.min():.3g})")
    return (evecs / np.sqrt(evals)) @ evecs.T


def subspace_vamp_r(model: KoopmanModel, cov_test: CovarianceTriple, r: int = 2, rtol: float = 1e-12) -> float:
    """Schatten-r score of the re-whitened projection onto the model subspaces."""
    _check_dims(model, cov_test)
    a = _projected_inv_sqrt(model.U.T @ cov_test.C00 @ model.U, rtol)
    b = _projected_inv_sqrt(model.V.T @ cov_test.C11 @ model.V, rtol)
    return _schatten(a @ (model.U.T @ cov_test.C01 @ model.V) @ b, r)


def score(model: KoopmanModel, cov: CovarianceTriple, spec: ScoreSpec) -> float:
    if spec.kind == "vamp-e":
        return vamp_e(model, cov)
    if spec.kind == "vamp-r":
        return vamp_r(model, cov, spec.r)
    return subspace_vamp_r(model, cov, spec.r)


class HSError(NamedTuple):
    absolute: float
    relative: float
    absolute_from_vamp_e: float


def _check_state_space(model: KoopmanModel, truth):
    if model.basis0 is None or model.basis1 is None:
        raise ValueError("model has no bases to evaluate on the oracle state space")
    if truth.centers.shape[1] != model.basis0.dim or truth.centers.shape[1] != model.basis1.dim:
        raise ValueError("state-space mismatch between model bases and oracle")


def oracle_covariances(model: KoopmanModel, truth) -> CovarianceTriple:
    """Exact covariances of the model's features under the oracle chain.

    Features are evaluated on the oracle bin centers; the start law is
    ``truth.mu`` and the end law ``truth.mu1``.
    """
    _check_state_space(model, truth)
    x0 = model.features0(truth.centers)
    x1 = model.features1(truth.centers)
    c00 = x0.T @ (truth.mu[:, None] * x0)
    c11 = x1.T @ (truth.mu1[:, None] * x1)
    c01 = x0.T @ (truth.mu[:, None] * (truth.P @ x1))
    return CovarianceTriple(0.5 * (c00 + c00.T), c01, 0.5 * (c11 + c11.T), 0, model.lag_steps,
                            model.decorrelation)


def exact_vamp_e(model: KoopmanModel, truth) -> float:
    """VAMP-E of ``model`` evaluated with the oracle's exact covariances."""
    return vamp_e(model, oracle_covariances(model, truth))


def hs_error_vs_oracle(model: KoopmanModel, truth) -> HSError:
    """Hilbert-Schmidt error of the model operator against the oracle.

    ``absolute`` comes from the Frobenius norm of the weighted kernel
    difference ``diag(sqrt mu0) (P_hat - P) diag(1/sqrt mu1)``;
    ``absolute_from_vamp_e`` from ``sqrt(sum sigma^2 - R_E)``. Both are
    returned so callers can check they agree.
    """
    _check_state_space(model, truth)
    f = model.left_functions(truth.centers)
    g = model.right_functions(truth.centers)
    p_hat = (f * model.singular_values) @ g.T * truth.mu1[None, :]
    r0 = np.sqrt(truth.mu)
    r1 = np.sqrt(truth.mu1)
    diff = r0[:, None] * (p_hat - truth.P) / r1[None, :]
    direct = float(np.linalg.norm(diff))
    via_score = float(np.sqrt(max(truth.hs_norm_sq - exact_vamp_e(model, truth), 0.0)))
    return HSError(direct, direct / np.sqrt(truth.hs_norm_sq), via_score)
