import json

import numpy as np
import pytest

from koopvamp.basis import indicator_grid, uniform_rbf
from koopvamp.covariance import CovarianceTriple
from koopvamp.scores import exact_vamp_e, hs_error_vs_oracle, vamp_e, vamp_r, vamp_r_matrix
from koopvamp.systems import simulate_onedim, truth_from_transition_matrix
from koopvamp.tcca import (KoopmanModel, SingularCovarianceError, feature_tcca, fit_tcca, koopman_matrix,
                           load_model, reconstruct_transition_density, save_model)

from conftest import CHAIN2, CHAIN3, exact_chain_covariances


def _chain_truth(P):
    n = P.shape[0]
    return truth_from_transition_matrix("chain", P, indicator_grid(((0, n),), n))


def _chain_model(P, k=None):
    truth = _chain_truth(P)
    cov, _ = exact_chain_covariances(P, truth.mu)
    return feature_tcca(cov, k, eps=0.0, basis0=truth.basis, basis1=truth.basis), truth


def test_two_state_singular_values():
    cov, mu = exact_chain_covariances(CHAIN2)
    np.testing.assert_allclose(mu, [2 / 3, 1 / 3])
    model = feature_tcca(cov, eps=0.0)
    np.testing.assert_allclose(model.singular_values, [1.0, 0.7], atol=1e-12)
    # brute-force SVD of kbar
    r = np.diag(1 / np.sqrt(mu))
    np.testing.assert_allclose(np.linalg.svd(r @ cov.C01 @ r, compute_uv=False), [1.0, 0.7], atol=1e-12)


def test_identity_case():
    cov = CovarianceTriple(np.eye(2), np.eye(2), np.eye(2), 0, 1)
    model = feature_tcca(cov, 2)
    np.testing.assert_allclose(model.singular_values, [1, 1])
    np.testing.assert_allclose(model.U, model.V)
    np.testing.assert_allclose(model.U.T @ model.U, np.eye(2), atol=1e-12)


def test_koopman_matrix():
    cov, _ = exact_chain_covariances(CHAIN2)
    np.testing.assert_allclose(koopman_matrix(cov), CHAIN2, atol=1e-14)
    c = np.array([[2.0, 0.3], [0.3, 1.0]])
    np.testing.assert_allclose(koopman_matrix(CovarianceTriple(c, c, c, 0, 1)), np.eye(2), atol=1e-14)
    with pytest.raises(np.linalg.LinAlgError):
        koopman_matrix(CovarianceTriple(np.zeros((2, 2)), c, c, 0, 1))


def _random_whitened_fit(seed, m=8, lag=2):
    data = simulate_onedim(3, 300, seed=seed)
    return fit_tcca(data, uniform_rbf(((-20, 20),), m, 0.3), None, lag), data


def test_full_rank_reconstruction_is_edmd():
    model, data = _random_whitened_fit(1)
    cov = model.covariances(data)
    k_chi = koopman_matrix(cov)
    recon = model.U @ model.S @ np.linalg.inv(model.V)
    np.testing.assert_allclose(recon, k_chi, atol=1e-8)


def test_training_orthonormality_and_spectrum():
    model, data = _random_whitened_fit(2)
    cov = model.covariances(data)
    np.testing.assert_allclose(model.U.T @ cov.C00 @ model.U, np.eye(model.k), atol=1e-8)
    np.testing.assert_allclose(model.V.T @ cov.C11 @ model.V, np.eye(model.k), atol=1e-8)
    s = model.singular_values
    assert np.all(np.diff(s) <= 0) and abs(s[0] - 1) < 1e-8 and s[-1] >= 0


@pytest.mark.parametrize("r", [1, 2])
def test_attained_score_is_schatten_norm(r):
    model, data = _random_whitened_fit(3)
    cov = model.covariances(data)
    assert abs(vamp_r(model, cov, r) - vamp_r_matrix(cov, r)) < 1e-8


def test_eigenvalues_match_oracle_chain():
    for P in (CHAIN2, CHAIN3):
        cov, _ = exact_chain_covariances(P)
        got = np.sort_complex(np.linalg.eigvals(koopman_matrix(cov)))
        want = np.sort_complex(np.linalg.eigvals(P))
        np.testing.assert_allclose(got, want, atol=1e-8)


@pytest.mark.parametrize("P", [CHAIN2, CHAIN3])
def test_eckart_young_rank_one(P):
    model, truth = _chain_model(P, 1)
    best = hs_error_vs_oracle(model, truth).absolute
    rng = np.random.default_rng(0)
    n = P.shape[0]
    d0, d1 = np.diag(truth.mu), np.diag(truth.mu1)
    for _ in range(1000):
        u = rng.normal(size=(n, 1))
        v = rng.normal(size=(n, 1))
        u /= np.sqrt(u.T @ d0 @ u)
        v /= np.sqrt(v.T @ d1 @ v)
        cand = KoopmanModel(np.array([rng.uniform(0, 1.5)]), u, v, truth.basis, truth.basis)
        assert hs_error_vs_oracle(cand, truth).absolute >= best - 1e-12


def test_full_rank_exact_model_recovers_chain():
    model, truth = _chain_model(CHAIN3)
    assert hs_error_vs_oracle(model, truth).absolute < 1e-8
    np.testing.assert_allclose(reconstruct_transition_density(model, truth.mu1), CHAIN3, atol=1e-8)


def test_rank_one_density_is_stationary_forecast():
    model, truth = _chain_model(CHAIN3, 1)
    dens = reconstruct_transition_density(model, truth.mu1)
    np.testing.assert_allclose(dens, np.tile(truth.mu1, (3, 1)), atol=1e-12)


def test_density_needs_indicator_basis():
    model, _ = _random_whitened_fit(4)
    with pytest.raises(ValueError):
        reconstruct_transition_density(model, np.full(9, 1 / 9))


def test_errors():
    cov, _ = exact_chain_covariances(CHAIN2)
    with pytest.raises(ValueError):
        feature_tcca(cov, 3)
    bad = CovarianceTriple(np.zeros((2, 2)), cov.C01, cov.C11, 0, 1)
    with pytest.raises(SingularCovarianceError):
        feature_tcca(bad)


def test_sign_convention_and_truncate():
    model, data = _random_whitened_fit(5)
    again, _ = _random_whitened_fit(5)
    np.testing.assert_array_equal(model.U, again.U)
    # recover the left singular vectors of kbar from U = C00^-1/2 u'
    cov = model.covariances(data)
    w, q = np.linalg.eigh(cov.C00)
    u_prime = (q * np.sqrt(w)) @ q.T @ model.U
    for i in range(model.k):
        col = u_prime[:, i]
        first = col[np.abs(col) > 1e-12 * np.abs(col).max()][0]
        assert first > 0
    t = model.truncate(3)
    assert t.k == 3 and np.array_equal(t.U, model.U[:, :3])


def test_model_file_round_trip(tmp_path):
    model, data = _random_whitened_fit(6)
    model.meta["note"] = "x"
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert json.loads((tmp_path / "m.json").read_text())["format_version"] == 1
    for a, b in ((model.U, back.U), (model.V, back.V), (model.singular_values, back.singular_values)):
        np.testing.assert_array_equal(a, b)
    cov_a, cov_b = model.covariances(data), back.covariances(data)
    assert vamp_e(model, cov_a) == vamp_e(back, cov_b)
    bad = json.loads((tmp_path / "m.json").read_text())
    bad["format_version"] = 2
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    with pytest.raises(ValueError, match="format_version"):
        load_model(tmp_path / "bad.json")


def test_truncation_error_identity(onedim_truth):
    # rank-k oracle truncation error from the exact VAMP-E
    truth = onedim_truth
    cov, _ = exact_chain_covariances(truth.P, truth.mu)
    full = feature_tcca(cov, 10, eps=0.0, basis0=truth.basis, basis1=truth.basis)
    for k in (1, 2, 4):
        e = hs_error_vs_oracle(full.truncate(k), truth)
        want = np.sqrt(np.sum(truth.sigma[k:] ** 2) / truth.hs_norm_sq)
        assert abs(e.relative - want) < 1e-6
        assert abs(exact_vamp_e(full.truncate(k), truth) - np.sum(truth.sigma[:k] ** 2)) < 1e-8
