import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koopvamp.basis import indicator_grid
from koopvamp.covariance import CompensatedSum, covariances_from_features, estimate_covariances
from koopvamp.systems import _sample_chain
from koopvamp.trajectory_store import TrajectoryCollection

from conftest import CHAIN2


def _coll(*trajs):
    return TrajectoryCollection(tuple(np.asarray(t, dtype=float)[:, None] for t in trajs), 1.0)


def test_constant_feature():
    c = _coll(np.random.default_rng(0).normal(size=50))
    cov = estimate_covariances(c, lambda x: np.ones((x.shape[0], 1)), lambda x: np.ones((x.shape[0], 1)), 3)
    for a in (cov.C00, cov.C01, cov.C11):
        np.testing.assert_array_equal(a, [[1.0]])
    assert cov.pair_count == 47


def test_two_state_by_hand():
    # states 1,2,1,2 on a grid with bins [0,1) and [1,2)
    basis = indicator_grid(((0, 2),), 2)
    cov = estimate_covariances(_coll([0.5, 1.5, 0.5, 1.5]), basis, basis, 1)
    np.testing.assert_allclose(cov.C00, np.diag([2 / 3, 1 / 3]))
    np.testing.assert_allclose(cov.C11, np.diag([1 / 3, 2 / 3]))
    np.testing.assert_allclose(cov.C01, [[0, 2 / 3], [1 / 3, 0]])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(0, 5), min_size=2, max_size=40), min_size=1, max_size=4),
       st.integers(1, 3), st.integers(1, 6))
def test_indicator_count_structure(trajs, lag, m):
    c = _coll(*trajs)
    if sum(max(0, len(t) - lag) for t in trajs) == 0:
        return
    basis = indicator_grid(((0, 5),), m)
    cov = estimate_covariances(c, basis, basis, lag)
    n = cov.pair_count
    # start states transition somewhere
    np.testing.assert_allclose(cov.C01.sum(1), np.diag(cov.C00), atol=1e-12)
    np.testing.assert_allclose(cov.C01.sum(0), np.diag(cov.C11), atol=1e-12)
    for a in (cov.C00, cov.C01, cov.C11):
        counts = a * n
        np.testing.assert_allclose(counts, np.round(counts), atol=1e-9)
        assert np.all(counts > -1e-9)
    assert np.linalg.eigvalsh(cov.block()).min() > -1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 4))
def test_block_psd_and_symmetry(seed, lag):
    rng = np.random.default_rng(seed)
    c = TrajectoryCollection((rng.normal(size=(60, 2)), rng.normal(size=(30, 2))), 1.0)
    f0 = lambda x: np.column_stack([x, x ** 2, np.sin(x[:, :1])])
    cov = estimate_covariances(c, f0, lambda x: np.tanh(x), lag)
    assert np.array_equal(cov.C00, cov.C00.T) and np.array_equal(cov.C11, cov.C11.T)
    assert np.linalg.eigvalsh(cov.block()).min() > -1e-10


def test_errors():
    c = _coll([0.0, 1.0, 2.0])
    f = lambda x: x
    with pytest.raises(ValueError):
        estimate_covariances(c, f, f, 5)
    with pytest.raises(ValueError, match="non-finite"):
        estimate_covariances(c, lambda x: np.full_like(x, np.nan), f, 1)


def test_chain_consistency():
    states, _ = _sample_chain(CHAIN2, np.array([2 / 3, 1 / 3]), 100, 10001, seed=11)
    c = TrajectoryCollection(tuple(s.astype(float)[:, None] + 0.5 for s in states), 1.0)
    basis = indicator_grid(((0, 2),), 2)
    cov = estimate_covariances(c, basis, basis, 1)
    assert cov.pair_count == 10 ** 6
    K = np.linalg.solve(cov.C00, cov.C01)
    n_i = np.diag(cov.C00) * cov.pair_count
    se = np.sqrt(CHAIN2 * (1 - CHAIN2) / n_i[:, None])
    assert np.all(np.abs(K - CHAIN2) < 3 * se)


def test_compensated_sum_beats_naive():
    vals = np.array([1e16, 1.0, -1e16, 1.0] * 1000)
    acc = CompensatedSum(())
    for v in vals:
        acc.add(v)
    assert acc.value == 2000.0


def test_reduction_order_invariance():
    rng = np.random.default_rng(3)
    blocks = [(rng.normal(size=(n, 4)), rng.normal(size=(n, 3))) for n in rng.integers(5, 3000, size=12)]
    a = covariances_from_features(blocks)
    b = covariances_from_features(blocks[::-1])
    for x, y in ((a.C00, b.C00), (a.C01, b.C01), (a.C11, b.C11)):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)
