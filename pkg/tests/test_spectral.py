import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neigad.graph import FeatureMatrix, ParameterError, SparseGraph, generate_synthetic
from neigad.spectral import (
    ClusteredSpectrumWarning,
    EigenPairs,
    augment_features,
    canonical_signs,
    concat_loss_additivity_check,
    dense_eig_oracle,
    neighbor_average_residual,
    ni_score,
    ni_score_exact,
    read_eigenpairs_csv,
    top_eigenpairs,
    write_eigenpairs_csv,
)

from conftest import graphs, random_graph

pytestmark = pytest.mark.filterwarnings("ignore::neigad.spectral.ClusteredSpectrumWarning")


def test_k3_top_pair(k3):
    pairs = top_eigenpairs(k3, 1)
    assert pairs.eigenvalues[0] == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(pairs.eigenvectors[:, 0], np.ones(3) / np.sqrt(3), atol=1e-12)


def test_p3_two_pairs(p3):
    # dense oracle on the 3x3 matrix
    vals, vecs = np.linalg.eigh(p3.dense())
    assert vals[-1] == pytest.approx(np.sqrt(2), abs=1e-14)
    assert np.allclose(np.abs(vecs[:, -1]), [0.5, np.sqrt(2) / 2, 0.5])
    pairs = top_eigenpairs(p3, 2)
    assert pairs.eigenvalues[0] == pytest.approx(np.sqrt(2), abs=1e-12)
    assert pairs.eigenvalues[1] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(pairs.eigenvectors[:, 0], [0.5, np.sqrt(2) / 2, 0.5], atol=1e-12)


def test_edgeless():
    g = SparseGraph.from_edges(5, [], [])
    pairs = top_eigenpairs(g, 1)
    assert pairs.eigenvalues[0] == 0.0 and pairs.residuals[0] == 0.0


def test_parameter_errors(k3):
    with pytest.raises(ParameterError):
        top_eigenpairs(k3, 4)
    with pytest.raises(ParameterError):
        top_eigenpairs(k3, 0)
    big = generate_synthetic(40, 1, 0.3, 0.0, 1, seed=0).graph
    with pytest.raises(ParameterError):
        top_eigenpairs(big, 11)
    assert top_eigenpairs(big, 11, max_t=12).t == 11


def test_dense_oracle_closed_forms(k2, k3, star):
    assert np.allclose(dense_eig_oracle(k2).eigenvalues, [1, -1])
    assert np.allclose(dense_eig_oracle(k3).eigenvalues, [2, -1, -1])
    # characteristic polynomial of K1,3 is lambda^2 (lambda^2 - 3)
    roots = np.sort(np.roots([1, 0, -3, 0, 0]).real)[::-1]
    assert np.allclose(dense_eig_oracle(star).eigenvalues, roots, atol=1e-12)
    assert np.allclose(roots, [np.sqrt(3), 0, 0, -np.sqrt(3)])


def test_dense_oracle_guard():
    g = SparseGraph.from_edges(1025, [], [])
    with pytest.raises(ParameterError):
        dense_eig_oracle(g)


def test_largest_magnitude_mode(star):
    pairs = top_eigenpairs(star, 2, mode="LM")
    assert np.allclose(np.abs(pairs.eigenvalues), np.sqrt(3))


def test_sign_canon():
    v = canonical_signs(np.array([[0.1, 0.6], [-0.9, -0.6]]))
    assert v[1, 0] > 0 and v[0, 1] > 0


@pytest.mark.parametrize("seed", range(8))
def test_solver_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(15, 120))
    g = random_graph(rng, n, float(rng.uniform(0.05, 0.3)))
    t = min(10, n)
    pairs = top_eigenpairs(g, t)
    oracle = dense_eig_oracle(g)
    assert np.allclose(pairs.eigenvalues, oracle.eigenvalues[:t], atol=1e-8)
    gaps = np.abs(np.diff(oracle.eigenvalues))
    for k in range(t):
        left = gaps[k - 1] if k > 0 else np.inf
        if min(left, gaps[k]) > 1e-6:
            assert np.abs(pairs.eigenvectors[:, k] - oracle.eigenvectors[:, k]).max() <= 1e-6
    gram = pairs.eigenvectors.T @ pairs.eigenvectors
    assert np.abs(gram - np.eye(t)).max() <= 1e-8
    assert (pairs.residuals <= 1e-10).all()


def test_restarts_on_larger_graph():
    g = generate_synthetic(600, 3, 0.05, 0.01, 1, seed=2).graph
    pairs = top_eigenpairs(g, 6, ncv=16)
    oracle = dense_eig_oracle(g)
    assert pairs.restarts > 0
    assert np.allclose(pairs.eigenvalues, oracle.eigenvalues[:6], atol=1e-8)


def test_solver_deterministic():
    g = generate_synthetic(200, 2, 0.1, 0.02, 1, seed=4).graph
    a, b = top_eigenpairs(g, 5), top_eigenpairs(g, 5)
    assert a.eigenvectors.tobytes() == b.eigenvectors.tobytes()


def test_degenerate_graph_flags_cluster():
    # two disjoint triangles: eigenvalue 2 twice
    g = SparseGraph.from_edges(6, [0, 1, 2, 3, 4, 5], [1, 2, 0, 4, 5, 3])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pairs = top_eigenpairs(g, 2)
    assert np.allclose(pairs.eigenvalues, [2, 2])
    assert pairs.clustered.all()
    assert any(issubclass(w.category, ClusteredSpectrumWarning) for w in caught)


def test_convergence_error_reports_residuals():
    from neigad.spectral import ConvergenceError

    g = generate_synthetic(400, 1, 0.05, 0.0, 1, seed=0).graph
    with pytest.raises(ConvergenceError) as info:
        top_eigenpairs(g, 10, tol=1e-10, max_iter=0, ncv=12)
    assert info.value.residuals is not None


@settings(max_examples=40)
@given(graphs(min_n=2, max_n=20), st.integers(1, 10))
def test_solver_invariants(g, t):
    t = min(t, g.n)
    pairs = top_eigenpairs(g, t)
    assert np.all(np.diff(pairs.eigenvalues) <= 1e-12)
    assert np.abs(pairs.eigenvectors.T @ pairs.eigenvectors - np.eye(t)).max() <= 1e-8
    assert (pairs.residuals <= 1e-10).all()
    oracle = dense_eig_oracle(g)
    assert np.allclose(pairs.eigenvalues, oracle.eigenvalues[:t], atol=1e-8)
    # |u_j - (Au)_j / lambda| <= ||Au - lambda u|| / |lambda|
    res = neighbor_average_residual(g, pairs)
    for k in np.flatnonzero(~res.skipped):
        assert res.values[k] <= pairs.residuals[k] / abs(pairs.eigenvalues[k]) + 1e-12


# ---------------------------------------------------------------- neighbor average


def test_neighbor_residual_k3(k3):
    res = neighbor_average_residual(k3, top_eigenpairs(k3, 1))
    assert res.values[0] <= 1e-15


def test_neighbor_residual_oracle_pairs():
    g = random_graph(np.random.default_rng(1), 30, 0.2)
    res = neighbor_average_residual(g, dense_eig_oracle(g))
    assert res.max <= 1e-10


def test_neighbor_residual_skips_zero(p3):
    res = neighbor_average_residual(p3, top_eigenpairs(p3, 2))
    assert res.skipped.tolist() == [False, True]
    assert np.isnan(res.values[1])


def test_neighbor_residual_dimension(k3, k2):
    with pytest.raises(ValueError):
        neighbor_average_residual(k2, top_eigenpairs(k3, 1))


# ---------------------------------------------------------------- augmentation


def test_augment_identity(k3):
    x = FeatureMatrix(np.arange(6.0).reshape(3, 2))
    empty = EigenPairs(np.zeros(0), np.zeros((3, 0)), np.zeros(0))
    out = augment_features(x, empty)
    assert np.array_equal(out.values, x.values)


def test_augment_k2(k2):
    x = FeatureMatrix(np.zeros((2, 1)))
    out = augment_features(x, top_eigenpairs(k2, 1), 1.0)
    assert np.allclose(out.values[:, 1], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert (out.values[:, 1] > 0).all()


def test_augment_scale_linear(k3):
    x = FeatureMatrix(np.ones((3, 2)))
    pairs = top_eigenpairs(k3, 1)
    one, two = augment_features(x, pairs, 1.0), augment_features(x, pairs, 2.0)
    assert np.array_equal(two.values[:, 2:], 2.0 * one.values[:, 2:])
    assert two.values[:, :2].tobytes() == x.values.tobytes()


def test_augment_errors(k3):
    pairs = top_eigenpairs(k3, 1)
    with pytest.raises(ValueError):
        augment_features(FeatureMatrix(np.ones((2, 2))), pairs)
    with pytest.raises(ParameterError):
        augment_features(FeatureMatrix(np.ones((3, 2))), pairs, 0.0)


# ---------------------------------------------------------------- ni score


def test_ni_score_fixed_point(k2):
    pairs = dense_eig_oracle(k2)
    _, total = ni_score(k2, pairs.eigenvectors[:, 0])
    assert total == pytest.approx(0.0, abs=1e-28)


def test_ni_score_k3(k3):
    _, total = ni_score(k3, top_eigenpairs(k3, 1).eigenvectors[:, 0])
    assert total == pytest.approx(225.0, rel=1e-12)


def test_ni_score_edgeless():
    g = SparseGraph.from_edges(4, [], [])
    per_node, total = ni_score(g, np.array([0.5, 0.5, 0.5, 0.5]))
    assert total == 1.0 and np.allclose(per_node, 0.25)


def test_ni_score_requires_unit_vector(k3):
    with pytest.raises(ValueError):
        ni_score(k3, np.ones(3))


def test_ni_score_matches_closed_form_on_oracle_pairs():
    g = random_graph(np.random.default_rng(3), 25, 0.15)
    pairs = dense_eig_oracle(g)
    for k in range(pairs.t):
        _, total = ni_score(g, pairs.eigenvectors[:, k])
        expected = ni_score_exact(pairs.eigenvalues[k])
        assert total == pytest.approx(expected, rel=1e-8, abs=1e-8)


# ---------------------------------------------------------------- concatenation identity


def test_additivity_by_hand():
    lhs, rhs, gap = concat_loss_additivity_check([[1.0]], [[0.0]], [[1.0]], [[0.5]])
    assert lhs == rhs == 1.25 and gap == 0.0


def test_additivity_zero_eigen_term():
    rng = np.random.default_rng(0)
    x, xr, u = rng.normal(size=(5, 3)), rng.normal(size=(5, 3)), rng.normal(size=(5, 2))
    lhs, _, _ = concat_loss_additivity_check(x, xr, u, u)
    assert lhs == np.sum((x - xr) ** 2)


def test_additivity_random_double_sum():
    rng = np.random.default_rng(5)
    x, xr = rng.normal(size=(8, 4)), rng.normal(size=(8, 4))
    u, ur = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    lhs, rhs, gap = concat_loss_additivity_check(x, xr, u, ur)
    oracle = 0.0
    for i in range(8):
        for j in range(4):
            oracle += (x[i, j] - xr[i, j]) ** 2
        for j in range(3):
            oracle += (u[i, j] - ur[i, j]) ** 2
    assert abs(lhs - oracle) <= 1e-12 * (1 + oracle)
    assert gap <= 1e-12 * (1 + rhs)


def test_additivity_shape_error():
    with pytest.raises(ValueError):
        concat_loss_additivity_check(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 1)), np.ones((2, 1)))


@settings(max_examples=200)
@given(st.integers(1, 30), st.integers(1, 8), st.integers(0, 6), st.integers(0, 2**31))
def test_additivity_property(n, d, t, seed):
    rng = np.random.default_rng(seed)
    x, xr = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    u, ur = rng.normal(size=(n, t)), rng.normal(size=(n, t))
    _, rhs, gap = concat_loss_additivity_check(x, xr, u, ur)
    assert gap <= 1e-12 * (1 + rhs)


# ---------------------------------------------------------------- export


def test_csv_roundtrip(k3):
    pairs = top_eigenpairs(k3, 1)
    buf = io.StringIO()
    write_eigenpairs_csv(pairs, buf)
    header = buf.getvalue().splitlines()[0]
    assert float(header.split(",")[0]) == pytest.approx(2.0)
    vals, vecs = read_eigenpairs_csv(io.StringIO(buf.getvalue()))
    assert np.array_equal(vals, pairs.eigenvalues) and np.array_equal(vecs, pairs.eigenvectors)
