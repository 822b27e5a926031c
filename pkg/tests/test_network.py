import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as scistats

from runcons.network import (
    NetworkTopology,
    TopologyError,
    apply_pair_sequence,
    build_topology,
    effective_eigenvalues,
    expected_gossip_matrix,
    explicit_edges,
    full_ring,
    is_connected,
    is_doubly_stochastic,
    k_neighbor_ring,
    pairwise_matrix,
    sample_gossip_matrix,
    sample_pairs,
)


def test_full_ring_three_nodes_is_complete_graph():
    top = full_ring(3)
    assert set(top.pairs) == {(0, 1), (0, 2), (1, 2)}


def test_k_neighbor_ring_degree_and_pair_count():
    top = k_neighbor_ring(15, 4)
    assert len(top.pairs) == 30
    degree = np.zeros(15, dtype=int)
    for i, j in top.pairs:
        degree[i] += 1
        degree[j] += 1
    assert (degree == 4).all()


def test_explicit_edges_rejects_disconnected_graph():
    with pytest.raises(TopologyError):
        explicit_edges(3, [(0, 1)])
    top = explicit_edges(3, [(0, 1)], allow_disconnected=True)
    assert top.M == 3 and top.pairs == ((0, 1),)


def test_topology_validation_errors():
    with pytest.raises(TopologyError):
        NetworkTopology(3, ((0, 3),))
    with pytest.raises(TopologyError):
        NetworkTopology(3, ((1, 1),))
    with pytest.raises(TopologyError):
        k_neighbor_ring(15, 3)  # odd k
    with pytest.raises(TopologyError):
        k_neighbor_ring(4, 4)  # k >= M
    with pytest.raises(TopologyError):
        build_topology("full_ring", 0)


def test_is_connected_small_cases():
    assert is_connected(1, ())
    assert is_connected(3, ((0, 1), (1, 2)))
    assert not is_connected(4, ((0, 1), (2, 3)))


def test_pairwise_matrix_two_nodes_full_average():
    W = pairwise_matrix(0, 1, 2)
    assert np.allclose(W, 0.5 * np.ones((2, 2)), atol=1e-15)


def test_pairwise_matrix_averages_selected_entries():
    W = pairwise_matrix(0, 1, 3)
    out = W @ np.array([4.0, 2.0, 9.0])
    assert np.allclose(out, [3.0, 3.0, 9.0], atol=1e-14)


def test_pairwise_matrix_symmetric_idempotent():
    for (i, j, M) in [(0, 1, 3), (1, 3, 4), (0, 4, 5)]:
        W = pairwise_matrix(i, j, M)
        assert np.abs(W - W.T).max() < 1e-15
        assert np.abs(W @ W - W).max() < 1e-12
        assert is_doubly_stochastic(W)


def test_pairwise_matrix_rejects_equal_nodes():
    with pytest.raises(TopologyError):
        pairwise_matrix(2, 2, 4)


def test_single_pair_topology_sample_is_deterministic():
    top = full_ring(2)
    rng = np.random.default_rng(0)
    W = sample_gossip_matrix(top, 1, rng)
    assert np.allclose(W, 0.5 * np.ones((2, 2)), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(
    M=st.integers(min_value=2, max_value=8),
    v=st.integers(min_value=1, max_value=6),
    seed=st.integers(min_value=0, max_value=10_000),
)
def test_sampled_matrices_are_doubly_stochastic(M, v, seed):
    top = full_ring(M)
    W = sample_gossip_matrix(top, v, np.random.default_rng(seed))
    row = np.abs(W.sum(axis=1) - 1.0).max()
    col = np.abs(W.sum(axis=0) - 1.0).max()
    assert max(row, col) < 1e-12
    assert W.min() >= -1e-12


def test_sample_matrix_matches_sequential_pair_application():
    top = k_neighbor_ring(9, 4)
    seed = 123
    pairs = sample_pairs(top, 5, np.random.default_rng(seed))
    W = np.eye(9)
    for i, j in pairs:
        W = pairwise_matrix(i, j, 9) @ W
    x = np.arange(9, dtype=float)
    assert np.allclose(W @ x, apply_pair_sequence(x, pairs), atol=1e-12)
    # the library sampler consumes the same draws
    W2 = sample_gossip_matrix(top, 5, np.random.default_rng(seed))
    assert np.allclose(W, W2, atol=0)


def test_full_ring_spectrum_closed_form():
    for M in range(3, 31):
        summary = expected_gossip_matrix(full_ring(M))
        expected = (M - 2) / (M - 1)
        assert abs(summary.lambda_U - expected) < 1e-12
        assert abs(summary.lambda_L - expected) < 1e-12


def test_full_ring_two_nodes_spectrum():
    summary = expected_gossip_matrix(full_ring(2))
    assert np.allclose(summary.expected_matrix, 0.5 * np.ones((2, 2)), atol=1e-15)
    assert summary.lambda_U == pytest.approx(0.0, abs=1e-12)
    assert summary.lambda_L == pytest.approx(0.0, abs=1e-12)


def test_k_neighbor_spectrum_against_circulant_formula():
    # E[W] = I - L/(2J) is circulant for the symmetric ring, so its spectrum
    # follows from cosines; the eigensolver route must agree.
    M, k = 15, 4
    summary = expected_gossip_matrix(k_neighbor_ring(M, k))
    freqs = np.arange(M)
    laplacian_eigs = k - 2 * np.cos(2 * np.pi * freqs / M) - 2 * np.cos(4 * np.pi * freqs / M)
    eigs = np.sort(1.0 - laplacian_eigs / (2 * M * k / 2))
    assert summary.lambda_U == pytest.approx(eigs[-2], abs=1e-12)
    assert summary.lambda_L == pytest.approx(eigs[0], abs=1e-12)


def test_expected_matrix_is_symmetric_doubly_stochastic():
    summary = expected_gossip_matrix(k_neighbor_ring(12, 4))
    E = summary.expected_matrix
    assert np.abs(E - E.T).max() < 1e-14
    assert is_doubly_stochastic(E)
    assert np.linalg.eigvalsh(E)[-1] == pytest.approx(1.0, abs=1e-12)


def test_connected_topologies_have_lambda_u_below_one():
    for top in (full_ring(6), k_neighbor_ring(10, 2), explicit_edges(4, [(0, 1), (1, 2), (2, 3)])):
        assert expected_gossip_matrix(top).lambda_U < 1.0 - 1e-9


def test_disconnected_topology_has_unit_lambda_u():
    top = explicit_edges(4, [(0, 1), (2, 3)], allow_disconnected=True)
    assert expected_gossip_matrix(top).lambda_U == pytest.approx(1.0, abs=1e-9)


def test_effective_eigenvalues_power():
    summary = expected_gossip_matrix(full_ring(10))
    xi_u, xi_l = effective_eigenvalues(summary, 5)
    assert xi_u == pytest.approx(summary.lambda_U**5, rel=1e-12)
    assert xi_l == pytest.approx(summary.lambda_L**5, rel=1e-12)


def test_pair_selection_is_uniform_chi_square():
    top = k_neighbor_ring(15, 4)
    rng = np.random.default_rng(2024)
    draws = sample_pairs(top, 100_000, rng)
    keys = draws[:, 0] * 15 + draws[:, 1]
    pair_ids = {(i * 15 + j): idx for idx, (i, j) in enumerate(top.pairs)}
    counts = np.zeros(len(top.pairs))
    for key, idx in pair_ids.items():
        counts[idx] = (keys == key).sum()
    assert counts.sum() == 100_000
    _, p_value = scistats.chisquare(counts)
    assert p_value > 0.001


def test_sampled_mean_matches_expected_matrix():
    top = full_ring(15)
    summary = expected_gossip_matrix(top)
    rng = np.random.default_rng(2024)
    trials = 100_000
    acc = np.zeros((15, 15))
    acc_sq = np.zeros((15, 15))
    for _ in range(trials):
        W = sample_gossip_matrix(top, 1, rng)
        acc += W
        acc_sq += W * W
    mean = acc / trials
    var = acc_sq / trials - mean**2
    std_err = np.sqrt(np.maximum(var, 0.0) / trials)
    assert (np.abs(mean - summary.expected_matrix) <= 3.0 * std_err + 1e-12).all()


def test_empty_pair_sampling_rejected():
    top = NetworkTopology(1, ())
    with pytest.raises(TopologyError):
        sample_pairs(top, 1, np.random.default_rng(0))
