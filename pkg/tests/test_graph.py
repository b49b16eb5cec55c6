import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gmocp import (
    GraphParams,
    connection_pmf,
    generate_graph,
    inclusion_probability,
    node_weights,
    realize_graph,
    select_model,
    select_node_and_candidates,
)

REPS = 100_000


def within_3se(freq, p, n=REPS):
    return abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n)


class TestConnectionPmf:
    def test_full_exploration(self):
        assert np.allclose(connection_pmf([5.0, 1.0, 0.2], 1.0), 1 / 3)

    def test_no_exploration(self):
        assert np.allclose(connection_pmf([2.0, 1.0, 1.0], 0.0), [0.5, 0.25, 0.25])

    def test_equal_weights(self):
        assert np.allclose(connection_pmf(np.full(5, 3.0), 0.37), 0.2)

    def test_rejects(self):
        with pytest.raises(ValueError):
            connection_pmf([0.0, 0.0], 0.1)
        with pytest.raises(ValueError):
            connection_pmf([1.0, 1.0], 1.5)

    @given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20), st.floats(0, 1))
    def test_is_pmf(self, w, eta_e):
        p = connection_pmf(w, eta_e)
        assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-9


class TestGraph:
    def test_single_trial_single_edge(self, rng):
        adj = generate_graph(GraphParams(6), np.full(6, 1 / 6), rng)
        assert adj.shape == (1, 6) and adj.sum() == 1

    def test_frequency_two_trials(self):
        rng = np.random.default_rng(1)
        params = GraphParams(2, n_trials=2)
        hits = sum(generate_graph(params, [0.5, 0.5], rng)[0, 0] for _ in range(REPS))
        assert within_3se(hits / REPS, 0.75)

    def test_deterministic(self):
        params = GraphParams(5, n_selective=3, n_trials=4)
        pmf = connection_pmf([1, 2, 3, 4, 5], 0.1)
        a = generate_graph(params, pmf, np.random.default_rng(9))
        b = generate_graph(params, pmf, np.random.default_rng(9))
        assert np.array_equal(a, b)

    @given(st.integers(1, 10), st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_row_edge_counts(self, M, J, N, seed):
        rng = np.random.default_rng(seed)
        w = rng.random(M) + 0.01
        real = realize_graph(w, GraphParams(M, J, N), rng)
        rows = real.adjacency.sum(axis=1)
        assert np.all((rows >= 1) & (rows <= N))
        assert abs(real.node_pmf.sum() - 1) < 1e-9
        assert real.candidate_set == set(np.flatnonzero(real.adjacency[real.chosen_node]))
        assert 1 <= len(real.candidate_set) <= N
        assert np.all((real.inclusion_probs > 0) & (real.inclusion_probs <= 1))

    def test_exploration_ignores_weights(self):
        params = GraphParams(4, n_selective=2, n_trials=3, eta_e=1.0)
        a = realize_graph([100.0, 1.0, 1.0, 1.0], params, np.random.default_rng(3))
        b = realize_graph([1.0, 1.0, 1.0, 100.0], params, np.random.default_rng(3))
        assert np.array_equal(a.adjacency, b.adjacency)


class TestNodes:
    def test_node_weights(self):
        adj = np.array([[1, 1, 0], [0, 0, 1]], dtype=bool)
        assert list(node_weights(adj, [2.0, 1.0, 4.0])) == [3.0, 4.0]

    def test_single_node_all_models(self):
        assert node_weights(np.ones((1, 3), bool), [1.0, 2.0, 3.0])[0] == 6.0

    def test_empty_row_faults(self):
        with pytest.raises(ValueError):
            node_weights(np.array([[1, 0], [0, 0]], dtype=bool), [1.0, 1.0])

    def test_single_node_chosen(self, rng):
        adj = np.array([[0, 1, 1]], dtype=bool)
        j, cands = select_node_and_candidates(adj, [1.0], rng)
        assert j == 0 and cands == {1, 2}

    def test_node_frequency(self):
        rng = np.random.default_rng(2)
        adj = np.array([[1, 0], [0, 1]], dtype=bool)
        hits = sum(select_node_and_candidates(adj, [3.0, 1.0], rng)[0] == 0 for _ in range(REPS))
        assert within_3se(hits / REPS, 0.75)


class TestSelectModel:
    def test_singleton(self, rng):
        assert select_model({2}, [1.0, 1.0, 1.0], rng) == 2

    def test_empty(self, rng):
        with pytest.raises(ValueError):
            select_model(set(), [1.0], rng)

    def test_frequency(self):
        rng = np.random.default_rng(4)
        picks = np.array([select_model({0, 1}, [2.0, 1.0, 4.0], rng) for _ in range(REPS)])
        assert set(picks) <= {0, 1}
        assert within_3se(np.mean(picks == 0), 2 / 3)

    def test_equal_weights_uniform(self):
        rng = np.random.default_rng(5)
        picks = np.array([select_model({1, 3, 4}, np.ones(5), rng) for _ in range(30_000)])
        for m in (1, 3, 4):
            assert within_3se(np.mean(picks == m), 1 / 3, 30_000)


class TestInclusion:
    def test_single_trial(self):
        p = np.array([0.1, 0.3, 0.6])
        assert np.allclose(inclusion_probability([1.0], p, 1), p)

    def test_two_trials(self):
        assert inclusion_probability([0.4, 0.6], [0.5, 0.5], 2)[0] == pytest.approx(0.75)

    def test_certain(self):
        assert inclusion_probability([1.0], [1.0, 0.0], 7)[0] == 1.0

    def test_no_starvation(self):
        M, N = 6, 3
        p = connection_pmf([1e-12, 1, 1, 1, 1, 1e6], 1.0)
        assert inclusion_probability([1.0], p, N).min() >= 1 - (1 - 1 / M) ** N - 1e-12


def test_realized_node_pmf_bias_documented():
    # With J > 1 the node is drawn by realized weight, so the true inclusion
    # frequency differs from the formula, which only sees the connection PMF.
    M, J, N = 3, 2, 1
    w = np.array([8.0, 1.0, 1.0])
    params = GraphParams(M, J, N, eta_e=0.1)
    rng = np.random.default_rng(6)
    hits = np.zeros(M)
    for _ in range(50_000):
        real = realize_graph(w, params, rng)
        hits[list(real.candidate_set)] += 1
    freq = hits / 50_000
    q = realize_graph(w, params, rng).inclusion_probs
    assert freq[0] > q[0] + 0.05  # heavy model reaches the chosen node more often
