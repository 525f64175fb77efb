import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings
from hypothesis import strategies as st

from app.errors import GraphConditionError, ValidationError
from app.services.signed_graph import (
    SignedDigraph,
    analyze,
    build_laplacian,
    compute_ofp_radius,
    directed_cycle,
    example4_graph,
    is_weight_balanced,
    ofp_certificate,
    path_graph,
    zero_is_simple,
)
from tests.conftest import bisection_ofp_radius, random_balanced_digraph


# --- signed four-node graph ---

def test_example4_radius_is_one_half(example4_laplacian):
    r = compute_ofp_radius(example4_laplacian)
    assert r == pytest.approx(0.5, abs=1e-6)
    assert ofp_certificate(example4_laplacian, r) >= -1e-9
    assert ofp_certificate(example4_laplacian, r - 1e-4) < 0


def test_example4_analysis():
    analysis = analyze(example4_graph())
    assert analysis.sync_conditions_met
    assert analysis.inertia[1] >= 1
    assert sum(analysis.inertia) == 4
    assert analysis.ofp_radius == pytest.approx(0.5, abs=1e-6)
    assert np.sum(np.abs(analysis.eigenvalues) < 1e-8) == 1


def test_example4_laplacian_round_trip(example4_laplacian):
    g = SignedDigraph.from_laplacian(example4_laplacian)
    np.testing.assert_array_equal(build_laplacian(g), example4_laplacian)


# --- small graphs ---

def test_unsigned_cycle_is_output_strictly_passive():
    L = build_laplacian(directed_cycle(3))
    r = compute_ofp_radius(L)
    assert r == pytest.approx(-0.5, abs=1e-9)
    assert r == pytest.approx(bisection_ofp_radius(L), abs=1e-4)


def test_two_node_path():
    assert compute_ofp_radius(build_laplacian(path_graph(2))) == pytest.approx(-0.5, abs=1e-12)


def test_single_node_radius_is_zero():
    assert compute_ofp_radius(np.zeros((1, 1))) == 0.0


def test_disconnected_graph_is_rejected():
    g = SignedDigraph.from_edges(4, [(0, 1, 1.0), (1, 0, 1.0), (2, 3, 1.0), (3, 2, 1.0)])
    L = build_laplacian(g)
    assert is_weight_balanced(L)
    assert not zero_is_simple(L)
    with pytest.raises(GraphConditionError, match="simple"):
        compute_ofp_radius(L)
    assert not analyze(g).strongly_connected


def test_unbalanced_graph_is_rejected():
    g = SignedDigraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0), (0, 2, 1.0)])
    L = build_laplacian(g)
    assert not is_weight_balanced(L)
    with pytest.raises(GraphConditionError, match="balanced"):
        compute_ofp_radius(L)
    analysis = analyze(g)
    assert analysis.ofp_radius is None
    assert not analysis.sync_conditions_met


# --- random graphs ---

def test_radius_matches_bisection(rng):
    for _ in range(100):
        n = int(rng.integers(2, 7))
        L = build_laplacian(random_balanced_digraph(rng, n))
        r = compute_ofp_radius(L)
        assert r == pytest.approx(bisection_ofp_radius(L), abs=1e-4)
        assert ofp_certificate(L, r) >= -1e-8


def test_nonnegative_weights_never_need_positive_radius(rng):
    for _ in range(30):
        L = build_laplacian(random_balanced_digraph(rng, int(rng.integers(2, 7)), signed=False))
        assert compute_ofp_radius(L) <= 1e-9


@hyp_settings(max_examples=50, deadline=None)
@given(st.lists(
    st.tuples(st.integers(0, 4), st.integers(0, 4), st.floats(-5, 5, allow_nan=False)),
    max_size=12,
))
def test_laplacian_rows_sum_to_zero(raw_edges):
    seen, edges = set(), []
    for k, i, w in raw_edges:
        if k != i and (k, i) not in seen:
            seen.add((k, i))
            edges.append((k, i, w))
    L = build_laplacian(SignedDigraph.from_edges(5, edges))
    np.testing.assert_allclose(L @ np.ones(5), 0.0, atol=1e-12)


# --- construction ---

def test_from_edges_validation():
    with pytest.raises(ValidationError, match="self-loop"):
        SignedDigraph.from_edges(2, [(1, 1, 1.0)])
    with pytest.raises(ValidationError, match="duplicate"):
        SignedDigraph.from_edges(2, [(0, 1, 1.0), (0, 1, 2.0)])
    with pytest.raises(ValidationError, match="out of range"):
        SignedDigraph.from_edges(2, [(0, 2, 1.0)])
    with pytest.raises(ValidationError):
        SignedDigraph(0, np.zeros((0, 0)))


def test_edge_direction_convention():
    g = SignedDigraph.from_edges(2, [(0, 1, -2.0)])
    assert g.adjacency[1, 0] == -2.0
    assert g.edges() == [(0, 1, -2.0)]


def test_to_networkx_carries_signs():
    G = example4_graph().to_networkx()
    assert G.number_of_nodes() == 4
    signs = {G.edges[e]["sign"] for e in G.edges}
    assert signs == {"+", "-"}
    assert G.edges[3, 0]["weight"] == -2.0
