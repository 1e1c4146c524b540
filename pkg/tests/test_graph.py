import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netpanel.graph import (
    Network,
    Panel,
    apply_transform,
    degrees,
    derive_attribute,
    geodesic_distribution,
    random_network,
    shared_partner_counts,
)

import oracles


def adjacency_strategy(min_n=2, max_n=7):
    @st.composite
    def build(draw):
        n = draw(st.integers(min_n, max_n))
        bits = draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
        a = np.array(bits, dtype=np.uint8).reshape(n, n)
        np.fill_diagonal(a, 0)
        return a

    return build()


def test_network_validation():
    with pytest.raises(ValueError, match="square"):
        Network(np.zeros((2, 3)))
    with pytest.raises(ValueError, match="0 or 1"):
        Network([[0, 2], [0, 0]])
    with pytest.raises(ValueError, match="self-loop"):
        Network([[1, 0], [0, 0]])


def test_network_is_immutable_copy():
    a = np.array([[0, 1], [0, 0]])
    net = Network(a)
    a[0, 1] = 0
    assert net.adjacency[0, 1] == 1
    with pytest.raises(ValueError):
        net.adjacency[1, 0] = 1


def test_toggle_and_density():
    net = Network.empty(4).toggled(0, 1).toggled(2, 3)
    assert net.n_edges == 2
    assert net.density() == pytest.approx(2 / 12)
    assert net.toggled(0, 1).n_edges == 1
    with pytest.raises(ValueError):
        net.toggled(1, 1)
    assert Network.complete(4).density() == 1.0
    assert Network.complete(4).complement() == Network.empty(4)


def test_degrees_and_transforms():
    net = Network.from_edges(4, [(0, 1), (2, 1), (3, 1), (1, 0)])
    assert degrees(net, "in").tolist() == [1, 3, 0, 0]
    assert degrees(net, "out").tolist() == [1, 1, 1, 1]
    assert np.allclose(apply_transform(net, "sqrt_indegree"), np.sqrt([1, 3, 0, 0]))
    with pytest.raises(ValueError):
        degrees(net, "both")
    with pytest.raises(ValueError):
        apply_transform(net, "log_degree")


def test_geodesic_hand_example():
    # path 0 -> 1 -> 2 -> 3 plus isolated node 4
    net = Network.from_edges(5, [(0, 1), (1, 2), (2, 3)])
    g = geodesic_distribution(net)
    assert g["counts"].tolist() == [3, 2, 1, 0]
    assert g["unreachable"] == 20 - 6


def test_geodesic_pooling():
    net = Network.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    with pytest.raises(ValueError):
        geodesic_distribution(net, max_bucket=2)
    g = geodesic_distribution(net, max_bucket=2, pool_beyond=True)
    assert g["counts"].tolist() == [3, 2]
    assert g["unreachable"] == 12 - 5


@settings(max_examples=60, deadline=None)
@given(adjacency_strategy())
def test_geodesic_matches_bfs(a):
    g = geodesic_distribution(Network(a))
    counts, unreachable = oracles.geodesics(oracles.as_lists(a))
    assert g["counts"].tolist() == counts
    assert g["unreachable"] == unreachable
    assert g["counts"].sum() + g["unreachable"] == a.shape[0] * (a.shape[0] - 1)


@settings(max_examples=60, deadline=None)
@given(adjacency_strategy(min_n=3))
def test_shared_partners_match_enumeration(a):
    x = oracles.as_lists(a)
    net = Network(a)
    for kind in ("OTP", "ITP"):
        assert shared_partner_counts(net, "edgewise", kind).tolist() == oracles.esp_histogram(x, kind)
        assert shared_partner_counts(net, "dyadwise", kind).tolist() == oracles.dsp_histogram(x, kind)


@settings(max_examples=40, deadline=None)
@given(adjacency_strategy(min_n=3), st.randoms(use_true_random=False))
def test_statistics_permutation_invariant(a, rnd):
    n = a.shape[0]
    perm = list(range(n))
    rnd.shuffle(perm)
    net = Network(a)
    p = net.permuted(perm)
    assert sorted(degrees(p, "in")) == sorted(degrees(net, "in"))
    assert shared_partner_counts(p).tolist() == shared_partner_counts(net).tolist()
    assert geodesic_distribution(p)["counts"].tolist() == geodesic_distribution(net)["counts"].tolist()


def test_panel_validation_and_head():
    rng = np.random.default_rng(0)
    waves = [random_network(5, 0.3, rng) for _ in range(3)]
    per_wave = rng.random((3, 5))
    panel = Panel(waves, {"score": per_wave, "sex": np.array([1, 2, 1, 2, 1])}, {"w": np.ones((5, 5))})
    assert panel.n == 5 and panel.n_waves == 3
    assert panel.is_per_wave("score") and not panel.is_per_wave("sex")
    assert panel.covariate_kind("w") == "dyadic"
    head = panel.head(2)
    assert head.n_waves == 2 and head.node_covariates["score"].shape == (2, 5)
    with pytest.raises(ValueError):
        Panel([random_network(5, 0.3, rng), random_network(4, 0.3, rng)])
    with pytest.raises(ValueError):
        Panel(waves, {"bad": np.ones(4)})
    with pytest.raises(ValueError):
        Panel(waves, {"bad": np.ones((2, 5))})


def test_derived_attributes_track_their_wave():
    net0 = Network.from_edges(3, [(0, 1)])
    net1 = Network.from_edges(3, [(0, 1), (2, 1), (0, 2)])
    panel = Panel([net0, net1]).with_derived("idegsqrt", "sqrt_indegree")
    assert panel.derived == {"idegsqrt": "sqrt_indegree"}
    assert np.allclose(panel.node_covariate("idegsqrt", 1), np.sqrt([0, 2, 1]))
    d = derive_attribute(panel, 0, "sqrt_outdegree")
    assert d.source_wave == 0 and np.allclose(d.values, [1, 0, 0])
    with pytest.raises(IndexError):
        derive_attribute(panel, 2, "sqrt_outdegree")
    changed = panel.with_node_covariate("idegsqrt", 1, np.full(3, 10.0))
    assert changed.node_covariate("idegsqrt", 1).tolist() == [10.0, 10.0, 10.0]
    assert np.allclose(changed.node_covariate("idegsqrt", 0), [0, 1, 0])
