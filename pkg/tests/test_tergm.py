import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netpanel.graph import Network, Panel, random_network
from netpanel.synthetic import tergm_panel
from netpanel.terms import StatisticContext, TermSpec
from netpanel.tergm import (
    McmcConfig,
    TergmModel,
    estimate,
    exact_distribution,
    log_weight,
    mple,
    mple_design,
    run_chain,
    sample,
    transitions,
)

import oracles

STABILITY = TermSpec("memory_stability", binding="Lagged")


def batch_se(x: np.ndarray, batches: int = 50) -> np.ndarray:
    """Monte-Carlo standard error of a chain mean by batch means."""
    m = (len(x) // batches) * batches
    means = x[:m].reshape(batches, -1, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


def test_config_and_model_validation():
    with pytest.raises(ValueError):
        McmcConfig(burn_in=0)
    with pytest.raises(ValueError):
        McmcConfig(seed=-1)
    with pytest.raises(ValueError):
        TergmModel([TermSpec("edges")], [1.0, 2.0])


def test_log_weight_trivial_cases():
    net = Network.from_edges(4, [(0, 1), (1, 2), (2, 0)])
    ctx = StatisticContext(net)
    terms = [TermSpec("edges"), TermSpec("mutual")]
    assert log_weight(TergmModel(terms, [0.0, 0.0]), ctx) == 0.0
    assert log_weight(TergmModel([TermSpec("edges")], [-1.7]), ctx) == pytest.approx(-1.7 * 3)


def test_exact_distribution_matches_enumeration():
    # brute force: exponentiate the weight of each of the 64 graphs by hand
    terms = [TermSpec("edges"), TermSpec("mutual"), TermSpec("ttriple"), STABILITY]
    theta = np.array([-0.4, 0.9, 0.3, 0.6])
    prev = Network.from_edges(3, [(0, 1), (2, 0)])
    model = TergmModel(terms, theta)
    dist = exact_distribution(model, prev)
    p = oracles.as_lists(prev.adjacency)
    weights = {}
    for x in oracles.all_graphs(3):
        s = [oracles.edges(x), oracles.mutual(x), oracles.ttriple(x), oracles.stability(x, p)]
        weights[tuple(map(tuple, x))] = math.exp(float(np.dot(theta, s)))
    z = sum(weights.values())
    assert dist.probs.sum() == pytest.approx(1.0, abs=1e-12)
    for a, prob in zip(dist.adjacency, dist.probs):
        assert prob == pytest.approx(weights[tuple(map(tuple, a.tolist()))] / z, rel=1e-10)


def test_exact_distribution_uniform_and_size_limit():
    dist = exact_distribution(TergmModel([TermSpec("edges")], [0.0]), Network.empty(3))
    assert len(dist.probs) == 64
    np.testing.assert_allclose(dist.probs, 1 / 64)
    assert dist.expectation()[0] == pytest.approx(3.0)
    with pytest.raises(ValueError):
        exact_distribution(TergmModel([TermSpec("edges")], [0.0]), Network.empty(5))


def test_sampler_uniform_at_zero_theta():
    n = 8
    model = TergmModel([TermSpec("edges")], [0.0])
    res = run_chain(model, None, Network.empty(n), McmcConfig(2000, 50, 4000, seed=1))
    dens = res.stats[:, 0] / (n * (n - 1))
    assert abs(dens.mean() - 0.5) < 3 * batch_se(dens)


def test_sampler_matches_exact_expectation():
    terms = [TermSpec("edges"), TermSpec("mutual")]
    model = TergmModel(terms, [-0.5, 1.2])
    res = run_chain(model, None, Network.empty(3), McmcConfig(1000, 10, 20000, seed=2))
    want = exact_distribution(model, None, n=3).expectation()
    se = batch_se(res.stats)
    assert np.all(np.abs(res.stats.mean(axis=0) - want) < 3 * se)


def test_sampler_state_distribution_total_variation():
    terms = [TermSpec("edges"), TermSpec("mutual"), STABILITY]
    prev = Network.from_edges(3, [(0, 1), (1, 2)])
    model = TergmModel(terms, [-0.3, 0.8, 0.5])
    dist = exact_distribution(model, prev)
    res = run_chain(model, prev, prev, McmcConfig(1000, 1, 10**6, seed=3), record_adjacency=True)
    counts = np.bincount(dist.index_of(res.adjacency), minlength=64)
    tv = 0.5 * np.abs(counts / counts.sum() - dist.probs).sum()
    assert tv < 0.02


def test_sample_is_seed_reproducible():
    model = TergmModel([TermSpec("edges"), TermSpec("mutual")], [-1.0, 0.5])
    prev = Network.from_edges(5, [(0, 1), (1, 0)])
    a = sample(model, prev, McmcConfig(100, 10, 5, seed=9))
    b = sample(model, prev, McmcConfig(100, 10, 5, seed=9))
    assert a == b and len(a) == 5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_log_weight_relabeling_invariant(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 8))
    terms = [TermSpec("edges"), TermSpec("mutual"), TermSpec("gwesp_otp", decay=0.7),
             TermSpec("gw_indegree", decay=0.5), TermSpec("ctriple"), STABILITY]
    model = TergmModel(terms, rng.normal(size=len(terms)))
    net, prev = random_network(n, 0.4, rng), random_network(n, 0.4, rng)
    perm = rng.permutation(n)
    a = log_weight(model, StatisticContext(net, prev))
    b = log_weight(model, StatisticContext(net.permuted(perm), prev.permuted(perm)))
    assert a == pytest.approx(b, abs=1e-9)


def test_mple_score_equations_hold():
    # at the pseudo-likelihood maximum the logistic score X'(y - p) vanishes
    rng = np.random.default_rng(5)
    waves = [random_network(12, 0.15, rng) for _ in range(3)]
    terms = [TermSpec("edges"), TermSpec("mutual"), TermSpec("gwesp_otp"), STABILITY]
    panel = Panel(waves)
    theta, separated = mple(terms, panel)
    assert not separated
    X, y = mple_design(terms, transitions(terms, panel))
    p = 1 / (1 + np.exp(-X @ theta))
    np.testing.assert_allclose(X.T @ (y - p), 0, atol=1e-6)


def test_identical_waves_flag_separation():
    net = random_network(10, 0.2, np.random.default_rng(0))
    est = estimate([STABILITY], Panel([net, net, net]), McmcConfig(100, 10, 50))
    assert "separation" in est.flags
    assert not est.converged
    assert est.theta_hat[0] == np.inf


def test_estimate_recovers_small_model():
    terms = [TermSpec("edges"), TermSpec("mutual"), STABILITY]
    truth = np.array([-2.0, 1.0, 1.0])
    panel = tergm_panel(terms, truth, n=20, n_waves=3, seed=1)
    est = estimate(terms, panel, McmcConfig(2000, 500, 1000, seed=1))
    assert est.converged
    assert np.all(np.abs(est.convergence_tratios) < 0.1)
    assert np.all(np.abs(est.theta_hat - truth) < 2.5 * est.standard_errors)
    np.testing.assert_allclose(est.standard_errors, np.sqrt(np.diag(est.covariance)))


def test_estimate_targets_sum_over_transitions():
    rng = np.random.default_rng(6)
    waves = [random_network(8, 0.3, rng) for _ in range(3)]
    est = estimate([TermSpec("edges")], Panel(waves), McmcConfig(200, 20, 100), max_iter=1)
    assert est.observed[0] == waves[1].n_edges + waves[2].n_edges


def test_estimate_needs_two_waves():
    with pytest.raises(ValueError):
        estimate([TermSpec("edges")], Panel([Network.empty(4)]))
