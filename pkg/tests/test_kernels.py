import numpy as np
import pytest

from netpanel import kernels
from netpanel.graph import Network, random_network, two_path_matrix
from netpanel.saom import EFFECTS, SaomEffect, SaomModel, actor_statistics, encode_effects, simulate_period
from netpanel.terms import KINDS, TermSpec, encode_terms
from netpanel.tergm import McmcConfig, TergmModel, run_chain

needs_numba = pytest.mark.skipif("numba" not in kernels.available(), reason="numba unavailable")


def all_terms():
    out = []
    for kind in KINDS:
        if kind in ("node_icov", "node_ocov"):
            out.append(TermSpec(kind, attr="b", binding="Lagged"))
        elif kind in ("node_ifactor", "node_ofactor", "node_match"):
            out.append(TermSpec(kind, attr="sex", binding="Lagged"))
        elif kind == "edge_cov":
            out.append(TermSpec(kind, attr="w", binding="Lagged"))
        elif kind == "memory_stability":
            out.append(TermSpec(kind, binding="Lagged"))
        else:
            out.append(TermSpec(kind, decay=0.9 if kind.startswith("gw") else None))
    return out


def covariates(n, rng):
    return {"b": rng.normal(size=n), "sex": rng.integers(1, 3, size=n), "w": rng.integers(0, 2, size=(n, n)).astype(float)}


def all_effects():
    return [SaomEffect(e, attr="w" if e == "dyadic_cov" else "b" if e.startswith("cov") else None,
                       decay=0.8 if e.startswith("gwesp") else None) for e in EFFECTS]


def test_backend_selection(monkeypatch):
    monkeypatch.setenv("NETPANEL_BACKEND", "numpy")
    assert kernels.default_backend() == "numpy"
    assert kernels.get() is kernels.vec
    monkeypatch.setenv("NETPANEL_BACKEND", "fortran")
    with pytest.raises(ValueError):
        kernels.default_backend()
    with pytest.raises(ValueError):
        kernels.get("fortran")


@needs_numba
def test_delta_backends_agree():
    rng = np.random.default_rng(1)
    terms = all_terms()
    for _ in range(50):
        n = int(rng.integers(3, 9))
        x = random_network(n, 0.4, rng).adjacency.copy()
        prev = random_network(n, 0.4, rng).adjacency.copy()
        enc = encode_terms(terms, covariates(n, rng), n)
        a, b = rng.choice(n, 2, replace=False)
        outs = []
        for mod in (kernels.vec, kernels.jit):
            out = np.empty(len(terms))
            mod.delta(x, two_path_matrix(x), x.sum(0).astype(np.int64), x.sum(1).astype(np.int64), prev,
                      int(a), int(b), enc.kinds, enc.alphas, enc.nodecov, enc.dyadcov, out)
            outs.append(out)
        np.testing.assert_allclose(outs[0], outs[1], atol=1e-12)


@needs_numba
def test_chain_backends_identical():
    rng = np.random.default_rng(2)
    n = 7
    terms = [TermSpec("edges"), TermSpec("mutual"), TermSpec("gwesp_otp", decay=0.5),
             TermSpec("node_icov", attr="b", binding="Lagged"), TermSpec("memory_stability", binding="Lagged")]
    cov = covariates(n, rng)
    model = TergmModel(terms, np.array([-1.0, 0.8, 0.3, 0.2, 0.5]))
    prev = random_network(n, 0.3, rng)
    cfg = McmcConfig(burn_in=500, thinning=7, sample_size=60, seed=3)
    res = [run_chain(model, prev, prev, cfg, cov, record_adjacency=True, backend=b) for b in ("numpy", "numba")]
    np.testing.assert_array_equal(res[0].adjacency, res[1].adjacency)
    np.testing.assert_allclose(res[0].stats, res[1].stats, atol=1e-9)
    assert res[0].acceptance == res[1].acceptance


def test_chain_tracks_statistics_incrementally():
    # the running statistic vector must equal a fresh evaluation of the final state
    from netpanel.terms import StatisticContext, statistic_vector

    rng = np.random.default_rng(4)
    n = 6
    terms = all_terms()
    cov = covariates(n, rng)
    theta = rng.normal(scale=0.2, size=len(terms))
    prev = random_network(n, 0.3, rng)
    for backend in kernels.available():
        res = run_chain(TergmModel(terms, theta), prev, prev, McmcConfig(200, 13, 20, seed=5), cov,
                        record_adjacency=True, backend=backend)
        for adj, stats in zip(res.adjacency, res.stats):
            want = statistic_vector(terms, StatisticContext(Network(adj), prev, cov))
            np.testing.assert_allclose(stats, want, atol=1e-8)


@needs_numba
def test_actor_delta_backends_agree():
    rng = np.random.default_rng(6)
    effects = all_effects()
    for _ in range(30):
        n = int(rng.integers(3, 9))
        x = random_network(n, 0.4, rng).adjacency.copy()
        kinds, alphas, nodecov, dyadcov = encode_effects(effects, covariates(n, rng), n)
        i = int(rng.integers(n))
        outs = []
        for mod in (kernels.vec, kernels.jit):
            out = np.empty((len(effects), n))
            mod.actor_delta(x, two_path_matrix(x), x.sum(0).astype(np.int64), x.sum(1).astype(np.int64),
                            i, kinds, alphas, nodecov, dyadcov, out)
            outs.append(out)
        np.testing.assert_allclose(outs[0], outs[1], atol=1e-12)


def test_actor_delta_matches_statistic_difference():
    rng = np.random.default_rng(7)
    effects = all_effects()
    for backend in kernels.available():
        mod = kernels.get(backend)
        for _ in range(20):
            n = int(rng.integers(3, 8))
            net = random_network(n, 0.4, rng)
            cov = covariates(n, rng)
            x = net.adjacency.copy()
            kinds, alphas, nodecov, dyadcov = encode_effects(effects, cov, n)
            i = int(rng.integers(n))
            out = np.empty((len(effects), n))
            mod.actor_delta(x, two_path_matrix(x), x.sum(0).astype(np.int64), x.sum(1).astype(np.int64),
                            i, kinds, alphas, nodecov, dyadcov, out)
            base = actor_statistics(effects, net, cov)[i]
            for j in range(n):
                if j == i:
                    continue
                after = actor_statistics(effects, net.toggled(i, j), cov)[i]
                sign = 1 - 2 * int(x[i, j])
                np.testing.assert_allclose(sign * out[:, j], after - base, atol=1e-9)


@needs_numba
def test_saom_period_backends_identical():
    rng = np.random.default_rng(8)
    n = 10
    effects = [SaomEffect("outdegree"), SaomEffect("reciprocity"), SaomEffect("gwesp_transitive"),
               SaomEffect("cov_same", "b")]
    cov = {"b": rng.integers(0, 2, size=n)}
    model = SaomModel([3.0], effects, [-1.5, 1.0, 0.5, 0.3])
    start = random_network(n, 0.2, rng)
    a = simulate_period(model, start, 11, covariates=cov, backend="numpy")
    b = simulate_period(model, start, 11, covariates=cov, backend="numba")
    assert a == b
