import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netpanel.audit import FLAGGED, Severity, classify, has_leakage, perturbation_probe
from netpanel.graph import Panel, random_network
from netpanel.io import builtin_spec, parse_model_spec
from netpanel.terms import KINDS, TermSpec, TRANSFORMS
from netpanel.tergm import McmcConfig, TergmModel

IDEG = TermSpec("node_icov", attr="idegsqrt", binding="Contemporaneous", transform="sqrt_indegree")
ODEG_IN = TermSpec("node_icov", attr="odegsqrt", binding="Contemporaneous", transform="sqrt_outdegree")
ODEG_OUT = TermSpec("node_ocov", attr="odegsqrt", binding="Contemporaneous", transform="sqrt_outdegree")
STABILITY = TermSpec("memory_stability", binding="Lagged")


def panel4(seed=0, n=12):
    rng = np.random.default_rng(seed)
    waves = [random_network(n, 0.2, rng) for _ in range(4)]
    return Panel(waves, {"score": rng.normal(size=(4, n)), "sex": rng.integers(1, 3, size=n)})


def test_classify_reference_cases():
    sev = [f.severity for f in classify([TermSpec("gwesp_otp"), IDEG, ODEG_IN, ODEG_OUT, STABILITY], 3)]
    assert sev == [Severity.ENDOGENOUS, Severity.TAUTOLOGICAL, Severity.CIRCULAR, Severity.TAUTOLOGICAL,
                   Severity.LAGGED_SAFE]


def test_classify_lagged_and_declared_waves():
    lag = TermSpec("node_icov", attr="idegsqrt", binding="Lagged", transform="sqrt_indegree")
    pinned = TermSpec("node_icov", attr="idegsqrt", binding="Contemporaneous", transform="sqrt_indegree",
                      source_wave=1)
    found = classify([lag, pinned, TermSpec("node_match", attr="sex", binding="Lagged")], 3)
    assert [f.severity for f in found] == [Severity.LAGGED_SAFE] * 3
    assert found[0].source_wave == 2 and found[1].source_wave == 1


def test_classify_unknown_provenance_is_flagged():
    # a contemporaneous covariate read from a file with no stated origin
    f = classify([TermSpec("node_icov", attr="mystery", binding="Contemporaneous")], 3)[0]
    assert f.severity is Severity.CIRCULAR and "unknown provenance" in f.explanation
    # a panel-level derived attribute is recognised without a transform on the term
    g = classify([TermSpec("node_ocov", attr="d", binding="Contemporaneous")], 3, {"d": "sqrt_outdegree"})[0]
    assert g.severity is Severity.TAUTOLOGICAL


def test_shipped_specs():
    flawed = classify(parse_model_spec(builtin_spec("flawed_lc")).terms, 3)
    sev = [f.severity for f in flawed]
    assert sev.count(Severity.TAUTOLOGICAL) == 2 and sev.count(Severity.CIRCULAR) == 1
    assert has_leakage(flawed)
    corrected = classify(parse_model_spec(builtin_spec("corrected")).terms, 3)
    assert not has_leakage(corrected)
    assert {f.severity for f in corrected} <= {Severity.ENDOGENOUS, Severity.LAGGED_SAFE}


def term_strategy():
    def build(kind, binding, transform, sw):
        if kind in ("node_icov", "node_ocov", "node_ifactor", "node_ofactor", "node_match"):
            return TermSpec(kind, attr="a", binding=binding, transform=transform, source_wave=sw)
        if kind == "edge_cov":
            return TermSpec(kind, attr="w", binding=binding, source_wave=sw)
        if kind == "memory_stability":
            return TermSpec(kind, binding="Lagged")
        return TermSpec(kind)

    return st.builds(build, st.sampled_from(KINDS), st.sampled_from(["Lagged", "Contemporaneous"]),
                     st.sampled_from((None,) + TRANSFORMS), st.sampled_from([None, 0, 1, 2, 3]))


@settings(max_examples=200, deadline=None)
@given(st.lists(term_strategy(), max_size=10), st.integers(1, 5))
def test_classify_is_total_and_deterministic(terms, dep):
    a = classify(terms, dep)
    assert len(a) == len(terms)
    assert [f.to_dict() for f in a] == [f.to_dict() for f in classify(terms, dep)]
    for t, f in zip(terms, a):
        if f.severity in FLAGGED:
            # only a covariate read at or after the modelled wave can be flagged
            assert t.attr is not None and f.source_wave >= dep


def test_probe_requires_known_covariate():
    panel = panel4()
    model = TergmModel([TermSpec("edges")], [-1.0])
    with pytest.raises(KeyError):
        perturbation_probe(model, panel, "nope", 10.0, 3, panel.waves[2], 10, McmcConfig(100, 10, 10))


def test_probe_sound_for_unused_covariate():
    panel = panel4(seed=1, n=15)
    model = TergmModel([TermSpec("edges"), TermSpec("mutual"), STABILITY], [-2.0, 1.0, 1.0])
    res = perturbation_probe(model, panel, "score", 10.0, 3, panel.waves[2], 500, McmcConfig(2000, 100, 1, seed=4))
    assert res.verdict == "independent"
    assert 0 <= res.divergence <= 3 * res.noise


def test_probe_lagged_binding_ignores_target_wave():
    # the term reads wave 2 when modelling wave 3, so overwriting wave 3 must not matter
    panel = panel4(seed=2, n=15)
    terms = [TermSpec("edges"), TermSpec("node_icov", attr="score", binding="Lagged"), STABILITY]
    model = TergmModel(terms, [-2.0, 0.8, 1.0])
    res = perturbation_probe(model, panel, "score", 10.0, 3, panel.waves[2], 500, McmcConfig(2000, 100, 1, seed=5))
    assert res.verdict == "independent"
    # the same covariate read contemporaneously is detected
    terms[1] = TermSpec("node_icov", attr="score", binding="Contemporaneous")
    hit = perturbation_probe(TergmModel(terms, model.theta), panel, "score", 10.0, 3, panel.waves[2], 500,
                             McmcConfig(2000, 100, 1, seed=5))
    assert hit.verdict == "uses_covariate"


def flawed_model():
    terms = [TermSpec("edges"), TermSpec("mutual"), IDEG, ODEG_IN, ODEG_OUT, STABILITY]
    return TergmModel(terms, [-5.0, 1.0, 1.5, -0.2, 1.2, 1.0])


def test_probe_flawed_model_goes_complete():
    panel = panel4(seed=3, n=15)
    res = perturbation_probe(flawed_model(), panel, "idegsqrt", 10.0, 3, panel.waves[2], 200,
                             McmcConfig(5000, 200, 1, seed=6), extra=None)
    assert res.verdict == "uses_covariate"
    assert res.perturbed_stats["mean_density"] > 0.9
    assert res.baseline_stats["mean_density"] < 0.5


def test_probe_divergence_monotone_in_constant():
    panel = panel4(seed=3, n=15)
    cfg = McmcConfig(3000, 200, 1, seed=7)
    div = [perturbation_probe(flawed_model(), panel, "idegsqrt", c, 3, panel.waves[2], 100, cfg).divergence
           for c in (2.0, 5.0, 10.0)]
    assert div[0] < div[1] < div[2]
