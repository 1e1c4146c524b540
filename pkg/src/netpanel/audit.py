"""Detect future-information use in model specifications.

Static part: classify each term by where its data come from relative to the
wave being modelled. Dynamic part: perturb one covariate at the target wave
and check whether simulated networks move.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .graph import Panel, Network
from .tergm import McmcConfig, TergmModel, run_chain
from .terms import COVARIATE, INCOMING, OUTGOING, Binding, TermSpec, resolve_covariates, source_wave


class Severity(str, enum.Enum):
    TAUTOLOGICAL = "Tautological"
    CIRCULAR = "Circular"
    LAGGED_SAFE = "LaggedSafe"
    ENDOGENOUS = "Endogenous"


FLAGGED = (Severity.TAUTOLOGICAL, Severity.CIRCULAR)

_MARGIN = {"sqrt_indegree": "in", "sqrt_outdegree": "out"}


@dataclass
class AuditFinding:
    term: TermSpec
    severity: Severity
    explanation: str
    source_wave: int | None
    dependent_wave: int

    def to_dict(self) -> dict:
        return {
            "term": self.term.label(),
            "spec": self.term.to_dict(),
            "severity": self.severity.value,
            "explanation": self.explanation,
            "source_wave": self.source_wave,
            "dependent_wave": self.dependent_wave,
        }


def _classify_one(term: TermSpec, dep: int, derived: Mapping[str, str]) -> AuditFinding:
    if term.kind not in COVARIATE:
        if term.kind == "memory_stability":
            return AuditFinding(term, Severity.LAGGED_SAFE, "depends on the previous wave only", dep - 1, dep)
        return AuditFinding(term, Severity.ENDOGENOUS, "structural statistic of the modelled network", None, dep)

    src = source_wave(term, dep)
    transform = term.transform or derived.get(term.attr)
    if transform is None:
        if term.binding is Binding.LAGGED and (term.source_wave is None or src < dep):
            return AuditFinding(term, Severity.LAGGED_SAFE, "exogenous covariate declared as known before the modelled wave", src, dep)
        if term.source_wave is not None and src < dep:
            return AuditFinding(term, Severity.LAGGED_SAFE, f"covariate declared from wave {src}", src, dep)
        return AuditFinding(term, Severity.CIRCULAR,
                            "unknown provenance: covariate may be computed from the modelled wave", src, dep)

    if src < dep:
        return AuditFinding(term, Severity.LAGGED_SAFE, f"{transform} of earlier wave {src}", src, dep)
    margin = _MARGIN[transform]
    feeds = "in" if term.kind in INCOMING else "out" if term.kind in OUTGOING else None
    if feeds == margin:
        return AuditFinding(term, Severity.TAUTOLOGICAL,
                            f"{transform} of wave {src} predicts the same {margin}-degree margin it was computed from",
                            src, dep)
    return AuditFinding(term, Severity.CIRCULAR,
                        f"{transform} of wave {src} (the modelled wave) used as an exogenous covariate", src, dep)


def classify(spec: Sequence[TermSpec], dependent_wave: int, derived: Mapping[str, str] | None = None) -> list[AuditFinding]:
    """One finding per term, in spec order."""
    derived = derived or {}
    return [_classify_one(t, dependent_wave, derived) for t in spec]


def has_leakage(findings: Sequence[AuditFinding]) -> bool:
    return any(f.severity in FLAGGED for f in findings)


@dataclass
class ProbeResult:
    covariate: str
    constant: float
    baseline_stats: dict
    perturbed_stats: dict
    divergence: float
    noise: float
    verdict: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "covariate": self.covariate,
            "constant": self.constant,
            "baseline": self.baseline_stats,
            "perturbed": self.perturbed_stats,
            "divergence": self.divergence,
            "noise": self.noise,
            "verdict": self.verdict,
        }


def _summaries(adj: np.ndarray) -> dict:
    n = adj.shape[1]
    dens = adj.sum(axis=(1, 2)) / (n * (n - 1))
    return {
        "density": dens,
        "indegree": adj.sum(axis=1).astype(float),
        "outdegree": adj.sum(axis=2).astype(float),
    }


def _divergence(a: dict, b: dict) -> float:
    shift = max(
        float(np.abs(a["indegree"].mean(0) - b["indegree"].mean(0)).max()),
        float(np.abs(a["outdegree"].mean(0) - b["outdegree"].mean(0)).max()),
    )
    return abs(float(a["density"].mean() - b["density"].mean())) + shift


def _take(s: dict, idx) -> dict:
    return {k: v[idx] for k, v in s.items()}


def mc_noise(summ: dict, rng: np.random.Generator, splits: int = 50, blocks: int = 20) -> float:
    """Expected divergence between two independent arms of this size.

    Estimated by splitting the sample into two halves of contiguous blocks
    (which keeps short-range chain autocorrelation inside blocks); half-vs-half
    divergence is scaled by 1/sqrt(2) to the full-size arm comparison.
    """
    m = summ["density"].shape[0]
    blocks = max(2, min(blocks, m))
    edges = np.linspace(0, m, blocks + 1).astype(int)
    groups = [np.arange(edges[k], edges[k + 1]) for k in range(blocks)]
    vals = []
    for _ in range(splits):
        pick = rng.permutation(blocks)
        left = np.concatenate([groups[k] for k in pick[: blocks // 2]])
        right = np.concatenate([groups[k] for k in pick[blocks // 2 :]])
        vals.append(_divergence(_take(summ, left), _take(summ, right)))
    return float(np.mean(vals)) / np.sqrt(2.0)


def perturbation_probe(
    model: TergmModel,
    panel: Panel,
    covariate: str | Sequence[str],
    constant: float,
    target_wave: int,
    previous: Network,
    nsim: int,
    cfg: McmcConfig,
    extra: Mapping[str, np.ndarray] | None = None,
    backend: str | None = None,
) -> ProbeResult:
    """Simulate the target wave with and without ``covariate`` set to ``constant`` at that wave.

    ``covariate`` may name several covariates, which are perturbed together.
    ``panel`` (plus ``extra`` for values beyond its last wave) is where the
    model's covariates are resolved from. If no term reads the covariate at
    the target wave, both arms sample the same distribution and the
    divergence stays within Monte-Carlo noise.
    """
    names = [covariate] if isinstance(covariate, str) else list(covariate)
    extra = dict(extra or {})
    for name in names:
        known = name in panel.node_covariates or name in extra or any(
            t.attr == name for t in model.terms if t.transform or name in panel.derived
        )
        if not known:
            raise KeyError(f"covariate {name!r} not found")
    # derived attributes become stored per-wave values so that one wave can be overwritten
    for t in model.terms:
        if t.transform and t.attr not in panel.node_covariates:
            panel = panel.with_derived(t.attr, t.transform)
    base_cov = resolve_covariates(model.terms, panel, target_wave, extra)

    const = np.full(panel.n, float(constant))
    pert_panel, pert_extra = panel, dict(extra)
    for name in names:
        if target_wave < panel.n_waves:
            if name not in panel.node_covariates:
                raise KeyError(f"covariate {name!r} is not a node covariate")
            pert_panel = pert_panel.with_node_covariate(name, target_wave, const)
        else:
            pert_extra[name] = const
    pert_cov = resolve_covariates(model.terms, pert_panel, target_wave, pert_extra)

    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    run_cfg = replace(cfg, sample_size=nsim)
    arms = []
    for cov, seed in ((base_cov, seeds[0]), (pert_cov, seeds[1])):
        res = run_chain(model, previous, previous, run_cfg, cov, rng=np.random.default_rng(seed),
                        record_adjacency=True, backend=backend)
        arms.append(_summaries(res.adjacency))
    base, pert = arms
    div = _divergence(base, pert)
    noise = mc_noise(base, np.random.default_rng(seeds[2]))
    verdict = "uses_covariate" if div > 3.0 * noise else "independent"

    def summary(s):
        return {
            "mean_density": float(s["density"].mean()),
            "sd_density": float(s["density"].std(ddof=1)) if s["density"].size > 1 else 0.0,
            "mean_indegree": [float(v) for v in s["indegree"].mean(0)],
            "mean_outdegree": [float(v) for v in s["outdegree"].mean(0)],
        }

    return ProbeResult(",".join(names), float(constant), summary(base), summary(pert), div, noise, verdict)
