"""Out-of-sample evaluation: hold out the last wave, simulate it, score the simulations."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import LeakageError
from .graph import Network, Panel, apply_transform, degrees, geodesic_distribution, shared_partner_counts
from .saom import SaomModel, _run_period, encode_effects
from . import kernels
from .tergm import McmcConfig, TergmModel, run_chain
from .terms import COVARIATE, TermSpec, resolve_covariates, source_wave

log = logging.getLogger(__name__)

GOF_STATISTICS = ("esp", "dsp", "indegree", "geodesic")


@dataclass
class Holdout:
    train: Panel
    test: Network
    test_wave: int
    leaked: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _leaking_terms(terms: Sequence[TermSpec], panel: Panel, test_wave: int) -> list[TermSpec]:
    bad = []
    for t in terms:
        if t.kind not in COVARIATE or t.attr in panel.dyad_covariates:
            continue
        derived = t.transform is not None or t.attr in panel.derived
        per_wave = panel.is_per_wave(t.attr)
        if (derived or per_wave) and source_wave(t, test_wave) >= test_wave:
            bad.append(t)
    return bad


def holdout_split(
    panel: Panel,
    test_wave: int,
    terms: Sequence[TermSpec] = (),
    allow_leakage: bool = False,
) -> Holdout:
    """Split off the last wave as test data.

    Terms whose covariate would be read from the test wave raise
    :class:`LeakageError` unless ``allow_leakage`` is set; with the override
    the test-wave values are exposed in ``Holdout.leaked`` and a warning is
    recorded.
    """
    if test_wave != panel.n_waves - 1:
        raise ValueError(f"test_wave must be the last wave ({panel.n_waves - 1}), got {test_wave}")
    if test_wave < 2:
        raise ValueError("need at least two training waves")
    train = panel.head(test_wave)
    test = panel.waves[test_wave]
    bad = _leaking_terms(terms, panel, test_wave)
    if bad and not allow_leakage:
        raise LeakageError(bad)
    leaked, warnings = {}, []
    for t in bad:
        transform = t.transform or panel.derived.get(t.attr)
        if t.attr in panel.node_covariates and panel.is_per_wave(t.attr):
            leaked[t.attr] = panel.node_covariate(t.attr, test_wave)
        else:
            leaked[t.attr] = apply_transform(test, transform)
        warnings.append(f"leakage override: {t.label()} reads wave {test_wave} (the held-out wave)")
    for w in warnings:
        log.warning(w)
    return Holdout(train, test, test_wave, leaked, warnings)


def prediction_covariates(terms: Sequence[TermSpec], holdout: Holdout) -> dict:
    """Covariates for simulating the test wave, resolved from training data (plus any leaked values)."""
    return resolve_covariates(terms, holdout.train, holdout.test_wave, extra=holdout.leaked)


def predict_wave(
    model: TergmModel | SaomModel,
    last_train_wave: Network,
    nsim: int,
    cfg: McmcConfig,
    covariates: Mapping[str, np.ndarray] | None = None,
    backend: str | None = None,
) -> list[Network]:
    """Simulated networks for the wave following ``last_train_wave``.

    TERGM: one chain conditional on ``last_train_wave``, recorded every
    ``cfg.thinning`` proposals. SAOM: independent period simulations using
    the last period's rate.
    """
    if nsim <= 0:
        return []
    if isinstance(model, TergmModel):
        res = run_chain(model, last_train_wave, last_train_wave, replace(cfg, sample_size=nsim),
                        covariates, record_adjacency=True, backend=backend)
        return [Network(a) for a in res.adjacency]
    if isinstance(model, SaomModel):
        kern = kernels.get(backend)
        enc = encode_effects(model.effects, covariates, last_train_wave.n)
        rate = float(model.rates[-1])
        seeds = np.random.SeedSequence(cfg.seed).spawn(nsim)
        return [
            Network(_run_period(last_train_wave.adjacency, rate, enc, model.beta, np.random.default_rng(s), kern))
            for s in seeds
        ]
    raise TypeError(f"unsupported model type {type(model).__name__}")


# --- scoring ---------------------------------------------------------------


def roc_curve(scores: np.ndarray, truth: np.ndarray):
    """Threshold sweep over distinct scores, highest first.

    Returns ``(thresholds, fpr, tpr)`` with the curve starting at (0, 0)
    (threshold ``+inf``) and ending at (1, 1).
    """
    scores = np.asarray(scores, float)
    truth = np.asarray(truth, bool)
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(t)[distinct]
    fp = np.cumsum(~t)[distinct]
    pos, neg = t.sum(), (~t).sum()
    with np.errstate(invalid="ignore", divide="ignore"):
        tpr = np.r_[0.0, tp / pos]
        fpr = np.r_[0.0, fp / neg]
    return np.r_[np.inf, s[distinct]], fpr, tpr


def pr_curve(scores: np.ndarray, truth: np.ndarray):
    """``(thresholds, recall, precision)`` at each distinct score, highest first."""
    scores = np.asarray(scores, float)
    truth = np.asarray(truth, bool)
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    distinct = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(t)[distinct]
    predicted = distinct + 1
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = tp / t.sum()
    return s[distinct], recall, tp / predicted


def auc_trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))


def auc_step(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under a piecewise-constant PR curve: precision held over each recall increment."""
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def gof_histograms(net: Network) -> dict:
    n = net.n
    geo = geodesic_distribution(net)
    return {
        "esp": shared_partner_counts(net, "edgewise", "OTP"),
        "dsp": shared_partner_counts(net, "dyadwise", "OTP"),
        "indegree": np.bincount(degrees(net, "in"), minlength=n)[:n],
        "geodesic": np.r_[geo["counts"], geo["unreachable"]],
    }


def _bucket_labels(name: str, size: int) -> list:
    if name == "geodesic":
        return [str(d) for d in range(1, size)] + ["inf"]
    return [str(b) for b in range(size)]


@dataclass
class GofReport:
    statistics: dict  # name -> {"buckets", "observed", "min", "q05", "median", "q95", "max"}
    roc: list  # (threshold, fpr, tpr)
    pr: list  # (threshold, recall, precision)
    auc_roc: float
    auc_pr: float
    nsim: int
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def envelope_coverage(self) -> float:
        """Fraction of GOF buckets whose observed count lies within the simulated [min, max]."""
        inside = total = 0
        for st in self.statistics.values():
            obs, lo, hi = map(np.asarray, (st["observed"], st["min"], st["max"]))
            inside += int(np.sum((obs >= lo) & (obs <= hi)))
            total += obs.size
        return inside / total

    def to_dict(self) -> dict:
        def clean(v):
            v = float(v)
            return v if np.isfinite(v) else str(v)

        return {
            "meta": self.meta,
            "nsim": self.nsim,
            "warnings": list(self.warnings),
            "auc_roc": clean(self.auc_roc),
            "auc_pr": clean(self.auc_pr),
            "roc": [[clean(a), clean(b), clean(c)] for a, b, c in self.roc],
            "pr": [[clean(a), clean(b), clean(c)] for a, b, c in self.pr],
            "statistics": {
                name: {k: (list(v) if k == "buckets" else [clean(u) for u in v]) for k, v in st.items()}
                for name, st in self.statistics.items()
            },
        }

    def write_csv(self, outdir: Path, prefix: str = "") -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        header = [f"# {k}={v}" for k, v in sorted(self.meta.items())]

        def dump(path, cols, rows):
            with open(path, "w", newline="") as fh:
                for line in header:
                    fh.write(line + "\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                w.writerows(rows)
            written.append(path)

        dump(outdir / f"{prefix}roc.csv", ["threshold", "fpr", "tpr"], [[repr(float(v)) for v in r] for r in self.roc])
        dump(outdir / f"{prefix}pr.csv", ["threshold", "recall", "precision"], [[repr(float(v)) for v in r] for r in self.pr])
        for name, st in self.statistics.items():
            rows = [
                [b, repr(float(o)), repr(float(q05)), repr(float(med)), repr(float(q95))]
                for b, o, q05, med, q95 in zip(st["buckets"], st["observed"], st["q05"], st["median"], st["q95"])
            ]
            dump(outdir / f"{prefix}gof_{name}.csv", ["bucket", "observed", "q05", "median", "q95"], rows)
        return written


def tie_scores(sims: Sequence[Network]) -> np.ndarray:
    """Fraction of simulations with each tie present (diagonal left at 0)."""
    return np.mean([s.adjacency for s in sims], axis=0)


def score(sims: Sequence[Network], observed: Network, warnings: Sequence[str] = ()) -> GofReport:
    if not sims:
        raise ValueError("score needs at least one simulated network")
    n = observed.n
    if any(s.n != n for s in sims):
        raise ValueError("simulated and observed networks differ in size")
    off = ~np.eye(n, dtype=bool)
    probs = tie_scores(sims)[off]
    truth = observed.adjacency[off].astype(bool)
    thr, fpr, tpr = roc_curve(probs, truth)
    pthr, recall, precision = pr_curve(probs, truth)

    obs_h = gof_histograms(observed)
    sim_h = [gof_histograms(s) for s in sims]
    statistics = {}
    for name in GOF_STATISTICS:
        mat = np.array([h[name] for h in sim_h], dtype=float)
        q = np.quantile(mat, [0.05, 0.5, 0.95], axis=0)
        statistics[name] = {
            "buckets": _bucket_labels(name, mat.shape[1]),
            "observed": obs_h[name].astype(float),
            "min": mat.min(axis=0),
            "q05": q[0],
            "median": q[1],
            "q95": q[2],
            "max": mat.max(axis=0),
        }
    return GofReport(
        statistics=statistics,
        roc=list(zip(thr, fpr, tpr)),
        pr=list(zip(pthr, recall, precision)),
        auc_roc=auc_trapezoid(fpr, tpr),
        auc_pr=auc_step(recall, precision),
        nsim=len(sims),
        warnings=list(warnings),
    )
