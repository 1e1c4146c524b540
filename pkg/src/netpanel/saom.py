"""Minimal stochastic actor-oriented model.

Actors get opportunities to change one outgoing tie at a time (mini-steps);
each opportunity is a multinomial-logit choice over toggling one tie or
staying put, driven by the actor's objective function. Parameters are
estimated by the method of moments with Robbins-Monro stochastic
approximation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from . import kernels
from .graph import Network, Panel, two_path_matrix
from .terms import DEFAULT_DECAY, factor_indicator, gw_weight
from .tergm import ParameterEstimate

log = logging.getLogger(__name__)

EFFECTS = (
    "outdegree",
    "reciprocity",
    "transitive_ties",
    "gwesp_transitive",
    "gwesp_cyclic",
    "indegree_popularity_sqrt",
    "outdegree_popularity",
    "outdegree_activity_sqrt",
    "cov_ego",
    "cov_alter",
    "cov_same",
    "dyadic_cov",
)
EFFECT_CODE = {e: i for i, e in enumerate(EFFECTS)}
NODE_EFFECTS = frozenset({"cov_ego", "cov_alter", "cov_same"})
WEIGHTED_EFFECTS = frozenset({"gwesp_transitive", "gwesp_cyclic"})


@dataclass(frozen=True)
class SaomEffect:
    name: str
    attr: str | None = None
    decay: float | None = None

    def __post_init__(self):
        from .errors import SpecError

        if self.name not in EFFECT_CODE:
            raise SpecError(f"unknown SAOM effect {self.name!r}; valid effects: {', '.join(EFFECTS)}")
        needs_attr = self.name in NODE_EFFECTS or self.name == "dyadic_cov"
        if needs_attr and not self.attr:
            raise SpecError(f"effect {self.name!r} needs an attr")
        if not needs_attr and self.attr is not None:
            raise SpecError(f"effect {self.name!r} takes no attr")
        if self.name in WEIGHTED_EFFECTS:
            if self.decay is None:
                object.__setattr__(self, "decay", DEFAULT_DECAY)
        elif self.decay is not None:
            raise SpecError(f"decay given for non-weighted effect {self.name!r}")

    def label(self) -> str:
        return f"{self.name}({self.attr})" if self.attr else self.name

    def to_dict(self) -> dict:
        out = {"effect": self.name}
        if self.attr:
            out["attr"] = self.attr
        if self.decay is not None:
            out["decay"] = self.decay
        return out


@dataclass
class SaomModel:
    rates: np.ndarray  # one per period
    effects: list[SaomEffect]
    beta: np.ndarray

    def __post_init__(self):
        self.rates = np.atleast_1d(np.asarray(self.rates, dtype=float))
        self.beta = np.asarray(self.beta, dtype=float)
        if self.beta.shape != (len(self.effects),):
            raise ValueError(f"beta has length {self.beta.size}, expected {len(self.effects)}")
        if np.any(self.rates < 0):
            raise ValueError("rates must be nonnegative")

    @property
    def names(self) -> list[str]:
        return [f"rate_{p + 1}" for p in range(self.rates.size)] + [e.label() for e in self.effects]


@dataclass(frozen=True)
class ObjectiveContext:
    actor: int
    current: Network
    covariates: Mapping[str, np.ndarray] | None = None

    def __post_init__(self):
        if not 0 <= self.actor < self.current.n:
            raise ValueError(f"actor {self.actor} out of range")


def _node_values(vals) -> np.ndarray:
    """Centred node values (factors become a centred indicator of the non-reference level)."""
    vals = np.asarray(vals)
    v = vals.astype(float) if np.issubdtype(vals.dtype, np.number) else factor_indicator(vals).astype(float)
    return v - v.mean()


def _dyad_values(mat) -> np.ndarray:
    """Dyadic covariate centred on its off-diagonal mean."""
    w = np.array(mat, dtype=float)
    off = ~np.eye(w.shape[0], dtype=bool)
    w[off] -= w[off].mean()
    w[~off] = 0.0
    return w


def encode_effects(effects: Sequence[SaomEffect], covariates: Mapping[str, np.ndarray] | None, n: int):
    covariates = covariates or {}
    k = len(effects)
    kinds = np.array([EFFECT_CODE[e.name] for e in effects], dtype=np.int64)
    alphas = np.array([e.decay or 0.0 for e in effects], dtype=np.float64)
    nodecov = np.zeros((k, n))
    dyadcov = np.zeros((k, n, n))
    for idx, e in enumerate(effects):
        if e.attr is None:
            continue
        if e.attr not in covariates:
            raise KeyError(f"missing covariate {e.attr!r} for effect {e.label()}")
        if e.name == "dyadic_cov":
            dyadcov[idx] = _dyad_values(covariates[e.attr])
        elif e.name == "cov_same":
            _, codes = np.unique(np.asarray(covariates[e.attr]), return_inverse=True)
            nodecov[idx] = codes
        else:
            nodecov[idx] = _node_values(covariates[e.attr])
    return kinds, alphas, nodecov, dyadcov


def actor_statistics(effects: Sequence[SaomEffect], net: Network, covariates=None) -> np.ndarray:
    """``(n, K)`` matrix of every actor's statistic for every effect."""
    covariates = covariates or {}
    x = net.adjacency.astype(np.int64)
    tp = two_path_matrix(x)
    indeg = x.sum(axis=0)
    outdeg = x.sum(axis=1)
    cols = []
    for e in effects:
        name = e.name
        if name == "outdegree":
            c = outdeg
        elif name == "reciprocity":
            c = (x * x.T).sum(axis=1)
        elif name == "transitive_ties":
            c = (x * (tp > 0)).sum(axis=1)
        elif name == "gwesp_transitive":
            c = (x * gw_weight(tp, e.decay)).sum(axis=1)
        elif name == "gwesp_cyclic":
            c = (x * gw_weight(tp.T, e.decay)).sum(axis=1)
        elif name == "indegree_popularity_sqrt":
            c = x @ np.sqrt(indeg)
        elif name == "outdegree_popularity":
            c = x @ outdeg
        elif name == "outdegree_activity_sqrt":
            c = outdeg ** 1.5
        elif name == "cov_ego":
            c = outdeg * _node_values(covariates[e.attr])
        elif name == "cov_alter":
            c = x @ _node_values(covariates[e.attr])
        elif name == "cov_same":
            v = np.asarray(covariates[e.attr])
            c = (x * (v[:, None] == v[None, :])).sum(axis=1)
        else:  # dyadic_cov
            c = (x * _dyad_values(covariates[e.attr])).sum(axis=1)
        cols.append(np.asarray(c, dtype=float))
    return np.column_stack(cols) if cols else np.zeros((net.n, 0))


def objective(model: SaomModel, ctx: ObjectiveContext, candidate: Network) -> float:
    """Actor ``ctx.actor``'s evaluation function at ``candidate``.

    ``candidate`` may differ from ``ctx.current`` in at most one outgoing
    tie of that actor.
    """
    diff = candidate.adjacency != ctx.current.adjacency
    rows = np.nonzero(diff.any(axis=1))[0]
    if diff.sum() > 1 or (rows.size and rows[0] != ctx.actor):
        raise ValueError("candidate may differ from the current network in one outgoing tie of the actor only")
    stats = actor_statistics(model.effects, candidate, ctx.covariates)
    return float(stats[ctx.actor] @ model.beta)


def choice_probabilities(model: SaomModel, ctx: ObjectiveContext, backend: str | None = None) -> np.ndarray:
    """Probability of each option for the actor: entry ``j`` toggles ``i -> j``, entry ``i`` stays."""
    kern = kernels.get(backend)
    n = ctx.current.n
    x = np.array(ctx.current.adjacency, dtype=np.uint8)
    tp = two_path_matrix(x)
    kinds, alphas, nodecov, dyadcov = encode_effects(model.effects, ctx.covariates, n)
    buf = np.empty((len(model.effects), n))
    vals = kern.choice_values(x, tp, x.sum(axis=0, dtype=np.int64), x.sum(axis=1, dtype=np.int64),
                              ctx.actor, kinds, alphas, nodecov, dyadcov, model.beta, buf)
    p = np.exp(vals - vals.max())
    return p / p.sum()


def _ministep_draws(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    # inverse-CDF draw keeps the step count monotone in the rate under common random numbers
    u0 = rng.random()
    steps = int(sps.poisson.ppf(u0, n * rate)) if rate > 0 else 0
    return rng.random((steps, 2))


def _run_period(x: np.ndarray, rate, enc, beta, rng, kern) -> np.ndarray:
    n = x.shape[0]
    draws = _ministep_draws(rng, n, rate)
    x = np.array(x, dtype=np.uint8, copy=True)
    if draws.shape[0]:
        tp = two_path_matrix(x)
        indeg = x.sum(axis=0, dtype=np.int64)
        outdeg = x.sum(axis=1, dtype=np.int64)
        kinds, alphas, nodecov, dyadcov = enc
        kern.saom_period(x, tp, indeg, outdeg, kinds, alphas, nodecov, dyadcov, beta,
                         np.ascontiguousarray(draws[:, 0]), np.ascontiguousarray(draws[:, 1]))
    return x


def simulate_period(
    model: SaomModel,
    start: Network,
    seed,
    period: int = 0,
    covariates: Mapping[str, np.ndarray] | None = None,
    backend: str | None = None,
) -> Network:
    """End state of one period: ``Poisson(n * rate)`` mini-steps from ``start``."""
    kern = kernels.get(backend)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    enc = encode_effects(model.effects, covariates, start.n)
    x = _run_period(start.adjacency, float(model.rates[period]), enc, model.beta, rng, kern)
    return Network(x)


# --- method of moments ----------------------------------------------------


@dataclass(frozen=True)
class SaomConfig:
    """Stochastic-approximation settings.

    ``fd_eps`` is the forward-difference step used for the derivative of
    expected statistics with respect to each parameter; derivatives use
    common random numbers, so moderate steps (0.1) are adequate. Phase 1
    takes up to ``n1_steps`` Newton steps, stopping once every simulated
    statistic is within ``near`` standard deviations of its target. If a
    phase-2 simulation lands more than ``blowup`` standard deviations from the
    targets, the subphase restarts with only the diagonal of the derivative as
    gain matrix, after which the derivative is re-estimated from ``n_deriv``
    simulations at the subphase result (at most twice). Phase 3
    estimates the derivative from its first ``n_deriv`` simulations and the
    statistic covariance from all ``n3``.
    """

    n1: int = 60
    n1_steps: int = 6
    near: float = 2.0
    n_subphases: int = 4
    n2_extra: int = 200
    gain: float = 0.2
    diagonalize: float = 0.2
    n3: int = 1000
    n_deriv: int = 200
    fd_eps: float = 0.1
    max_runs: int = 4
    max_step: float = 1.0
    blowup: float = 10.0
    min_rate: float = 1e-3
    tol: float = 0.1
    seed: int = 0


def period_covariates(effects: Sequence[SaomEffect], panel: Panel, period: int) -> dict:
    """Covariates read at the start of ``period`` (wave ``period``)."""
    out = {}
    for e in effects:
        if e.attr is None:
            continue
        if e.name == "dyadic_cov":
            out[e.attr] = panel.dyad_covariates[e.attr]
        else:
            out[e.attr] = panel.node_covariate(e.attr, period)
    return out


class _Moments:
    """Target statistics and their simulation for a panel."""

    def __init__(self, effects, panel: Panel, backend):
        self.effects = list(effects)
        self.kern = kernels.get(backend)
        self.panel = panel
        self.periods = panel.n_waves - 1
        self.covs = [period_covariates(effects, panel, p) for p in range(self.periods)]
        self.encs = [encode_effects(effects, c, panel.n) for c in self.covs]
        self.observed = self.statistics([w.adjacency for w in panel.waves[1:]])

    def statistics(self, ends) -> np.ndarray:
        ham = [
            float(np.sum(self.panel.waves[p].adjacency != ends[p])) for p in range(self.periods)
        ]
        eff = sum(
            actor_statistics(self.effects, Network(ends[p]), self.covs[p]).sum(axis=0)
            for p in range(self.periods)
        )
        return np.concatenate([ham, np.atleast_1d(eff)])

    def simulate(self, theta, seed) -> np.ndarray:
        rates = np.asarray(theta[: self.periods])
        beta = np.asarray(theta[self.periods :])
        rng = np.random.default_rng(seed)
        ends = [
            _run_period(self.panel.waves[p].adjacency, float(rates[p]), self.encs[p], beta, rng, self.kern)
            for p in range(self.periods)
        ]
        return self.statistics(ends)


def _derivative(mom: _Moments, theta, seeds, eps, base=None):
    """Forward differences of expected statistics under common random numbers.

    Also returns the base-point simulations (``base`` may pass them in when
    already simulated with the same seeds).
    """
    p = theta.size
    if base is None:
        base = np.array([mom.simulate(theta, s) for s in seeds])
    d = np.empty((p, p))
    for k in range(p):
        th = theta.copy()
        th[k] += eps
        pert = np.array([mom.simulate(th, s) for s in seeds])
        d[:, k] = (pert - base).mean(axis=0) / eps
    return d, base


def _solve(d, v):
    return np.linalg.lstsq(d, v, rcond=None)[0]


def estimate_mom(
    effects: Sequence[SaomEffect],
    panel: Panel,
    cfg: SaomConfig = SaomConfig(),
    backend: str | None = None,
) -> ParameterEstimate:
    """Method-of-moments estimate of period rates and objective-function weights.

    Targets are the Hamming distance between consecutive waves (one per
    period, for the rate) and the summed actor statistics of each end wave.
    """
    if panel.n_waves < 2:
        raise ValueError("SAOM estimation needs at least two waves")
    effects = list(effects)
    mom = _Moments(effects, panel, backend)
    per = mom.periods
    obs = mom.observed
    p = per + len(effects)
    names = [f"rate_{q + 1}" for q in range(per)] + [e.label() for e in effects]
    seed_rng = np.random.default_rng(cfg.seed)
    flags: list[str] = []

    def next_seeds(k):
        return [int(s) for s in seed_rng.integers(0, 2**63 - 1, size=k)]

    def clip(th):
        th = th.copy()
        th[:per] = np.maximum(th[:per], cfg.min_rate)
        return th

    def step(th, dmat, dev, scale=1.0):
        # rates may at most halve or double per step; other coordinates move at most max_step
        delta = scale * _solve(dmat, dev)
        big = np.abs(delta[per:]).max(initial=0.0)
        if big > cfg.max_step:
            delta[per:] *= cfg.max_step / big
        delta[:per] = np.clip(delta[:per], -th[:per], th[:per] / 2)
        return clip(th - delta)

    n = panel.n
    theta = np.zeros(p)
    for q in range(per):
        theta[q] = max(2.0 * obs[q] / n, 0.1)
    if "outdegree" in [e.name for e in effects]:
        dens = np.mean([w.density() for w in panel.waves])
        dens = min(max(dens, 0.01), 0.99)
        theta[per + [e.name for e in effects].index("outdegree")] = math.log(dens / (1 - dens))

    # phase 1: truncated Newton steps with a fresh derivative each time, until the
    # simulated statistics are near the targets (a far-away derivative misguides phase 2)
    for it in range(cfg.n1_steps):
        d, base = _derivative(mom, theta, next_seeds(cfg.n1), cfg.fd_eps)
        if np.linalg.matrix_rank(d) < p:
            log.warning("phase 1 derivative matrix is singular")
        d_used = (1 - cfg.diagonalize) * d + cfg.diagonalize * np.diag(np.diag(d))
        dev = base.mean(axis=0) - obs
        sd = base.std(axis=0, ddof=1)
        far = float(np.max(np.abs(dev) / np.where(sd > 0, sd, 1.0)))
        log.info("phase 1 step %d: max standardized deviation %.2f, theta=%s", it + 1, far, np.round(theta, 3))
        if far < cfg.near:
            break
        theta = step(theta, d_used, dev, 0.5 if it == 0 else 1.0)

    # Robbins-Monro gain matrix. A noisy full derivative can point steps away from the
    # targets, whereas the diagonal always moves each coordinate toward its own target.
    sd1 = np.where(sd > 0, sd, 1.0)
    rm = {"matrix": d_used, "diagonal": False, "fallbacks": 0}

    def subphase(th, gain, length):
        # Robbins-Monro iterations; the subphase result is the average of the trajectory
        start = th
        trail = np.empty((length, p))
        for r, seed in enumerate(next_seeds(length)):
            s = mom.simulate(th, seed)
            if not rm["diagonal"] and rm["fallbacks"] < 2 and np.abs((s - obs) / sd1).max() > cfg.blowup:
                log.warning("Robbins-Monro steps diverging; restarting the subphase with a diagonal gain matrix")
                rm.update(matrix=np.diag(np.diag(rm["matrix"])), diagonal=True, fallbacks=rm["fallbacks"] + 1)
                return subphase(start, gain, length)
            th = step(th, rm["matrix"], s - obs, gain)
            trail[r] = th
        th = clip(trail.mean(axis=0))
        if rm["diagonal"] and rm["fallbacks"] < 2:
            # back to a full gain matrix, estimated where the diagonal steps settled
            d_new, _ = _derivative(mom, th, next_seeds(cfg.n_deriv), cfg.fd_eps)
            rm.update(matrix=(1 - cfg.diagonalize) * d_new + cfg.diagonalize * np.diag(np.diag(d_new)), diagonal=False)
        return th

    # phase 2: subphases with halving gain, each restarting from the previous average
    gain = cfg.gain
    length = 0
    for sub in range(cfg.n_subphases):
        length = int(round(2.52 ** sub * (7 + p))) + cfg.n2_extra
        theta = subphase(theta, gain, length)
        log.info("phase 2 subphase %d: theta=%s", sub + 1, np.round(theta, 3))
        if sub < cfg.n_subphases - 1:
            gain /= 2

    # phase 3: convergence check; when it fails, one more final-gain subphase and recheck
    for run in range(cfg.max_runs):
        seeds = next_seeds(cfg.n3)
        sims = np.array([mom.simulate(theta, s) for s in seeds])
        mean = sims.mean(axis=0)
        sd = sims.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tr = np.where(sd > 0, (mean - obs) / sd, np.where(mean == obs, 0.0, np.inf))
        log.info("phase 3 run %d: max|t|=%.3f", run + 1, np.abs(tr).max())
        if np.all(np.abs(tr) < cfg.tol) or run == cfg.max_runs - 1:
            break
        theta = subphase(theta, gain, length)
    k = min(cfg.n_deriv, cfg.n3)
    d3, _ = _derivative(mom, theta, seeds[:k], cfg.fd_eps, base=sims[:k])

    converged = bool(np.all(np.abs(tr) < cfg.tol))
    if not converged:
        flags.append("not_converged")
    if np.any(theta[:per] <= 10 * cfg.min_rate):
        flags.append("rate_boundary")
    if np.linalg.matrix_rank(d3) < p:
        flags.append("singular_derivative")
        dinv = np.linalg.pinv(d3)
    else:
        dinv = np.linalg.inv(d3)
    sigma = np.cov(sims, rowvar=False).reshape(p, p)
    covariance = dinv @ sigma @ dinv.T
    se = np.sqrt(np.clip(np.diag(covariance), 0, None))
    return ParameterEstimate(names, theta, se, covariance, tr, run + 1, converged, flags, obs)


def model_from_estimate(effects: Sequence[SaomEffect], est: ParameterEstimate) -> SaomModel:
    per = len(est.theta_hat) - len(effects)
    return SaomModel(est.theta_hat[:per], list(effects), est.theta_hat[per:])
