"""Temporal ERGM: conditional probability of wave t given wave t-1, MCMC sampling and MCMC-MLE."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .graph import Network, Panel, two_path_matrix
from .terms import (
    StatisticContext,
    TermSpec,
    encode_terms,
    previous_or_empty,
    resolve_covariates,
    statistic_vector,
)

log = logging.getLogger(__name__)

_CHUNK = 1 << 18
_EDGES_CODE = 0


@dataclass(frozen=True)
class McmcConfig:
    """Tie-toggle sampler settings; defaults follow the usual ergm control values."""

    burn_in: int = 20000
    thinning: int = 3000
    sample_size: int = 5000
    seed: int = 0

    def __post_init__(self):
        for name in ("burn_in", "thinning", "sample_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"McmcConfig.{name} must be positive")
        if self.seed < 0:
            raise ValueError("McmcConfig.seed must be nonnegative")


@dataclass
class TergmModel:
    terms: list[TermSpec]
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (len(self.terms),):
            raise ValueError(f"theta has length {self.theta.size}, expected {len(self.terms)}")

    @property
    def names(self) -> list[str]:
        return [t.label() for t in self.terms]


@dataclass
class ParameterEstimate:
    names: list[str]
    theta_hat: np.ndarray
    standard_errors: np.ndarray
    covariance: np.ndarray
    convergence_tratios: np.ndarray
    iterations: int
    converged: bool
    flags: list[str] = field(default_factory=list)
    observed: np.ndarray | None = None

    def to_dict(self) -> dict:
        def num(v):
            v = float(v)
            return v if np.isfinite(v) else str(v)

        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
            "estimates": [
                {"term": nm, "est": num(est), "se": num(se), "t_ratio": num(tr)}
                for nm, est, se, tr in zip(
                    self.names, self.theta_hat, self.standard_errors, self.convergence_tratios
                )
            ],
        }


def log_weight(model: TergmModel, ctx: StatisticContext) -> float:
    """Unnormalised log probability ``theta . s(x(t), x(t-1))``."""
    return float(model.theta @ statistic_vector(model.terms, ctx))


@dataclass
class ChainResult:
    stats: np.ndarray  # (sample_size, K)
    edges: np.ndarray  # (sample_size,)
    adjacency: np.ndarray | None
    acceptance: float
    final: np.ndarray


def _proposals(rng: np.random.Generator, n: int, size: int):
    i = rng.integers(0, n, size=size)
    j = rng.integers(0, n - 1, size=size)
    j = j + (j >= i)
    logu = np.log(rng.random(size))
    return i, j, logu


def run_chain(
    model: TergmModel,
    previous: Network | None,
    init: Network,
    cfg: McmcConfig,
    covariates: Mapping[str, np.ndarray] | None = None,
    rng: np.random.Generator | None = None,
    record_adjacency: bool = False,
    backend: str | None = None,
) -> ChainResult:
    """Metropolis-Hastings chain over uniformly proposed dyad toggles.

    Runs ``burn_in`` proposals, then records the state every ``thinning``
    proposals until ``sample_size`` states are stored. The edge count is
    tracked alongside the model statistics for degeneracy checks.
    """
    kern = kernels.get(backend)
    n = init.n
    if previous is not None and previous.n != n:
        raise ValueError("init and previous networks differ in size")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    enc = encode_terms(model.terms, covariates or {}, n)
    kinds = np.append(enc.kinds, _EDGES_CODE)
    alphas = np.append(enc.alphas, 0.0)
    nodecov = np.vstack([enc.nodecov, np.zeros((1, n))])
    dyadcov = np.concatenate([enc.dyadcov, np.zeros((1, n, n))])
    theta = np.append(model.theta, 0.0)

    ctx = StatisticContext(init, previous, covariates or {})
    cur = np.append(statistic_vector(model.terms, ctx), float(init.n_edges))
    x = np.array(init.adjacency, dtype=np.uint8, copy=True)
    prev = np.ascontiguousarray(previous_or_empty(ctx), dtype=np.uint8)
    tp = two_path_matrix(x)
    indeg = x.sum(axis=0, dtype=np.int64)
    outdeg = x.sum(axis=1, dtype=np.int64)

    m = cfg.sample_size
    stats = np.empty((m, kinds.size))
    adj = np.empty((m, n, n), dtype=np.uint8) if record_adjacency else np.empty((1, 1, 1), np.uint8)
    dummy_stats = np.empty((1, kinds.size))
    accepted = 0
    total = 0

    left = cfg.burn_in
    while left > 0:
        size = min(left, _CHUNK)
        pi, pj, lu = _proposals(rng, n, size)
        accepted += kern.mh_chain(x, tp, indeg, outdeg, prev, kinds, alphas, nodecov, dyadcov,
                                  theta, pi, pj, lu, 0, cur, dummy_stats, adj, False)
        left -= size
        total += size

    per_chunk = max(1, _CHUNK // cfg.thinning)
    row = 0
    while row < m:
        rows = min(per_chunk, m - row)
        size = rows * cfg.thinning
        pi, pj, lu = _proposals(rng, n, size)
        adj_view = adj[row : row + rows] if record_adjacency else adj
        accepted += kern.mh_chain(x, tp, indeg, outdeg, prev, kinds, alphas, nodecov, dyadcov,
                                  theta, pi, pj, lu, cfg.thinning, cur, stats[row : row + rows],
                                  adj_view, record_adjacency)
        row += rows
        total += size

    return ChainResult(
        stats=stats[:, :-1],
        edges=stats[:, -1],
        adjacency=adj if record_adjacency else None,
        acceptance=accepted / max(total, 1),
        final=x,
    )


def sample(
    model: TergmModel,
    previous: Network | None,
    cfg: McmcConfig,
    init: Network | None = None,
    covariates: Mapping[str, np.ndarray] | None = None,
    backend: str | None = None,
) -> list[Network]:
    """``cfg.sample_size`` networks drawn from the model conditional on ``previous``."""
    if init is None:
        init = previous if previous is not None else None
    if init is None:
        raise ValueError("sample needs an initial network")
    res = run_chain(model, previous, init, cfg, covariates, record_adjacency=True, backend=backend)
    return [Network(a) for a in res.adjacency]


@dataclass
class ExactDistribution:
    adjacency: np.ndarray  # (G, n, n)
    stats: np.ndarray  # (G, K)
    probs: np.ndarray  # (G,)

    def expectation(self) -> np.ndarray:
        return self.probs @ self.stats

    def index_of(self, adj: np.ndarray) -> np.ndarray:
        """Row index of each graph in ``adj`` (shape (..., n, n))."""
        n = self.adjacency.shape[1]
        mask = ~np.eye(n, dtype=bool)
        bits = adj[..., mask].astype(np.int64)
        weights = 1 << np.arange(bits.shape[-1], dtype=np.int64)
        return bits @ weights


def exact_distribution(
    model: TergmModel,
    previous: Network | None,
    covariates: Mapping[str, np.ndarray] | None = None,
    n: int | None = None,
) -> ExactDistribution:
    """Probabilities of every digraph on ``n <= 4`` nodes by enumeration."""
    n = n if n is not None else previous.n
    if n > 4:
        raise ValueError(f"exact enumeration is limited to n <= 4, got n={n}")
    mask = ~np.eye(n, dtype=bool)
    ndyads = int(mask.sum())
    g = 1 << ndyads
    codes = np.arange(g, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(ndyads)) & 1
    adj = np.zeros((g, n, n), dtype=np.uint8)
    adj[:, mask] = bits
    stats = np.array(
        [statistic_vector(model.terms, StatisticContext(Network(a), previous, covariates or {})) for a in adj]
    ).reshape(g, len(model.terms))
    lw = stats @ model.theta
    lw -= lw.max()
    w = np.exp(lw)
    return ExactDistribution(adj, stats, w / w.sum())


# --- estimation -----------------------------------------------------------


@dataclass
class Transition:
    previous: Network
    current: Network
    covariates: dict


def transitions(terms: Sequence[TermSpec], panel: Panel) -> list[Transition]:
    if panel.n_waves < 2:
        raise ValueError("estimation needs at least two waves")
    return [
        Transition(panel.waves[t - 1], panel.waves[t], resolve_covariates(terms, panel, t))
        for t in range(1, panel.n_waves)
    ]


def mple_design(terms: Sequence[TermSpec], trans: Sequence[Transition], backend: str | None = None):
    """Change-statistic rows and tie outcomes for every ordered dyad of every transition."""
    kern = kernels.get(backend)
    rows, ys = [], []
    for tr in trans:
        n = tr.current.n
        enc = encode_terms(terms, tr.covariates, n)
        x = np.array(tr.current.adjacency, dtype=np.uint8)
        tp = two_path_matrix(x)
        indeg = x.sum(axis=0, dtype=np.int64)
        outdeg = x.sum(axis=1, dtype=np.int64)
        prev = np.ascontiguousarray(tr.previous.adjacency, dtype=np.uint8)
        d = np.empty(len(terms))
        for i, j in itertools.permutations(range(n), 2):
            kern.delta(x, tp, indeg, outdeg, prev, i, j, enc.kinds, enc.alphas, enc.nodecov, enc.dyadcov, d)
            rows.append(d.copy())
            ys.append(x[i, j])
    return np.array(rows).reshape(-1, len(terms)), np.array(ys, dtype=float)


def logistic_fit(X: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-10, bound: float = 30.0):
    """Newton-Raphson logistic regression without intercept.

    Returns ``(beta, separated)``; ``separated`` is set when coefficients
    run past ``bound``, i.e. the likelihood has no finite maximiser.
    """
    beta = np.zeros(X.shape[1])

    def loglik(b):
        eta = X @ b
        return float(y @ eta - np.logaddexp(0.0, eta).sum())

    ll = loglik(beta)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(X @ beta)))
        grad = X.T @ (y - p)
        hess = (X * (p * (1 - p))[:, None]).T @ X
        step = np.linalg.lstsq(hess + 1e-12 * np.eye(len(beta)), grad, rcond=None)[0]
        t = 1.0
        while t > 1e-8:
            cand = beta + t * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12:
                break
            t /= 2
        beta, ll_old, ll = cand, ll, ll_new
        if np.abs(beta).max() > bound:
            return beta, True
        if abs(ll - ll_old) < tol and np.abs(t * step).max() < 1e-8:
            break
    return beta, False


def mple(terms: Sequence[TermSpec], panel: Panel, backend: str | None = None):
    X, y = mple_design(terms, transitions(terms, panel), backend)
    return logistic_fit(X, y)


def _simulate_transitions(model, trans, cfg, seeds, backend):
    """Summed statistics across independent per-transition chains started at the observed waves."""
    total = None
    boundary = 0.0
    for tr, seed in zip(trans, seeds):
        res = run_chain(model, tr.previous, tr.current, cfg, tr.covariates,
                        rng=np.random.default_rng(seed), backend=backend)
        nn = tr.current.n * (tr.current.n - 1)
        boundary = max(boundary, float(np.mean((res.edges == 0) | (res.edges == nn))))
        total = res.stats if total is None else total + res.stats
    return total, boundary


def gt_step(theta, sims, observed, max_step=0.5, min_ess=0.1, inner=30):
    """Maximise the importance-sampling log-likelihood ratio around ``theta``.

    The step is confined to ``|dtheta|_inf <= max_step`` and shrunk until the
    effective sample size of the importance weights stays above
    ``min_ess`` of the sample.
    """
    d = sims - observed
    m, k = d.shape
    cur = np.zeros(k)

    def weights(delta):
        lw = d @ delta
        lw -= lw.max()
        w = np.exp(lw)
        return w / w.sum()

    for _ in range(inner):
        w = weights(cur)
        mean = w @ d
        c = d - mean
        cov = (c * w[:, None]).T @ c
        step = -np.linalg.lstsq(cov + 1e-10 * np.eye(k), mean, rcond=None)[0]
        new = cur + step
        big = np.abs(new).max()
        if big > max_step:
            new = new * (max_step / big)
        for _ in range(40):
            w_new = weights(new)
            if 1.0 / np.sum(w_new**2) >= min_ess * m:
                break
            new = cur + (new - cur) / 2
        if np.abs(new - cur).max() < 1e-8:
            cur = new
            break
        cur = new
    return theta + cur


def estimate(
    terms: Sequence[TermSpec],
    panel: Panel,
    cfg: McmcConfig = McmcConfig(),
    max_iter: int = 30,
    tol: float = 0.1,
    backend: str | None = None,
) -> ParameterEstimate:
    """MCMC maximum likelihood over all transitions of the panel.

    Starts from the pseudo-likelihood estimate, then alternates simulation
    at the current parameter with Geyer-Thompson importance-sampling Newton
    steps until every convergence t-ratio is below ``tol``.
    """
    terms = list(terms)
    names = [t.label() for t in terms]
    trans = transitions(terms, panel)
    observed = sum(
        statistic_vector(terms, StatisticContext(tr.current, tr.previous, tr.covariates)) for tr in trans
    )
    X, y = mple_design(terms, trans, backend)
    theta, separated = logistic_fit(X, y)
    k = len(terms)
    if separated:
        big = np.abs(theta) > 10
        theta_hat = np.where(big, np.sign(theta) * np.inf, theta)
        log.warning("pseudo-likelihood diverges (separation); no finite MLE")
        nan = np.full(k, np.nan)
        return ParameterEstimate(names, theta_hat, nan, np.full((k, k), np.nan), nan, 0, False,
                                 ["separation"], observed)

    seeds = np.random.SeedSequence(cfg.seed).spawn(max_iter + 1)
    flags: list[str] = []
    tratios = np.full(k, np.inf)
    sims = None
    converged = False
    prev_theta = None
    backtracks = 0
    run_cfg = cfg
    it = 0
    for it in range(1, max_iter + 1):
        model = TergmModel(terms, theta)
        sims, boundary = _simulate_transitions(model, trans, run_cfg, seeds[it].spawn(len(trans)), backend)
        if boundary > 0.1:
            if prev_theta is not None and backtracks < 6:
                # the last step overshot into a degenerate region: retreat halfway
                backtracks += 1
                theta = (theta + prev_theta) / 2
                log.warning("iteration %d: degenerate sample, step halved", it)
                continue
            flags.append("degenerate")
            log.warning("more than 10%% of sampled networks are empty or complete")
            break
        backtracks = 0
        mean = sims.mean(axis=0)
        sd = sims.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            tratios = np.where(sd > 0, (mean - observed) / sd, np.where(mean == observed, 0.0, np.inf))
        log.info("iteration %d: theta=%s max|t|=%.3f", it, np.round(theta, 3), np.abs(tratios).max())
        if np.all(np.abs(tratios) < tol):
            converged = True
            break
        if np.abs(tratios).max() < 3 * tol and run_cfg.sample_size < 4 * cfg.sample_size:
            # near the solution Monte-Carlo noise dominates the t-ratios; sample more
            run_cfg = replace(run_cfg, sample_size=2 * run_cfg.sample_size)
        prev_theta = theta
        theta = gt_step(theta, sims, observed)

    if not converged and "degenerate" not in flags:
        flags.append("not_converged")
    cov_s = np.cov(sims, rowvar=False).reshape(k, k)
    try:
        covariance = np.linalg.inv(cov_s)
    except np.linalg.LinAlgError:
        covariance = np.linalg.pinv(cov_s)
        flags.append("singular_information")
    se = np.sqrt(np.clip(np.diag(covariance), 0, None))
    return ParameterEstimate(names, np.asarray(theta, float), se, covariance, tratios, it, converged,
                             flags, observed)
