"""Built-in synthetic classroom panel.

Waves are generated by an actor-oriented process so that tie changes are
gradual and degree heterogeneity persists across waves. The generating
parameters are module constants.
"""
from __future__ import annotations

import numpy as np

from .graph import Network, Panel, random_network
from .saom import SaomEffect, SaomModel, simulate_period
from .terms import TermSpec
from .tergm import McmcConfig, TergmModel, run_chain

N_NODES = 26
N_WAVES = 4
N_CLASSES = 3
INITIAL_DENSITY = 0.08
BURN_IN_RATE = 12.0
RATE = 4.0

EFFECTS = [
    SaomEffect("outdegree"),
    SaomEffect("reciprocity"),
    SaomEffect("gwesp_transitive"),
    SaomEffect("cov_same", "sex"),
    SaomEffect("dyadic_cov", "primary"),
    SaomEffect("cov_alter", "popularity"),
    SaomEffect("outdegree_activity_sqrt"),
]
THETA = np.array([-1.2, 1.6, 0.8, 0.6, 0.5, 0.8, -0.8])


def synthetic_panel(seed: int = 0, n: int = N_NODES, n_waves: int = N_WAVES, rate: float = RATE) -> Panel:
    """Panel with covariates ``sex`` (1 = girl, 2 = boy) and dyadic ``primary``.

    ``primary`` marks pairs that attended the same primary-school class. A
    latent standard-normal ``popularity`` drives incoming ties but is not
    part of the returned panel.
    """
    rng = np.random.default_rng(seed)
    sex = rng.integers(1, 3, size=n).astype(float)
    school = rng.integers(0, N_CLASSES, size=n)
    primary = (school[:, None] == school[None, :]).astype(float)
    np.fill_diagonal(primary, 0.0)
    popularity = rng.standard_normal(n)
    cov = {"sex": sex, "primary": primary, "popularity": popularity}

    model = SaomModel(rates=[BURN_IN_RATE], effects=EFFECTS, beta=THETA)
    net = simulate_period(model, random_network(n, INITIAL_DENSITY, rng), rng, covariates=cov)
    step = SaomModel(rates=[rate], effects=EFFECTS, beta=THETA)
    waves = [net]
    for _ in range(n_waves - 1):
        waves.append(simulate_period(step, waves[-1], rng, covariates=cov))
    return Panel(waves, node_covariates={"sex": sex}, dyad_covariates={"primary": primary})


def tergm_panel(
    terms: list[TermSpec],
    theta,
    n: int,
    n_waves: int,
    seed: int = 0,
    density: float = 0.1,
    steps: int = 100_000,
) -> Panel:
    """Panel whose transitions are draws from a TERGM without covariates.

    Wave 0 is Bernoulli(``density``); each later wave is the state of an
    MH chain run for ``steps`` proposals from the previous wave,
    conditional on it.
    """
    rng = np.random.default_rng(seed)
    model = TergmModel(list(terms), theta)
    waves = [random_network(n, density, rng)]
    cfg = McmcConfig(burn_in=steps, thinning=1, sample_size=1, seed=seed)
    for _ in range(n_waves - 1):
        res = run_chain(model, waves[-1], waves[-1], cfg, rng=rng)
        waves.append(Network(res.final))
    return Panel(waves)


def saom_panel(
    effects: list[SaomEffect],
    rate: float,
    beta,
    n: int,
    n_waves: int,
    seed: int = 0,
    density: float = 0.15,
) -> Panel:
    """Panel from a covariate-free SAOM started at a Bernoulli(``density``) network."""
    rng = np.random.default_rng(seed)
    model = SaomModel(rates=[rate], effects=list(effects), beta=beta)
    waves = [random_network(n, density, rng)]
    for _ in range(n_waves - 1):
        waves.append(simulate_period(model, waves[-1], rng))
    return Panel(waves)


__all__ = ["synthetic_panel", "tergm_panel", "saom_panel", "EFFECTS", "THETA"]
