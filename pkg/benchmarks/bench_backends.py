"""Time the numba and numpy kernels on the same workloads.

Run with ``python3 benchmarks/bench_backends.py``. Each workload is run once
per backend to warm up (numba compiles on first use), then timed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from netpanel import kernels
from netpanel.io import builtin_spec, parse_model_spec
from netpanel.saom import SaomModel, period_covariates, simulate_period
from netpanel.synthetic import synthetic_panel
from netpanel.terms import resolve_covariates
from netpanel.tergm import McmcConfig, TergmModel, run_chain


def tergm_chain(backend: str, proposals: int):
    panel = synthetic_panel(0)
    spec = parse_model_spec(builtin_spec("corrected"))
    theta = np.zeros(len(spec.terms))
    theta[0] = -3.0
    model = TergmModel(spec.terms, theta)
    cov = resolve_covariates(spec.terms, panel, 3)
    cfg = McmcConfig(burn_in=proposals, thinning=1000, sample_size=10, seed=1)
    run_chain(model, panel.waves[2], panel.waves[2], cfg, cov, backend=backend)


def saom_periods(backend: str, periods: int):
    panel = synthetic_panel(0)
    spec = parse_model_spec(builtin_spec("saom_table1"))
    beta = np.zeros(len(spec.saom_effects))
    beta[0] = -2.0
    model = SaomModel([4.0], spec.saom_effects, beta)
    cov = period_covariates(spec.saom_effects, panel, 0)
    for seed in range(periods):
        simulate_period(model, panel.waves[0], seed, covariates=cov, backend=backend)


def timed(fn, *args) -> float:
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--proposals", type=int, default=20_000, help="TERGM MH proposals per run")
    p.add_argument("--periods", type=int, default=20, help="SAOM periods per run")
    args = p.parse_args(argv)

    workloads = [
        (f"tergm chain, {args.proposals} proposals", tergm_chain, args.proposals),
        (f"saom, {args.periods} periods", saom_periods, args.periods),
    ]
    print(f"{'workload':40s} {'backend':8s} {'seconds':>9s}")
    for label, fn, size in workloads:
        times = {}
        for backend in kernels.available():
            fn(backend, max(1, size // 100))
            times[backend] = timed(fn, backend, size)
            print(f"{label:40s} {backend:8s} {times[backend]:9.3f}")
        if len(times) == 2:
            print(f"{'':40s} {'speedup':8s} {times['numpy'] / times['numba']:8.1f}x")


if __name__ == "__main__":
    main()
