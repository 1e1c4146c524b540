"""Command-line entry point: ``netpanel <subcommand> [options]``.

Exit codes: 0 success, 1 unexpected failure, 2 validation error,
3 leakage findings (or a leaking spec without ``--allow-leakage``),
4 estimation did not converge.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import audit, evaluation, io, saom, tergm
from .errors import DataError, LeakageError, SpecError
from .graph import Panel
from .synthetic import synthetic_panel
from .terms import resolve_covariates

log = logging.getLogger("netpanel")

EXIT_OK, EXIT_FAIL, EXIT_VALIDATION, EXIT_LEAKAGE, EXIT_NOT_CONVERGED = 0, 1, 2, 3, 4


class NotConverged(RuntimeError):
    pass


# --- run context --------------------------------------------------------------


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(args: argparse.Namespace) -> str:
    """Digest of the effective configuration: options plus the contents of every input file."""
    cfg = {}
    for key, val in sorted(vars(args).items()):
        if key in ("out", "func", "verbose"):
            continue
        if key in ("waves", "covariates") and val:
            val = [_digest(p) for p in val]
        elif key in ("spec", "estimates") and val:
            val = _digest(_spec_path(val) if key == "spec" else val)
        cfg[key] = val
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _spec_path(spec: str) -> Path:
    p = Path(spec)
    if p.exists():
        return p
    try:
        return io.builtin_spec(spec)
    except FileNotFoundError:
        raise SpecError(f"spec file {spec!r} not found (bundled specs: flawed_lc, corrected, saom_table1)") from None


class Run:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.hash = config_hash(args)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.stamp = {"config_hash": self.hash, "seed": args.seed}

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        doc = dict(self.stamp)
        doc.update(payload)
        path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
        return path

    def write_csv(self, name: str, header: list, rows: list) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            for k, v in self.stamp.items():
                fh.write(f"# {k}={v}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return path

    def attach_log(self, name: str) -> logging.Handler:
        handler = logging.FileHandler(self.out / name, mode="w")
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logging.getLogger("netpanel").addHandler(handler)
        handler.stream.write(f"# config_hash={self.hash}\n# seed={self.args.seed}\n")
        return handler


# --- shared steps ---------------------------------------------------------------


def _panel(args) -> Panel:
    if args.waves:
        return io.load_panel(args.waves, args.covariates or [])
    if args.synthetic is not None:
        return synthetic_panel(args.synthetic)
    raise DataError("no panel given: pass --waves (and --covariates) or --synthetic SEED")


def _spec(args, default: str | None = None) -> io.ModelSpec:
    name = args.spec or default
    if name is None:
        raise SpecError("--spec is required")
    return io.parse_model_spec(_spec_path(name))


def _mcmc(args, seed_offset: int = 0) -> tergm.McmcConfig:
    return tergm.McmcConfig(burn_in=args.burnin, thinning=args.thin, sample_size=args.sample_size,
                            seed=args.seed + seed_offset)


def _saom_cfg(args, seed_offset: int = 0) -> saom.SaomConfig:
    return saom.SaomConfig(n3=args.phase3, seed=args.seed + seed_offset)


def _check_terms_resolvable(spec: io.ModelSpec, panel: Panel, model: str):
    if model == "tergm" and not spec.terms:
        raise SpecError("spec has no TERGM terms")
    if model == "saom" and not spec.saom_effects:
        raise SpecError("spec has no saom_effects")
    attrs = [t.attr for t in spec.terms if t.attr and not t.transform] if model == "tergm" else [
        e.attr for e in spec.saom_effects if e.attr]
    for a in attrs:
        if a not in panel.node_covariates and a not in panel.dyad_covariates:
            raise DataError(f"spec uses covariate {a!r} but the panel has none by that name")


def _fit(spec: io.ModelSpec, panel: Panel, args, seed_offset: int = 0):
    """Estimate on all waves of ``panel``; returns (model, estimate)."""
    if args.model == "tergm":
        est = tergm.estimate(spec.terms, panel, _mcmc(args, seed_offset), max_iter=args.max_iter)
        if "separation" in est.flags:
            raise NotConverged("pseudo-likelihood diverges; no finite estimate")
        return tergm.TergmModel(spec.terms, est.theta_hat), est
    est = saom.estimate_mom(spec.saom_effects, panel, _saom_cfg(args, seed_offset))
    return saom.model_from_estimate(spec.saom_effects, est), est


def _load_estimates(path: Path, spec: io.ModelSpec, model: str):
    doc = json.loads(Path(path).read_text())
    rows = doc.get("estimates", [])
    names = [r["term"] for r in rows]
    theta = np.array([float(r["est"]) for r in rows])
    if model == "tergm":
        want = [t.label() for t in spec.terms]
        if names != want:
            raise SpecError(f"{path}: estimate terms {names} do not match spec terms {want}")
        return tergm.TergmModel(spec.terms, theta)
    labels = [e.label() for e in spec.saom_effects]
    k = len(labels)
    if names[-k:] != labels:
        raise SpecError(f"{path}: estimate effects {names[-k:]} do not match spec effects {labels}")
    return saom.SaomModel(theta[:-k], spec.saom_effects, theta[-k:])


def _prediction_covariates(model, spec: io.ModelSpec, holdout: evaluation.Holdout) -> dict:
    if isinstance(model, tergm.TergmModel):
        return evaluation.prediction_covariates(spec.terms, holdout)
    return saom.period_covariates(spec.saom_effects, holdout.train, holdout.test_wave - 1)


def _gof(spec: io.ModelSpec, panel: Panel, args, allow_leakage: bool, seed_offset: int = 0, estimates=None):
    terms = spec.terms if args.model == "tergm" else []
    holdout = evaluation.holdout_split(panel, panel.n_waves - 1, terms, allow_leakage=allow_leakage)
    if estimates:
        model, est = _load_estimates(estimates, spec, args.model), None
    else:
        model, est = _fit(spec, holdout.train, args, seed_offset)
    cov = _prediction_covariates(model, spec, holdout)
    cfg = tergm.McmcConfig(burn_in=args.burnin, thinning=args.thin, sample_size=max(args.nsim, 1),
                           seed=args.seed + seed_offset + 1)
    sims = evaluation.predict_wave(model, holdout.train.waves[-1], args.nsim, cfg, cov)
    report = evaluation.score(sims, holdout.test, warnings=holdout.warnings)
    return report, est


# --- subcommands -------------------------------------------------------------------


def cmd_estimate(args, run: Run) -> int:
    panel = _panel(args)
    spec = _spec(args)
    _check_terms_resolvable(spec, panel, args.model)
    if args.model == "tergm":
        findings = audit.classify(spec.terms, panel.n_waves - 1, spec.derived)
        if audit.has_leakage(findings):
            for f in findings:
                if f.severity in audit.FLAGGED:
                    log.warning("%s: %s (%s)", f.term.label(), f.severity.value, f.explanation)
    _, est = _fit(spec, panel, args)
    run.write_json("estimates.json", {"model": args.model, **est.to_dict()})
    return EXIT_OK if est.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args, run: Run) -> int:
    panel = _panel(args)
    spec = _spec(args)
    _check_terms_resolvable(spec, panel, args.model)
    if args.estimates:
        model, status = _load_estimates(args.estimates, spec, args.model), EXIT_OK
    else:
        model, est = _fit(spec, panel, args)
        status = EXIT_OK if est.converged else EXIT_NOT_CONVERGED
    target = panel.n_waves
    if isinstance(model, tergm.TergmModel):
        try:
            cov = resolve_covariates(spec.terms, panel, target)
        except KeyError as e:
            raise DataError(f"cannot simulate wave {target}: {e.args[0]}") from None
    else:
        cov = saom.period_covariates(spec.saom_effects, panel, panel.n_waves - 1)
    cfg = tergm.McmcConfig(burn_in=args.burnin, thinning=args.thin, sample_size=max(args.nsim, 1),
                           seed=args.seed + 1)
    sims = evaluation.predict_wave(model, panel.waves[-1], args.nsim, cfg, cov)
    rows = [[s, int(i), int(j)] for s, net in enumerate(sims) for i, j in np.argwhere(net.adjacency)]
    run.write_csv("simulations.csv", ["sim", "from", "to"], rows)
    dens = [net.density() for net in sims]
    run.write_json("simulate.json", {
        "model": args.model,
        "wave": target,
        "nsim": len(sims),
        "mean_density": float(np.mean(dens)) if dens else None,
        "densities": [float(d) for d in dens],
    })
    return status


def cmd_gof(args, run: Run) -> int:
    panel = _panel(args)
    spec = _spec(args)
    _check_terms_resolvable(spec, panel, args.model)
    if args.nsim <= 0:
        raise DataError("gof needs --nsim >= 1")
    report, est = _gof(spec, panel, args, args.allow_leakage, estimates=args.estimates)
    report.meta = dict(run.stamp)
    report.write_csv(run.out)
    payload = report.to_dict()
    payload.pop("meta")
    payload["model"] = args.model
    payload["allow_leakage"] = bool(args.allow_leakage)
    if est is not None:
        payload["fit"] = est.to_dict()
    run.write_json("gof.json", payload)
    return EXIT_OK if est is None or est.converged else EXIT_NOT_CONVERGED


def cmd_audit(args, run: Run) -> int:
    spec = _spec(args)
    panel = _panel(args) if (args.waves or args.synthetic is not None) else None
    dep = args.dependent_wave if args.dependent_wave is not None else (panel.n_waves - 1 if panel else 1)
    findings = audit.classify(spec.terms, dep, spec.derived)
    payload = {"dependent_wave": dep, "findings": [f.to_dict() for f in findings], "probes": []}
    if args.probe:
        if panel is None:
            raise DataError("--probe needs a panel (--waves or --synthetic)")
        _check_terms_resolvable(spec, panel, "tergm")
        train = panel.head(panel.n_waves - 1)
        if args.estimates:
            model = _load_estimates(args.estimates, spec, "tergm")
        else:
            model, _ = _fit(spec, train, argparse.Namespace(**{**vars(args), "model": "tergm"}))
        cfg = tergm.McmcConfig(burn_in=args.burnin, thinning=args.thin, sample_size=max(args.nsim, 2),
                               seed=args.seed + 1)
        for name in args.probe:
            res = audit.perturbation_probe(model, panel, name.split(","), args.probe_constant, panel.n_waves - 1,
                                           panel.waves[-2], max(args.nsim, 2), cfg)
            payload["probes"].append(res.to_dict())
    flagged = audit.has_leakage(findings)
    payload["leakage"] = flagged
    run.write_json("audit.json", payload)
    return EXIT_LEAKAGE if flagged and not args.allow_leakage else EXIT_OK


def cmd_replicate_flaw(args, run: Run) -> int:
    panel = _panel(args) if args.waves else synthetic_panel(args.synthetic or 0)
    flawed = io.parse_model_spec(_spec_path(args.flawed_spec))
    corrected = io.parse_model_spec(_spec_path(args.corrected_spec))
    saom_spec = io.parse_model_spec(_spec_path(args.saom_spec))
    test_wave = panel.n_waves - 1
    rows, details, status = [], {}, EXIT_OK
    arms = [
        ("tergm", "flawed", flawed, True),
        ("tergm", "corrected", corrected, False),
        ("saom", "corrected", saom_spec, False),
    ]
    for offset, (model_name, label, spec, leak) in enumerate(arms):
        a = argparse.Namespace(**{**vars(args), "model": model_name})
        _check_terms_resolvable(spec, panel, model_name)
        report, est = _gof(spec, panel, a, allow_leakage=leak)
        findings = audit.classify(spec.terms, test_wave, spec.derived) if model_name == "tergm" else []
        n_flag = sum(f.severity in audit.FLAGGED for f in findings)
        if not est.converged:
            status = EXIT_NOT_CONVERGED
        key = f"{model_name}_{label}"
        rows.append([key, model_name, label, int(leak), n_flag, repr(report.auc_roc), repr(report.auc_pr),
                     int(est.converged)])
        details[key] = {
            "allow_leakage": leak,
            "flagged_terms": [f.term.label() for f in findings if f.severity in audit.FLAGGED],
            "auc_roc": report.auc_roc,
            "auc_pr": report.auc_pr,
            "fit": est.to_dict(),
        }
    run.write_csv("comparison.csv",
                  ["arm", "model", "spec", "leakage", "flagged_terms", "auc_roc", "auc_pr", "converged"], rows)
    run.write_json("replicate_flaw.json", {"test_wave": test_wave, "nsim": args.nsim, "arms": details})
    return status


# --- argument parsing ------------------------------------------------------------


def _positive(v: str) -> int:
    k = int(v)
    if k <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return k


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netpanel", description="Panel network models with leakage auditing.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--waves", nargs="+", type=Path, help="adjacency matrix files, one per wave, in order")
    common.add_argument("--covariates", nargs="+", type=Path, help="covariate CSV files")
    common.add_argument("--synthetic", type=int, metavar="SEED", help="use the built-in synthetic panel")
    common.add_argument("--spec", help="model spec JSON (path or bundled name)")
    common.add_argument("--seed", type=int, required=True)
    common.add_argument("--nsim", type=int, default=1000)
    common.add_argument("--burnin", type=_positive, default=20000)
    common.add_argument("--thin", type=_positive, default=3000)
    common.add_argument("--sample-size", type=_positive, default=5000, help="MCMC sample size per estimation step")
    common.add_argument("--max-iter", type=_positive, default=30)
    common.add_argument("--phase3", type=_positive, default=1000, help="SAOM phase-3 simulations")
    common.add_argument("--out", type=Path, required=True)
    common.add_argument("--allow-leakage", action="store_true")
    common.add_argument("--model", choices=("tergm", "saom"), default="tergm")
    common.add_argument("--estimates", type=Path, help="estimates.json to use instead of fitting")
    common.add_argument("-v", "--verbose", action="store_true")

    for name, func, helptext in (
        ("estimate", cmd_estimate, "fit a model to all waves"),
        ("simulate", cmd_simulate, "simulate the wave after the last one"),
        ("gof", cmd_gof, "hold out the last wave, predict it, score the prediction"),
    ):
        sp = sub.add_parser(name, parents=[common], help=helptext)
        sp.set_defaults(func=func)

    sp = sub.add_parser("audit", parents=[common], help="classify spec terms by information source")
    sp.add_argument("--dependent-wave", type=int)
    sp.add_argument("--probe", nargs="+", metavar="COVARIATE", help="run the perturbation probe on these covariates; join names with commas to perturb them together")
    sp.add_argument("--probe-constant", type=float, default=10.0)
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("replicate-flaw", parents=[common], help="flawed vs corrected specs side by side")
    sp.add_argument("--flawed-spec", default="flawed_lc")
    sp.add_argument("--corrected-spec", default="corrected")
    sp.add_argument("--saom-spec", default="saom_table1")
    sp.set_defaults(func=cmd_replicate_flaw)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    root = logging.getLogger("netpanel")
    root.setLevel(logging.INFO if args.verbose else logging.WARNING)
    if args.verbose and not root.handlers:
        root.addHandler(logging.StreamHandler(sys.stderr))
    try:
        run = Run(args)
        handler = run.attach_log(f"{args.command}.log")
        root.setLevel(logging.INFO)
        try:
            code = args.func(args, run)
        finally:
            root.removeHandler(handler)
            handler.close()
    except LeakageError as e:
        print(f"leakage: {e}", file=sys.stderr)
        return EXIT_LEAKAGE
    except NotConverged as e:
        print(f"not converged: {e}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (SpecError, DataError, KeyError, ValueError, FileNotFoundError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_VALIDATION
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
