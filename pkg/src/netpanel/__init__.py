"""Panel network models: TERGM, SAOM, out-of-sample evaluation and leakage auditing."""
from .audit import AuditFinding, Severity, classify, perturbation_probe
from .errors import DataError, LeakageError, SpecError
from .evaluation import GofReport, holdout_split, predict_wave, score
from .graph import Network, Panel
from .io import load_panel, parse_model_spec
from .saom import SaomConfig, SaomEffect, SaomModel, estimate_mom, simulate_period
from .terms import Binding, TermSpec, change_statistic, statistic_vector
from .tergm import McmcConfig, ParameterEstimate, TergmModel, estimate, sample

__all__ = [
    "AuditFinding", "Severity", "classify", "perturbation_probe",
    "DataError", "LeakageError", "SpecError",
    "GofReport", "holdout_split", "predict_wave", "score",
    "Network", "Panel",
    "load_panel", "parse_model_spec",
    "SaomConfig", "SaomEffect", "SaomModel", "estimate_mom", "simulate_period",
    "Binding", "TermSpec", "change_statistic", "statistic_vector",
    "McmcConfig", "ParameterEstimate", "TergmModel", "estimate", "sample",
]
