"""Model-term catalog: global statistics, change statistics and covariate binding.

Every term is a function of the current network and, for ``memory_stability``,
the previous wave. Covariate terms read node or dyadic values from the
context's covariate mapping, which is filled by :func:`resolve_covariates`
according to each term's wave binding.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import SpecError
from .graph import Network, Panel, TRANSFORMS, apply_transform, two_path_matrix

KINDS = (
    "edges",
    "mutual",
    "ttriple",
    "ctriple",
    "transitive_ties",
    "gwesp_otp",
    "gwesp_itp",
    "gw_indegree",
    "gw_outdegree",
    "twopath",
    "node_icov",
    "node_ocov",
    "node_ifactor",
    "node_ofactor",
    "node_match",
    "edge_cov",
    "memory_stability",
)
KIND_CODE = {k: i for i, k in enumerate(KINDS)}

WEIGHTED = frozenset({"gwesp_otp", "gwesp_itp", "gw_indegree", "gw_outdegree"})
STRUCTURAL = frozenset(KINDS[:10])
NODE_COVARIATE = frozenset({"node_icov", "node_ocov", "node_ifactor", "node_ofactor", "node_match"})
COVARIATE = NODE_COVARIATE | {"edge_cov"}
# which degree margin a node-covariate term feeds
INCOMING = frozenset({"node_icov", "node_ifactor"})
OUTGOING = frozenset({"node_ocov", "node_ofactor"})

DEFAULT_DECAY = math.log(2.0)


class Binding(str, enum.Enum):
    ENDOGENOUS = "Endogenous"
    LAGGED = "Lagged"
    CONTEMPORANEOUS = "Contemporaneous"


@dataclass(frozen=True)
class TermSpec:
    """One model statistic with its wave binding.

    ``transform`` marks ``attr`` as computed from an observed wave
    (``sqrt_indegree`` / ``sqrt_outdegree``); ``source_wave`` pins that
    wave explicitly instead of deriving it from the binding.
    """

    kind: str
    decay: float | None = None
    attr: str | None = None
    binding: Binding = Binding.ENDOGENOUS
    source_wave: int | None = None
    transform: str | None = None

    def __post_init__(self):
        if self.kind not in KIND_CODE:
            raise SpecError(f"unknown term {self.kind!r}; valid kinds: {', '.join(KINDS)}")
        object.__setattr__(self, "binding", Binding(self.binding))
        if self.kind in WEIGHTED:
            if self.decay is None:
                object.__setattr__(self, "decay", DEFAULT_DECAY)
            elif self.decay < 0:
                raise SpecError(f"{self.kind}: decay must be nonnegative, got {self.decay}")
        elif self.decay is not None:
            raise SpecError(f"decay given for non-weighted term {self.kind!r}")
        if self.kind in COVARIATE:
            if not self.attr:
                raise SpecError(f"covariate term {self.kind!r} needs an attr")
            if self.binding is Binding.ENDOGENOUS:
                raise SpecError(f"covariate term {self.kind}({self.attr}) must be Lagged or Contemporaneous")
        else:
            if self.attr is not None:
                raise SpecError(f"term {self.kind!r} takes no attr")
            want = Binding.LAGGED if self.kind == "memory_stability" else Binding.ENDOGENOUS
            if self.binding is not want:
                raise SpecError(f"term {self.kind!r} must have binding {want.value}")
        if self.transform is not None:
            if self.transform not in TRANSFORMS:
                raise SpecError(f"unknown transform {self.transform!r}; expected one of {TRANSFORMS}")
            if self.kind not in NODE_COVARIATE:
                raise SpecError(f"transform only applies to node covariate terms, not {self.kind!r}")

    def label(self) -> str:
        if self.attr:
            return f"{self.kind}({self.attr})"
        if self.kind in WEIGHTED:
            return f"{self.kind}({self.decay:g})"
        return self.kind

    def to_dict(self) -> dict:
        out = {"term": self.kind}
        if self.kind in WEIGHTED:
            out["decay"] = self.decay
        if self.attr is not None:
            out["attr"] = self.attr
        out["binding"] = self.binding.value
        if self.source_wave is not None:
            out["source_wave"] = self.source_wave
        if self.transform is not None:
            out["transform"] = self.transform
        return out


@dataclass(frozen=True)
class StatisticContext:
    current: Network
    previous: Network | None = None
    covariates: Mapping[str, np.ndarray] | None = None

    def __post_init__(self):
        if self.previous is not None and self.previous.n != self.current.n:
            raise ValueError("current and previous networks differ in size")
        if self.covariates is None:
            object.__setattr__(self, "covariates", {})

    def with_current(self, net: Network) -> "StatisticContext":
        return StatisticContext(net, self.previous, self.covariates)

    def covariate(self, attr: str) -> np.ndarray:
        try:
            return np.asarray(self.covariates[attr])
        except KeyError:
            raise KeyError(f"missing covariate {attr!r}") from None


def factor_indicator(values) -> np.ndarray:
    """1 where the value differs from the lowest (reference) level."""
    values = np.asarray(values)
    levels = np.unique(values)
    return (values != levels[0]).astype(float)


def factor_codes(values) -> np.ndarray:
    _, codes = np.unique(np.asarray(values), return_inverse=True)
    return codes.astype(float)


def gw_weight(k, alpha: float):
    """``e^a (1 - (1 - e^-a)^k)``; zero at ``k = 0``."""
    r = 1.0 - math.exp(-alpha)
    return math.exp(alpha) * (1.0 - np.power(r, k))


def statistic_value(term: TermSpec, ctx: StatisticContext) -> float:
    x = ctx.current.adjacency.astype(np.int64)
    n = x.shape[0]
    kind = term.kind
    if kind == "edges":
        return float(x.sum())
    if kind == "mutual":
        return float((x * x.T).sum() // 2)
    if kind == "memory_stability":
        if ctx.previous is None:
            raise ValueError("memory_stability needs a previous network")
        p = ctx.previous.adjacency.astype(np.int64)
        same = 1 - np.abs(x - p)
        return float(same.sum() - n)  # drop the diagonal, which always agrees
    if kind in ("node_icov", "node_ocov", "node_ifactor", "node_ofactor"):
        vals = ctx.covariate(term.attr)
        b = factor_indicator(vals) if kind.endswith("factor") else vals.astype(float)
        deg = x.sum(axis=0) if kind in INCOMING else x.sum(axis=1)
        return float(deg @ b)
    if kind == "node_match":
        codes = factor_codes(ctx.covariate(term.attr))
        return float((x * (codes[:, None] == codes[None, :])).sum())
    if kind == "edge_cov":
        w = ctx.covariate(term.attr).astype(float)
        return float((x * w).sum())
    if kind in ("gw_indegree", "gw_outdegree"):
        deg = x.sum(axis=0) if kind == "gw_indegree" else x.sum(axis=1)
        return float(gw_weight(deg, term.decay).sum())
    tp = two_path_matrix(x)
    if kind == "ttriple":
        return float((x * tp).sum())
    if kind == "ctriple":
        return float(np.trace(tp @ x) // 3)
    if kind == "transitive_ties":
        return float((x * (tp > 0)).sum())
    if kind == "twopath":
        return float(tp.sum() - np.trace(tp))
    if kind == "gwesp_otp":
        return float((x * gw_weight(tp, term.decay)).sum())
    if kind == "gwesp_itp":
        return float((x * gw_weight(tp.T, term.decay)).sum())
    raise SpecError(f"unhandled term {kind!r}")  # pragma: no cover


def statistic_vector(terms: Sequence[TermSpec], ctx: StatisticContext) -> np.ndarray:
    return np.array([statistic_value(t, ctx) for t in terms], dtype=float)


@dataclass(frozen=True)
class EncodedTerms:
    """Flat arrays describing a term list, as consumed by the kernels."""

    kinds: np.ndarray  # int64 (K,)
    alphas: np.ndarray  # float64 (K,)
    nodecov: np.ndarray  # float64 (K, n)
    dyadcov: np.ndarray  # float64 (K, n, n)


def encode_terms(terms: Sequence[TermSpec], covariates: Mapping[str, np.ndarray], n: int) -> EncodedTerms:
    k = len(terms)
    kinds = np.array([KIND_CODE[t.kind] for t in terms], dtype=np.int64)
    alphas = np.array([t.decay if t.decay is not None else 0.0 for t in terms], dtype=np.float64)
    nodecov = np.zeros((k, n), dtype=np.float64)
    dyadcov = np.zeros((k, n, n), dtype=np.float64)
    for idx, t in enumerate(terms):
        if t.kind not in COVARIATE:
            continue
        if t.attr not in covariates:
            raise KeyError(f"missing covariate {t.attr!r} for term {t.label()}")
        vals = np.asarray(covariates[t.attr])
        if t.kind == "edge_cov":
            if vals.shape != (n, n):
                raise ValueError(f"{t.label()}: dyadic covariate must be {n}x{n}")
            dyadcov[idx] = vals.astype(float)
            continue
        if vals.shape != (n,):
            raise ValueError(f"{t.label()}: node covariate must have length {n}")
        if t.kind in ("node_ifactor", "node_ofactor"):
            nodecov[idx] = factor_indicator(vals)
        elif t.kind == "node_match":
            nodecov[idx] = factor_codes(vals)
        else:
            nodecov[idx] = vals.astype(float)
    return EncodedTerms(kinds, alphas, nodecov, dyadcov)


def previous_or_empty(ctx: StatisticContext) -> np.ndarray:
    n = ctx.current.n
    if ctx.previous is None:
        return np.zeros((n, n), dtype=np.uint8)
    return ctx.previous.adjacency


def change_statistic(term: TermSpec, ctx: StatisticContext, i: int, j: int) -> float:
    """``s(x with x_ij = 1) - s(x with x_ij = 0)`` with all other ties held fixed."""
    return float(change_statistics([term], ctx, i, j)[0])


def change_statistics(terms: Sequence[TermSpec], ctx: StatisticContext, i: int, j: int) -> np.ndarray:
    from .kernels import vec

    if i == j:
        raise ValueError("change statistics are undefined for self-dyads")
    if any(t.kind == "memory_stability" for t in terms) and ctx.previous is None:
        raise ValueError("memory_stability needs a previous network")
    n = ctx.current.n
    enc = encode_terms(terms, ctx.covariates, n)
    x = ctx.current.adjacency
    tp = two_path_matrix(x)
    out = np.empty(len(terms))
    vec.delta(
        x, tp, x.sum(axis=0, dtype=np.int64), x.sum(axis=1, dtype=np.int64),
        previous_or_empty(ctx), i, j, enc.kinds, enc.alphas, enc.nodecov, enc.dyadcov, out,
    )
    return out


def source_wave(term: TermSpec, dependent_wave: int) -> int | None:
    """Wave whose data a covariate term reads when modelling ``dependent_wave``."""
    if term.kind not in COVARIATE:
        return None
    if term.source_wave is not None:
        return term.source_wave
    if term.binding is Binding.CONTEMPORANEOUS:
        return dependent_wave
    return dependent_wave - 1


def resolve_covariates(
    terms: Sequence[TermSpec],
    panel: Panel,
    dependent_wave: int,
    extra: Mapping[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Covariate values for every covariate term when modelling ``dependent_wave``.

    Per-wave and derived attributes are read at the term's source wave.
    ``extra`` supplies per-wave values for waves beyond the panel (only used
    when a leakage override deliberately exposes a held-out wave).
    """
    extra = extra or {}
    out: dict[str, np.ndarray] = {}
    seen: dict[str, int | None] = {}
    for t in terms:
        if t.kind not in COVARIATE:
            continue
        name = t.attr
        transform = t.transform or panel.derived.get(name)
        static = name in panel.dyad_covariates or (
            name in panel.node_covariates and not panel.is_per_wave(name) and transform is None
        )
        wave = None if static else source_wave(t, dependent_wave)
        if name in seen and seen[name] != wave:
            raise SpecError(f"attr {name!r} is bound to two different waves")
        seen[name] = wave
        if name in panel.dyad_covariates:
            out[name] = panel.dyad_covariates[name]
        elif static:
            out[name] = panel.node_covariates[name]
        elif wave is not None and 0 <= wave < panel.n_waves and name in panel.node_covariates:
            out[name] = panel.node_covariate(name, wave)
        elif wave is not None and 0 <= wave < panel.n_waves and transform is not None:
            out[name] = apply_transform(panel.waves[wave], transform)
        elif name in extra:
            out[name] = np.asarray(extra[name])
        else:
            raise KeyError(f"covariate {name!r} has no values for wave {wave}")
    return out
