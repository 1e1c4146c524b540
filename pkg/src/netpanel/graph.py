"""Directed binary networks, network panels and elementary graph queries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

TRANSFORMS = ("sqrt_indegree", "sqrt_outdegree")


class Network:
    """Directed binary graph on nodes ``0..n-1``.

    The adjacency matrix is copied on construction and made read-only; use
    :meth:`toggled` to obtain a modified copy.
    """

    __slots__ = ("_adj",)

    def __init__(self, adjacency):
        adj = np.array(adjacency, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {adj.shape}")
        if adj.size and not np.isin(adj, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        adj = adj.astype(np.uint8)
        if np.any(np.diag(adj)):
            raise ValueError("self-loops are not allowed")
        adj.setflags(write=False)
        self._adj = adj

    @classmethod
    def empty(cls, n: int) -> "Network":
        return cls(np.zeros((n, n), dtype=np.uint8))

    @classmethod
    def complete(cls, n: int) -> "Network":
        return cls(1 - np.eye(n, dtype=np.uint8))

    @classmethod
    def from_edges(cls, n: int, edges) -> "Network":
        adj = np.zeros((n, n), dtype=np.uint8)
        for i, j in edges:
            adj[i, j] = 1
        return cls(adj)

    @property
    def adjacency(self) -> np.ndarray:
        return self._adj

    @property
    def n(self) -> int:
        return self._adj.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self._adj.sum())

    def density(self) -> float:
        n = self.n
        return self.n_edges / (n * (n - 1)) if n > 1 else 0.0

    def toggled(self, i: int, j: int) -> "Network":
        if i == j:
            raise ValueError("cannot toggle a self-loop")
        adj = self._adj.copy()
        adj[i, j] = 1 - adj[i, j]
        return Network(adj)

    def permuted(self, perm) -> "Network":
        """Relabel nodes so that new node ``k`` is old node ``perm[k]``."""
        perm = np.asarray(perm)
        return Network(self._adj[np.ix_(perm, perm)])

    def complement(self) -> "Network":
        return Network((1 - self._adj) * (1 - np.eye(self.n, dtype=np.uint8)))

    def __eq__(self, other) -> bool:
        return isinstance(other, Network) and np.array_equal(self._adj, other._adj)

    def __hash__(self) -> int:
        return hash(self._adj.tobytes())

    def __repr__(self) -> str:
        return f"Network(n={self.n}, edges={self.n_edges})"


def degrees(net: Network, mode: str = "in") -> np.ndarray:
    """Column sums (``mode="in"``) or row sums (``mode="out"``)."""
    adj = net.adjacency
    if mode == "in":
        return adj.sum(axis=0, dtype=np.int64)
    if mode == "out":
        return adj.sum(axis=1, dtype=np.int64)
    raise ValueError(f"mode must be 'in' or 'out', got {mode!r}")


def apply_transform(net: Network, transform: str) -> np.ndarray:
    if transform == "sqrt_indegree":
        return np.sqrt(degrees(net, "in").astype(float))
    if transform == "sqrt_outdegree":
        return np.sqrt(degrees(net, "out").astype(float))
    raise ValueError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")


@dataclass(frozen=True)
class DerivedAttribute:
    """Node attribute computed from one observed wave.

    ``source_wave`` is kept so that audits can tell whether the attribute
    carries information from the wave being modelled.
    """

    name: str
    source_wave: int
    transform: str
    values: np.ndarray = field(repr=False)


@dataclass
class Panel:
    """Ordered waves over a fixed node set plus covariates.

    ``node_covariates`` values are either 1-D (static, length n) or 2-D
    (one row per wave). ``derived`` maps the names of node covariates that
    were computed from the waves themselves to their transform.
    """

    waves: list[Network]
    node_covariates: dict[str, np.ndarray] = field(default_factory=dict)
    dyad_covariates: dict[str, np.ndarray] = field(default_factory=dict)
    derived: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.waves) < 1:
            raise ValueError("a panel needs at least one wave")
        n = self.waves[0].n
        for w, net in enumerate(self.waves):
            if net.n != n:
                raise ValueError(f"wave {w} has {net.n} nodes, expected {n}")
        for name, vals in self.node_covariates.items():
            vals = np.asarray(vals)
            if vals.ndim == 1 and vals.shape[0] != n:
                raise ValueError(f"node covariate {name!r} has length {vals.shape[0]}, expected {n}")
            if vals.ndim == 2 and vals.shape != (len(self.waves), n):
                raise ValueError(
                    f"per-wave node covariate {name!r} has shape {vals.shape}, "
                    f"expected {(len(self.waves), n)}"
                )
            if vals.ndim not in (1, 2):
                raise ValueError(f"node covariate {name!r} must be 1-D or 2-D")
            self.node_covariates[name] = vals
        for name, mat in self.dyad_covariates.items():
            mat = np.asarray(mat, dtype=float)
            if mat.shape != (n, n):
                raise ValueError(f"dyadic covariate {name!r} has shape {mat.shape}, expected {(n, n)}")
            if name in self.node_covariates:
                raise ValueError(f"covariate name {name!r} used for both node and dyadic covariates")
            self.dyad_covariates[name] = mat
        for name, transform in self.derived.items():
            if transform not in TRANSFORMS:
                raise ValueError(f"unknown transform {transform!r} for {name!r}")

    @property
    def n(self) -> int:
        return self.waves[0].n

    @property
    def n_waves(self) -> int:
        return len(self.waves)

    def covariate_kind(self, name: str) -> str:
        if name in self.dyad_covariates:
            return "dyadic"
        if name in self.node_covariates:
            vals = self.node_covariates[name]
            return "node-numeric" if np.issubdtype(vals.dtype, np.number) else "node-factor"
        raise KeyError(name)

    def is_per_wave(self, name: str) -> bool:
        return name in self.node_covariates and self.node_covariates[name].ndim == 2

    def node_covariate(self, name: str, wave: int) -> np.ndarray:
        vals = self.node_covariates[name]
        if vals.ndim == 1:
            return vals
        if not 0 <= wave < vals.shape[0]:
            raise IndexError(f"covariate {name!r} has no values for wave {wave}")
        return vals[wave]

    def with_derived(self, name: str, transform: str) -> "Panel":
        """Copy of the panel with ``name`` holding ``transform`` of every wave."""
        values = np.vstack([apply_transform(net, transform) for net in self.waves])
        node_cov = dict(self.node_covariates)
        node_cov[name] = values
        derived = dict(self.derived)
        derived[name] = transform
        return Panel(list(self.waves), node_cov, dict(self.dyad_covariates), derived)

    def with_node_covariate(self, name: str, wave: int, values) -> "Panel":
        """Copy with one wave of a per-wave node covariate replaced."""
        cur = self.node_covariates[name]
        if cur.ndim == 1:
            cur = np.tile(cur, (self.n_waves, 1))
        new = np.array(cur, dtype=np.result_type(cur, np.asarray(values)), copy=True)
        new[wave] = values
        node_cov = dict(self.node_covariates)
        node_cov[name] = new
        return Panel(list(self.waves), node_cov, dict(self.dyad_covariates), dict(self.derived))

    def head(self, n_waves: int) -> "Panel":
        """The first ``n_waves`` waves; per-wave covariates are truncated to match."""
        node_cov = {
            k: (v if v.ndim == 1 else v[:n_waves].copy()) for k, v in self.node_covariates.items()
        }
        return Panel(list(self.waves[:n_waves]), node_cov, dict(self.dyad_covariates), dict(self.derived))


def derive_attribute(panel: Panel, wave: int, transform: str) -> DerivedAttribute:
    if not 0 <= wave < panel.n_waves:
        raise IndexError(f"wave {wave} out of range for a {panel.n_waves}-wave panel")
    values = apply_transform(panel.waves[wave], transform)
    return DerivedAttribute(name=transform, source_wave=wave, transform=transform, values=values)


def geodesic_distribution(net: Network, max_bucket: int | None = None, pool_beyond: bool = False) -> dict:
    """Counts of ordered pairs by directed shortest-path length.

    Returns ``{"counts": array, "unreachable": int}`` where ``counts[d-1]``
    is the number of pairs at distance ``d`` for ``d = 1..max_bucket``.
    Distances beyond ``max_bucket`` are pooled into ``unreachable`` only
    when ``pool_beyond`` is set; otherwise a too-small ``max_bucket`` raises.
    """
    n = net.n
    if n < 2:
        raise ValueError("geodesic distribution needs n >= 2")
    if max_bucket is None:
        max_bucket = n - 1
    dist = shortest_path(net.adjacency.astype(float), method="D", directed=True, unweighted=True)
    off = ~np.eye(n, dtype=bool)
    d = dist[off]
    finite = np.isfinite(d)
    dfin = d[finite].astype(np.int64)
    beyond = dfin > max_bucket
    if beyond.any() and not pool_beyond:
        raise ValueError(f"distances up to {dfin.max()} exceed max_bucket={max_bucket}")
    counts = np.bincount(dfin[~beyond], minlength=max_bucket + 1)[1 : max_bucket + 1]
    return {"counts": counts, "unreachable": int((~finite).sum() + beyond.sum())}


def two_path_matrix(adj: np.ndarray) -> np.ndarray:
    """``T[i, j]`` = number of ``h`` with ``i -> h -> j``."""
    a = adj.astype(np.int64)
    return a @ a


def shared_partner_counts(net: Network, relation: str = "edgewise", type: str = "OTP") -> np.ndarray:
    """Histogram over shared-partner counts ``0..n-2``.

    ``edgewise`` counts only ordered pairs joined by a tie; ``dyadwise``
    counts every ordered pair ``i != j``.
    """
    n = net.n
    if n < 3:
        raise ValueError("shared partner counts need n >= 3")
    adj = net.adjacency
    tp = two_path_matrix(adj)
    if type == "OTP":
        partners = tp
    elif type == "ITP":
        partners = tp.T
    else:
        raise ValueError(f"type must be 'OTP' or 'ITP', got {type!r}")
    if relation == "edgewise":
        mask = adj.astype(bool)
    elif relation == "dyadwise":
        mask = ~np.eye(n, dtype=bool)
    else:
        raise ValueError(f"relation must be 'edgewise' or 'dyadwise', got {relation!r}")
    return np.bincount(partners[mask], minlength=n - 1)[: n - 1]


def random_network(n: int, density: float, rng: np.random.Generator) -> Network:
    adj = (rng.random((n, n)) < density).astype(np.uint8)
    np.fill_diagonal(adj, 0)
    return Network(adj)

