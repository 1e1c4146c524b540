"""Pure-numpy kernels: per-proposal work is vectorised over nodes, loops stay in Python.

Term codes follow ``netpanel.terms.KINDS``; SAOM effect codes follow
``netpanel.saom.EFFECTS``. Signatures match :mod:`netpanel.kernels.jit`
so the two backends are interchangeable and produce identical chains for
identical random inputs.
"""
import math

import numpy as np


def _gw(k, alpha):
    r = 1.0 - math.exp(-alpha)
    return math.exp(alpha) * (1.0 - np.power(r, k))


def delta(x, tp, indeg, outdeg, prev, a, b, kinds, alphas, nodecov, dyadcov, out):
    """Change statistics for tie ``a -> b`` (0 -> 1, all other ties fixed), written into ``out``."""
    e = int(x[a, b])
    xa = x[a].astype(np.int64)  # a's out-ties
    xb = x[b].astype(np.int64)
    col_a = x[:, a].astype(np.int64)  # ties into a
    col_b = x[:, b].astype(np.int64)
    for k in range(kinds.shape[0]):
        kind = kinds[k]
        if kind == 0:  # edges
            out[k] = 1.0
        elif kind == 1:  # mutual
            out[k] = float(x[b, a])
        elif kind == 2:  # ttriple
            out[k] = float(xa @ xb + col_a @ col_b + tp[a, b])
        elif kind == 3:  # ctriple
            out[k] = float(tp[b, a])
        elif kind == 4 or kind == 5:  # transitive_ties / gwesp_otp
            alpha = 0.0 if kind == 4 else alphas[k]
            r = 1.0 - math.exp(-alpha)
            own = _gw(tp[a, b], alpha)
            m1 = (xa * xb).astype(bool)
            m2 = (col_b * col_a).astype(bool)
            out[k] = own + np.power(r, tp[a, m1] - e).sum() + np.power(r, tp[m2, b] - e).sum()
        elif kind == 6:  # gwesp_itp
            alpha = alphas[k]
            r = 1.0 - math.exp(-alpha)
            own = _gw(tp[b, a], alpha)
            m1 = (xb * col_a).astype(bool)  # b -> u and u -> a
            m2 = (col_a * xb).astype(bool)  # v -> a and b -> v
            out[k] = own + np.power(r, tp[m1, b] - e).sum() + np.power(r, tp[a, m2] - e).sum()
        elif kind == 7:  # gw_indegree
            out[k] = (1.0 - math.exp(-alphas[k])) ** (indeg[b] - e)
        elif kind == 8:  # gw_outdegree
            out[k] = (1.0 - math.exp(-alphas[k])) ** (outdeg[a] - e)
        elif kind == 9:  # twopath
            out[k] = float(outdeg[b] + indeg[a] - 2 * x[b, a])
        elif kind == 10 or kind == 12:  # node_icov / node_ifactor
            out[k] = nodecov[k, b]
        elif kind == 11 or kind == 13:  # node_ocov / node_ofactor
            out[k] = nodecov[k, a]
        elif kind == 14:  # node_match
            out[k] = 1.0 if nodecov[k, a] == nodecov[k, b] else 0.0
        elif kind == 15:  # edge_cov
            out[k] = dyadcov[k, a, b]
        elif kind == 16:  # memory_stability
            out[k] = 2.0 * prev[a, b] - 1.0
        else:
            raise ValueError(f"unknown term code {kind}")


def toggle(x, tp, indeg, outdeg, a, b):
    s = 1 - 2 * int(x[a, b])
    x[a, b] = 1 - x[a, b]
    indeg[b] += s
    outdeg[a] += s
    tp[:, b] += s * x[:, a].astype(np.int64)
    tp[a, :] += s * x[b, :].astype(np.int64)


def mh_chain(x, tp, indeg, outdeg, prev, kinds, alphas, nodecov, dyadcov, theta,
             prop_i, prop_j, logu, thin, cur, stats_out, adj_out, record_adj):
    """Metropolis-Hastings over dyad toggles; returns the number of accepted proposals.

    With ``thin > 0`` the state after every ``thin``-th proposal is written to
    ``stats_out`` (and ``adj_out`` when ``record_adj``).
    """
    d = np.empty(kinds.shape[0])
    accepted = 0
    row = 0
    for k in range(prop_i.shape[0]):
        a = prop_i[k]
        b = prop_j[k]
        delta(x, tp, indeg, outdeg, prev, a, b, kinds, alphas, nodecov, dyadcov, d)
        lr = float(theta @ d)
        adding = x[a, b] == 0
        if not adding:
            lr = -lr
        if logu[k] < lr:
            toggle(x, tp, indeg, outdeg, a, b)
            if adding:
                cur += d
            else:
                cur -= d
            accepted += 1
        if thin > 0 and (k + 1) % thin == 0:
            stats_out[row] = cur
            if record_adj:
                adj_out[row] = x
            row += 1
    return accepted


def actor_delta(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, out):
    """Change in actor ``i``'s statistics when adding ``i -> j``, for every ``j`` (column ``j`` of ``out``)."""
    e = x[i].astype(np.int64)
    xi = x[i].astype(np.int64)
    xf = x.astype(np.int64)
    for k in range(kinds.shape[0]):
        kind = kinds[k]
        if kind == 0:  # outdegree
            out[k] = 1.0
        elif kind == 1:  # reciprocity
            out[k] = x[:, i]
        elif kind == 2 or kind == 3:  # transitive_ties / gwesp_transitive
            alpha = 0.0 if kind == 2 else alphas[k]
            r = 1.0 - math.exp(-alpha)
            own = _gw(tp[i], alpha)
            # sum_k x_ik x_jk r^(tp[i,k] - e_j)
            shared = xf * xi[None, :]
            expo = np.maximum(tp[i][None, :] - e[:, None], 0)
            out[k] = own + (shared * np.power(r, expo)).sum(axis=1)
        elif kind == 4:  # gwesp_cyclic
            out[k] = _gw(tp[:, i], alphas[k])
        elif kind == 5:  # indegree_popularity_sqrt
            out[k] = np.sqrt(indeg - e + 1.0)
        elif kind == 6:  # outdegree_popularity
            out[k] = outdeg
        elif kind == 7:  # outdegree_activity_sqrt
            dd = outdeg[i] - e
            out[k] = (dd + 1.0) ** 1.5 - dd ** 1.5
        elif kind == 8:  # cov_ego
            out[k] = nodecov[k, i]
        elif kind == 9:  # cov_alter
            out[k] = nodecov[k]
        elif kind == 10:  # cov_same
            out[k] = (nodecov[k] == nodecov[k, i]).astype(float)
        elif kind == 11:  # dyadic_cov
            out[k] = dyadcov[k, i]
        else:
            raise ValueError(f"unknown effect code {kind}")


def choice_values(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, beta, buf):
    actor_delta(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, buf)
    vals = (beta @ buf) * (1.0 - 2.0 * x[i])
    vals[i] = 0.0  # staying put
    return vals


def saom_period(x, tp, indeg, outdeg, kinds, alphas, nodecov, dyadcov, beta, u_actor, u_choice):
    """Run mini-steps in place; returns the number of tie changes made."""
    n = x.shape[0]
    buf = np.empty((kinds.shape[0], n))
    changes = 0
    for m in range(u_actor.shape[0]):
        i = min(int(u_actor[m] * n), n - 1)
        vals = choice_values(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, beta, buf)
        vals = vals - vals.max()
        p = np.exp(vals)
        cdf = np.cumsum(p)
        target = u_choice[m] * cdf[-1]
        j = min(int(np.searchsorted(cdf, target, side="right")), n - 1)
        if j != i:
            toggle(x, tp, indeg, outdeg, i, j)
            changes += 1
    return changes
