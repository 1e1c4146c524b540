"""Numba-compiled kernels, loop-for-loop equivalents of :mod:`netpanel.kernels.vec`."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _gw(k, alpha):
    r = 1.0 - math.exp(-alpha)
    return math.exp(alpha) * (1.0 - r ** k)


@njit(cache=True)
def delta(x, tp, indeg, outdeg, prev, a, b, kinds, alphas, nodecov, dyadcov, out):
    n = x.shape[0]
    e = np.int64(x[a, b])
    for k in range(kinds.shape[0]):
        kind = kinds[k]
        if kind == 0:
            out[k] = 1.0
        elif kind == 1:
            out[k] = x[b, a]
        elif kind == 2:
            s = tp[a, b]
            for h in range(n):
                s += x[a, h] * x[b, h] + x[h, a] * x[h, b]
            out[k] = s
        elif kind == 3:
            out[k] = tp[b, a]
        elif kind == 4 or kind == 5:
            alpha = 0.0 if kind == 4 else alphas[k]
            r = 1.0 - math.exp(-alpha)
            s = _gw(tp[a, b], alpha)
            for h in range(n):
                if x[a, h] and x[b, h]:
                    s += r ** (tp[a, h] - e)
                if x[h, b] and x[h, a]:
                    s += r ** (tp[h, b] - e)
            out[k] = s
        elif kind == 6:
            alpha = alphas[k]
            r = 1.0 - math.exp(-alpha)
            s = _gw(tp[b, a], alpha)
            for h in range(n):
                if x[b, h] and x[h, a]:
                    s += r ** (tp[h, b] - e) + r ** (tp[a, h] - e)
            out[k] = s
        elif kind == 7:
            out[k] = (1.0 - math.exp(-alphas[k])) ** (indeg[b] - e)
        elif kind == 8:
            out[k] = (1.0 - math.exp(-alphas[k])) ** (outdeg[a] - e)
        elif kind == 9:
            out[k] = outdeg[b] + indeg[a] - 2 * np.int64(x[b, a])
        elif kind == 10 or kind == 12:
            out[k] = nodecov[k, b]
        elif kind == 11 or kind == 13:
            out[k] = nodecov[k, a]
        elif kind == 14:
            out[k] = 1.0 if nodecov[k, a] == nodecov[k, b] else 0.0
        elif kind == 15:
            out[k] = dyadcov[k, a, b]
        elif kind == 16:
            out[k] = 2.0 * prev[a, b] - 1.0
        else:
            raise ValueError("unknown term code")


@njit(cache=True)
def toggle(x, tp, indeg, outdeg, a, b):
    n = x.shape[0]
    s = 1 - 2 * np.int64(x[a, b])
    x[a, b] = 1 - x[a, b]
    indeg[b] += s
    outdeg[a] += s
    for u in range(n):
        if x[u, a]:
            tp[u, b] += s
        if x[b, u]:
            tp[a, u] += s


@njit(cache=True)
def mh_chain(x, tp, indeg, outdeg, prev, kinds, alphas, nodecov, dyadcov, theta,
             prop_i, prop_j, logu, thin, cur, stats_out, adj_out, record_adj):
    nk = kinds.shape[0]
    d = np.empty(nk)
    accepted = 0
    row = 0
    for k in range(prop_i.shape[0]):
        a = prop_i[k]
        b = prop_j[k]
        delta(x, tp, indeg, outdeg, prev, a, b, kinds, alphas, nodecov, dyadcov, d)
        lr = 0.0
        for q in range(nk):
            lr += theta[q] * d[q]
        adding = x[a, b] == 0
        if not adding:
            lr = -lr
        if logu[k] < lr:
            toggle(x, tp, indeg, outdeg, a, b)
            for q in range(nk):
                if adding:
                    cur[q] += d[q]
                else:
                    cur[q] -= d[q]
            accepted += 1
        if thin > 0 and (k + 1) % thin == 0:
            stats_out[row, :] = cur
            if record_adj:
                adj_out[row, :, :] = x
            row += 1
    return accepted


@njit(cache=True)
def actor_delta(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, out):
    n = x.shape[0]
    for k in range(kinds.shape[0]):
        kind = kinds[k]
        for j in range(n):
            e = np.int64(x[i, j])
            if kind == 0:
                out[k, j] = 1.0
            elif kind == 1:
                out[k, j] = x[j, i]
            elif kind == 2 or kind == 3:
                alpha = 0.0 if kind == 2 else alphas[k]
                r = 1.0 - math.exp(-alpha)
                s = _gw(tp[i, j], alpha)
                for h in range(n):
                    if x[i, h] and x[j, h]:
                        s += r ** (tp[i, h] - e)
                out[k, j] = s
            elif kind == 4:
                out[k, j] = _gw(tp[j, i], alphas[k])
            elif kind == 5:
                out[k, j] = math.sqrt(indeg[j] - e + 1.0)
            elif kind == 6:
                out[k, j] = outdeg[j]
            elif kind == 7:
                dd = outdeg[i] - e
                out[k, j] = (dd + 1.0) ** 1.5 - dd ** 1.5
            elif kind == 8:
                out[k, j] = nodecov[k, i]
            elif kind == 9:
                out[k, j] = nodecov[k, j]
            elif kind == 10:
                out[k, j] = 1.0 if nodecov[k, j] == nodecov[k, i] else 0.0
            elif kind == 11:
                out[k, j] = dyadcov[k, i, j]
            else:
                raise ValueError("unknown effect code")


@njit(cache=True)
def choice_values(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, beta, buf):
    n = x.shape[0]
    actor_delta(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, buf)
    vals = np.zeros(n)
    for j in range(n):
        if j == i:
            continue
        v = 0.0
        for k in range(kinds.shape[0]):
            v += beta[k] * buf[k, j]
        vals[j] = -v if x[i, j] else v
    return vals


@njit(cache=True)
def saom_period(x, tp, indeg, outdeg, kinds, alphas, nodecov, dyadcov, beta, u_actor, u_choice):
    n = x.shape[0]
    buf = np.empty((kinds.shape[0], n))
    cdf = np.empty(n)
    changes = 0
    for m in range(u_actor.shape[0]):
        i = min(np.int64(u_actor[m] * n), n - 1)
        vals = choice_values(x, tp, indeg, outdeg, i, kinds, alphas, nodecov, dyadcov, beta, buf)
        top = vals.max()
        acc = 0.0
        for j in range(n):
            acc += math.exp(vals[j] - top)
            cdf[j] = acc
        target = u_choice[m] * cdf[n - 1]
        j = np.searchsorted(cdf, target, side="right")
        if j > n - 1:
            j = n - 1
        if j != i:
            toggle(x, tp, indeg, outdeg, i, j)
            changes += 1
    return changes
