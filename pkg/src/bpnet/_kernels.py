"""Compiled inner loops shared by the public bias, backpressure and queue functions."""
import numpy as np
from numba import njit


@njit(cache=True)
def min_next_hop(tail, head, allowed, U, N):
    L, C = allowed.shape[1], allowed.shape[0]
    h = np.full((N, C), np.inf)
    for l in range(L):
        a = tail[l]
        b = head[l]
        for c in range(C):
            if allowed[c, l] and U[b, c] < h[a, c]:
                h[a, c] = U[b, c]
    return h


@njit(cache=True)
def bellman_ford(tail, head, in_ptr, in_order, allowed, U, dest):
    """Least downstream backlog sum per (node, commodity).

    Queue-based Bellman-Ford from the destination over incoming links.  Each
    candidate is U_b + T_b with T_b itself accumulated from the destination
    backwards, so the result is the same as a plain round-robin sweep.
    """
    N, C = U.shape
    T = np.full((N, C), np.inf)
    queue = np.empty(N, dtype=np.int64)
    queued = np.zeros(N, dtype=np.bool_)
    for c in range(C):
        d = dest[c]
        T[d, c] = 0.0
        queue[0] = d
        queued[d] = True
        qh = 0
        size = 1
        while size > 0:
            b = queue[qh]
            qh = (qh + 1) % N
            size -= 1
            queued[b] = False
            ub = 0.0 if b == d else U[b, c]
            v = ub + T[b, c]
            for k in range(in_ptr[b], in_ptr[b + 1]):
                l = in_order[k]
                if allowed[c, l]:
                    a = tail[l]
                    if v < T[a, c]:
                        T[a, c] = v
                        if not queued[a]:
                            queue[(qh + size) % N] = a
                            size += 1
                            queued[a] = True
    return T


@njit(cache=True)
def backpressure(tail, head, allowed, X):
    L = tail.shape[0]
    C = X.shape[1]
    W = np.full((L, C), -np.inf)
    c_star = np.full(L, -1, dtype=np.int64)
    W_star = np.zeros(L)
    for l in range(L):
        a = tail[l]
        b = head[l]
        best = -np.inf
        for c in range(C):
            if allowed[c, l]:
                w = X[a, c] - X[b, c]
                if w == w:  # skip nan from inf - inf
                    W[l, c] = w
                    if c_star[l] < 0 or w > best:
                        best = w
                        c_star[l] = c
        if c_star[l] >= 0 and best > 0:
            W_star[l] = best
    return W, c_star, W_star


@njit(cache=True)
def resolve(out_ptr, out_links, U, mu, delta, tol):
    N, C = U.shape
    nu = mu.copy()
    buf = np.empty(out_links.shape[0], dtype=np.int64)
    for n in range(N):
        lo = out_ptr[n]
        hi = out_ptr[n + 1]
        if hi == lo:
            continue
        for c in range(C):
            demand = 0.0
            for k in range(lo, hi):
                demand += mu[out_links[k], c] * delta
            if demand <= U[n, c] + tol:
                continue
            # positive offers, stable insertion sort by decreasing rate
            m = 0
            for k in range(lo, hi):
                l = out_links[k]
                if mu[l, c] > 0.0:
                    j = m
                    while j > 0 and mu[buf[j - 1], c] < mu[l, c]:
                        buf[j] = buf[j - 1]
                        j -= 1
                    buf[j] = l
                    m += 1
            left = U[n, c]
            for k in range(m):
                l = buf[k]
                want = mu[l, c] * delta
                give = want if want < left else left
                if give < 0.0:
                    give = 0.0
                nu[l, c] = give / delta
                left -= give
    return nu


@njit(cache=True)
def apply_transfers(tail, head, U, nu, inflow, dest, delta):
    N, C = U.shape
    out = U + delta * inflow
    for l in range(tail.shape[0]):
        a = tail[l]
        b = head[l]
        for c in range(C):
            x = nu[l, c]
            if x != 0.0:
                out[a, c] -= delta * x
                out[b, c] += delta * x
    for c in range(C):
        out[dest[c], c] = 0.0
    return out


@njit(cache=True)
def route(c_star, W_star, link_rates, C):
    L = c_star.shape[0]
    mu = np.zeros((L, C))
    for l in range(L):
        if W_star[l] > 0.0:
            mu[l, c_star[l]] = link_rates[l]
    return mu


@njit(cache=True)
def delivered(head, dest, nu, delta):
    C = nu.shape[1]
    out = np.zeros(C)
    for l in range(head.shape[0]):
        for c in range(C):
            if head[l] == dest[c]:
                out[c] += nu[l, c] * delta
    return out


@njit(cache=True)
def run_block(tail, head, allowed, in_ptr, in_order, out_ptr, out_order, dest, rates, topo, static, bias_kind, bias_z,
              U, Q, Y, Qmax, fc_on, util_code, M, weight, rmax, umask, delta, A_blk, t0, warmup,
              backlog_sum, delivered_all, delivered_w, admitted, r_sum, g_sum, stats, series, tol):
    """Advance the state over one arrival block in place.

    ``bias_kind`` lists the dynamic bias terms in order (1 next hop, 2 min
    downstream) with their z in ``bias_z``.  ``stats`` holds max backlog and
    transport drops.  Returns the offending slot on a negative backlog, else -1.
    """
    N, C = U.shape
    L = tail.shape[0]
    n_act = rates.shape[1]
    r = np.zeros((N, C))
    gamma = np.zeros((N, C))
    for k in range(A_blk.shape[0]):
        t = t0 + k
        A = A_blk[k]
        total = 0.0
        for c in range(C):
            col = 0.0
            for n in range(N):
                col += U[n, c]
            if t >= warmup:
                backlog_sum[c] += col
            total += col
        if total > stats[0]:
            stats[0] = total
        if series.shape[0] > 0:
            series[t] = total
        if fc_on:
            r[:] = 0.0
            gamma[:] = 0.0
            for n in range(N):
                for c in range(C):
                    if Y[n, c] > U[n, c]:
                        q = Q[n, c] / delta
                        r[n, c] = q if q < rmax[n, c] else rmax[n, c]
                    if umask[n, c]:
                        if util_code == 0:
                            if Y[n, c] > 0:
                                g = M / (Y[n, c] * delta)
                                gamma[n, c] = g if g < rmax[n, c] else rmax[n, c]
                            else:
                                gamma[n, c] = rmax[n, c]
                        elif util_code == 1:
                            if M * weight >= Y[n, c] * delta:
                                gamma[n, c] = rmax[n, c]
            inflow = r
        else:
            inflow = A
        X = U.copy()
        if bias_kind.shape[0] > 0:
            f = np.zeros((N, C))
            for j in range(bias_kind.shape[0]):
                if bias_kind[j] == 1:
                    h = min_next_hop(tail, head, allowed, U, N)
                    for n in range(N):
                        for c in range(C):
                            v = h[n, c]
                            if not np.isfinite(v) or n == dest[c]:
                                v = 0.0
                            f[n, c] += v / bias_z[j]
                else:
                    T = bellman_ford(tail, head, in_ptr, in_order, allowed, U, dest)
                    for n in range(N):
                        for c in range(C):
                            f[n, c] += T[n, c] / bias_z[j]
            X = U + f
        X = X + static
        W, c_star, W_star = backpressure(tail, head, allowed, X)
        s = topo[k]
        act = 0
        if n_act > 1:
            best = -np.inf
            for i in range(n_act):
                v = 0.0
                for l in range(L):
                    v += rates[s, i, l] * W_star[l]
                if v > best:
                    best = v
                    act = i
        mu = route(c_star, W_star, rates[s, act], C)
        nu = resolve(out_ptr, out_order, U, mu, delta, tol)
        U_next = apply_transfers(tail, head, U, nu, inflow, dest, delta)
        for n in range(N):
            for c in range(C):
                if U_next[n, c] < -tol:
                    return t
                U[n, c] = U_next[n, c] if U_next[n, c] > 0.0 else 0.0
        if fc_on:
            for n in range(N):
                for c in range(C):
                    q = Q[n, c] - inflow[n, c] * delta
                    if q < 0.0:
                        q = 0.0
                    raw = Q[n, c] - inflow[n, c] * delta + A[n, c] * delta
                    if raw > Qmax[n, c]:
                        stats[1] += raw - Qmax[n, c]
                    q += A[n, c] * delta
                    Q[n, c] = q if q < Qmax[n, c] else Qmax[n, c]
                    y = Y[n, c] - inflow[n, c] * delta
                    if y < 0.0:
                        y = 0.0
                    Y[n, c] = y + gamma[n, c] * delta
                    if t >= warmup:
                        r_sum[n, c] += inflow[n, c]
                        g_sum[n, c] += gamma[n, c]
        got = delivered(head, dest, nu, delta)
        for c in range(C):
            delivered_all[c] += got[c]
            if t >= warmup:
                delivered_w[c] += got[c]
        for n in range(N):
            for c in range(C):
                admitted[n, c] += inflow[n, c] * delta
    return -1
