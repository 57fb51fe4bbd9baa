"""Compiled inner loops over a :class:`~maxsum_bethe.model.Layout` ``L``.

Every kernel that builds factor tables takes an ``aug`` array shaped like the
flat unary vector; it is added to the factor entries (``theta_a + sum_u
aug_u``).  Plain diffusion passes zeros, the double loop passes tilde-theta,
and the BP residual passes the reparameterized unaries themselves.
``beta = inf`` selects max-plus.

Entry points copy the layout fields into locals once and hand plain arrays
to the helpers; reading fields through the tuple inside hot loops is slow.
"""

import numpy as np
from numba import njit

_NEG_INF = -np.inf
_OPTS = dict(cache=True, nogil=True)


@njit(**_OPTS)
def oplus(beta, buf, n):
    m = _NEG_INF
    for k in range(n):
        if buf[k] > m:
            m = buf[k]
    if m == _NEG_INF or np.isinf(beta):
        return m
    s = 0.0
    for k in range(n):
        s += np.exp(beta * (buf[k] - m))
    return m + np.log(s) / beta


@njit(**_OPTS)
def _unary_rep(v, dom, uoff, vptr, vpairs, moff, theta_u, alpha, out):
    d = dom[v]
    uo = uoff[v]
    for x in range(d):
        out[x] = theta_u[uo + x]
    for j in range(vptr[v], vptr[v + 1]):
        mo = moff[vpairs[j]]
        for x in range(d):
            out[x] -= alpha[mo + x]


@njit(**_OPTS)
def _all_unary_rep(dom, uoff, vptr, vpairs, moff, theta_u, alpha, out):
    for v in range(len(dom)):
        _unary_rep(v, dom, uoff, vptr, vpairs, moff, theta_u, alpha, out[uoff[v]:uoff[v + 1]])


@njit(**_OPTS)
def all_unary_rep(L, alpha, out):
    _all_unary_rep(L.dom, L.uoff, L.vptr, L.vpairs, L.moff, L.theta_u, alpha, out)


@njit(**_OPTS)
def _factor_rep(a, fptr, fvars, foff, moff, uoff, koff, kx, theta_f, alpha, aug, buf):
    start = foff[a]
    size = foff[a + 1] - start
    for k in range(size):
        buf[k] = theta_f[start + k]
    for p in range(fptr[a], fptr[a + 1]):
        mo = moff[p]
        uo = uoff[fvars[p]]
        ko = koff[p]
        for k in range(size):
            x = kx[ko + k]
            buf[k] += alpha[mo + x] + aug[uo + x]
    return size


@njit(**_OPTS)
def _pair_reduce(beta, d, ko, kx, buf, size, out, tmp):
    """(+)-reduce a factor buffer onto one variable; ``kx[ko + k]`` is its state at entry k."""
    for x in range(d):
        out[x] = _NEG_INF
    for k in range(size):
        x = kx[ko + k]
        if buf[k] > out[x]:
            out[x] = buf[k]
    if np.isinf(beta):
        return
    for x in range(d):
        tmp[x] = 0.0
    for k in range(size):
        x = kx[ko + k]
        if out[x] > _NEG_INF:
            tmp[x] += np.exp(beta * (buf[k] - out[x]))
    for x in range(d):
        if out[x] > _NEG_INF:
            out[x] += np.log(tmp[x]) / beta


@njit(**_OPTS)
def sweep(L, order, beta, alpha, aug, buf, urep, red, tmp):
    """Averaging updates of ``alpha_{av}`` for the pairs in ``order``; returns the
    largest message change.  A one-element ``order`` is a single pair update."""
    dom = L.dom
    uoff = L.uoff
    fptr = L.fptr
    fvars = L.fvars
    foff = L.foff
    moff = L.moff
    pair_factor = L.pair_factor
    vptr = L.vptr
    vpairs = L.vpairs
    theta_u = L.theta_u
    theta_f = L.theta_f
    koff = L.koff
    kx = L.kx
    change = 0.0
    for j in range(len(order)):
        p = order[j]
        v = fvars[p]
        d = dom[v]
        size = _factor_rep(pair_factor[p], fptr, fvars, foff, moff, uoff, koff, kx, theta_f, alpha, aug, buf)
        _unary_rep(v, dom, uoff, vptr, vpairs, moff, theta_u, alpha, urep)
        _pair_reduce(beta, d, koff[p], kx, buf, size, red, tmp)
        mo = moff[p]
        uo = uoff[v]
        for x in range(d):
            if theta_u[uo + x] > _NEG_INF:
                delta = 0.5 * (urep[x] - red[x])
                alpha[mo + x] += delta
                if abs(delta) > change:
                    change = abs(delta)
    return change


@njit(**_OPTS)
def diffusion_residual(L, beta, alpha, aug, buf, urep_all, red, tmp):
    """Mean and max of ``|theta^alpha_v(x_v) - (+)_{x_a\\v}[theta^alpha_a + aug]|``
    over incident pairs and live states."""
    dom = L.dom
    uoff = L.uoff
    fptr = L.fptr
    fvars = L.fvars
    foff = L.foff
    moff = L.moff
    theta_u = L.theta_u
    theta_f = L.theta_f
    koff = L.koff
    kx = L.kx
    _all_unary_rep(dom, uoff, L.vptr, L.vpairs, moff, theta_u, alpha, urep_all)
    total = 0.0
    worst = 0.0
    count = 0
    for a in range(len(fptr) - 1):
        size = _factor_rep(a, fptr, fvars, foff, moff, uoff, koff, kx, theta_f, alpha, aug, buf)
        for p in range(fptr[a], fptr[a + 1]):
            v = fvars[p]
            uo = uoff[v]
            d = dom[v]
            _pair_reduce(beta, d, koff[p], kx, buf, size, red, tmp)
            for x in range(d):
                if theta_u[uo + x] > _NEG_INF:
                    r = abs(urep_all[uo + x] - red[x])
                    total += r
                    count += 1
                    if r > worst:
                        worst = r
    if count == 0:
        return 0.0, 0.0
    return total / count, worst


@njit(**_OPTS)
def dual_value(L, beta, alpha, aug, buf, urep):
    """``sum_v (+) theta^alpha_v + sum_a (+)[theta^alpha_a + aug]``."""
    dom = L.dom
    uoff = L.uoff
    fptr = L.fptr
    fvars = L.fvars
    foff = L.foff
    moff = L.moff
    vptr = L.vptr
    vpairs = L.vpairs
    theta_u = L.theta_u
    theta_f = L.theta_f
    koff = L.koff
    kx = L.kx
    total = 0.0
    for v in range(len(dom)):
        _unary_rep(v, dom, uoff, vptr, vpairs, moff, theta_u, alpha, urep)
        total += oplus(beta, urep, dom[v])
    for a in range(len(fptr) - 1):
        size = _factor_rep(a, fptr, fvars, foff, moff, uoff, koff, kx, theta_f, alpha, aug, buf)
        total += oplus(beta, buf, size)
    return total


@njit(**_OPTS)
def run_diffusion(L, order, beta, tol, max_sweeps, alpha, aug, buf, urep, red, tmp, urep_all,
                  res_trace, max_trace, dual_trace, record_dual):
    """Sweep until the mean residual is <= tol; returns the number of sweeps run.
    ``dual_trace`` is only filled when ``record_dual`` is set."""
    res, worst = diffusion_residual(L, beta, alpha, aug, buf, urep_all, red, tmp)
    it = 0
    while res > tol and it < max_sweeps:
        sweep(L, order, beta, alpha, aug, buf, urep, red, tmp)
        res, worst = diffusion_residual(L, beta, alpha, aug, buf, urep_all, red, tmp)
        res_trace[it] = res
        max_trace[it] = worst
        if record_dual:
            dual_trace[it] = dual_value(L, beta, alpha, aug, buf, urep)
        it += 1
    return it


@njit(**_OPTS)
def bp_residual(L, beta, alpha, urep_all, buf, red, tmp):
    """Mean over pairs of the spread (max - min over live x_v) of
    ``(+)_{x_a\\v}[theta^alpha_a + sum_u theta^alpha_u] - theta^alpha_v(x_v)``."""
    dom = L.dom
    uoff = L.uoff
    fptr = L.fptr
    fvars = L.fvars
    foff = L.foff
    moff = L.moff
    theta_u = L.theta_u
    theta_f = L.theta_f
    koff = L.koff
    kx = L.kx
    _all_unary_rep(dom, uoff, L.vptr, L.vpairs, moff, theta_u, alpha, urep_all)
    total = 0.0
    npairs = 0
    for a in range(len(fptr) - 1):
        size = _factor_rep(a, fptr, fvars, foff, moff, uoff, koff, kx, theta_f, alpha, urep_all, buf)
        for p in range(fptr[a], fptr[a + 1]):
            v = fvars[p]
            uo = uoff[v]
            d = dom[v]
            _pair_reduce(beta, d, koff[p], kx, buf, size, red, tmp)
            lo = np.inf
            hi = -np.inf
            for x in range(d):
                if theta_u[uo + x] > _NEG_INF:
                    g = red[x] - urep_all[uo + x]
                    if g < lo:
                        lo = g
                    if g > hi:
                        hi = g
            if hi >= lo:
                total += hi - lo
            npairs += 1
    if npairs == 0:
        return 0.0
    return total / npairs


@njit(**_OPTS)
def factor_tables(L, alpha, aug, out):
    """All ``theta^alpha_a + aug`` tables, flat, into ``out``."""
    fptr = L.fptr
    foff = L.foff
    for a in range(len(fptr) - 1):
        _factor_rep(a, fptr, L.fvars, foff, L.moff, L.uoff, L.koff, L.kx, L.theta_f, alpha, aug,
                    out[foff[a]:foff[a + 1]])


@njit(**_OPTS)
def active_flat(values, offsets, eps, out):
    """``out[k] = values[k] >= max(table) - eps`` for each table delimited by ``offsets``."""
    for t in range(len(offsets) - 1):
        lo = offsets[t]
        hi = offsets[t + 1]
        m = _NEG_INF
        for k in range(lo, hi):
            if values[k] > m:
                m = values[k]
        for k in range(lo, hi):
            out[k] = values[k] > _NEG_INF and values[k] >= m - eps
