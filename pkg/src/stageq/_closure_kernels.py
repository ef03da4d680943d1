"""Compiled kernels for the moment closure and its adaptive integrator.

Every arithmetic expression here mirrors the reference implementation in
closure.py token for token (same operation order, same ray constants),
so the compiled and pure-Python routes agree bitwise; edits must keep
the two files in lockstep.

Schedule encoding matches _kernels: kind 0 is piecewise-constant with
right-continuous segment starts seg_t and values seg_v (a single segment
encodes constant input); kind 1 is the clamped sinusoid (s_off, s_amp,
s_om).  The integrator never steps across a segment boundary, so both
derivative evaluations of a step see one input value.

Integrator status codes: 0 ok, 1 step underflow, 2 step budget
exhausted; diag receives (time, step) at failure.
"""

import math

import numpy as np
from numba import njit

ZERO_RAY_RHO = 1e-14
POISSON_RAY_REL = 1e-10

MAX_ACCEPTED_STEPS = 20_000_000


@njit(cache=True)
def nb_pmf_k(n, rho, eta):
    if rho <= ZERO_RAY_RHO:
        return 1.0 if n == 0 else 0.0
    if eta - rho <= POISSON_RAY_REL * max(eta, 1.0):
        val = math.exp(n * math.log(rho) - rho - math.lgamma(n + 1.0))
    else:
        p = rho / eta
        r = rho * rho / (eta - rho)
        val = math.exp(math.lgamma(n + r) - math.lgamma(r) - math.lgamma(n + 1.0)
                       + r * math.log(p) + n * math.log1p(-p))
    return min(val, 1.0)


@njit(cache=True)
def stage_sums_k(rho, eta, sigma):
    """Deficit sum F and weighted deficit sum W of one stage."""
    F = 0.0
    W = 0.0
    for i in range(sigma):
        p = nb_pmf_k(i, rho, eta)
        F += (sigma - i) * p
        W += (2.0 * rho + 1.0 - 2.0 * i) * (sigma - i) * p
    return F, W


@njit(cache=True)
def closure_rhs_k(rho, eta, sig, c, c0, drho, deta):
    n = rho.size
    f_prev = 0.0
    a_prev = 0.0
    for k in range(n):
        s = sig[k]
        F, W = stage_sums_k(rho[k], eta[k], s)
        a = c / s
        if k == 0:
            drho[0] = c0 - c + a * F
            deta[0] = c0 + c - a * W
        else:
            drho[k] = a * F - a_prev * f_prev
            deta[k] = 2.0 * c - a_prev * f_prev - a * W
        f_prev = F
        a_prev = a


@njit(cache=True)
def throttle_k(x, sigma):
    if x <= 0.0:
        return 0.0
    if x >= sigma:
        return 1.0
    return x / sigma


@njit(cache=True)
def mean_field_rhs_k(rho, sig, c, c0, drho):
    n = rho.size
    flow_in = c0
    for k in range(n):
        flow_out = c * throttle_k(rho[k], sig[k])
        drho[k] = flow_in - flow_out
        flow_in = flow_out


@njit(cache=True)
def project_pair_k(rho, eta):
    r = rho if rho > 0.0 else 0.0
    if r > eta:
        m = 0.5 * (r + eta)
        if m < 0.0:
            m = 0.0
        return m, m
    return r, eta


@njit(cache=True)
def _project_state(yr, ye, mode, do_project):
    if not do_project:
        return
    n = yr.size
    if mode == 0:
        for j in range(n):
            yr[j], ye[j] = project_pair_k(yr[j], ye[j])
    else:
        for j in range(n):
            if yr[j] < 0.0:
                yr[j] = 0.0


@njit(cache=True)
def _rhs(yr, ye, sig, c, c0, kr, ke, mode):
    if mode == 0:
        closure_rhs_k(yr, ye, sig, c, c0, kr, ke)
    else:
        mean_field_rhs_k(yr, sig, c, c0, kr)


@njit(cache=True)
def integrate_k(rho0, eta0, sig, c, kind, seg_t, seg_v, s_off, s_amp, s_om,
                sample_t, atol, rtol, h0, hmin, hmax, safety, fmin, fmax,
                do_project, mode, out_rho, out_eta, diag):
    n = rho0.size
    tt = sample_t.size
    yr = rho0.copy()
    ye = eta0.copy()
    k1r = np.empty(n)
    k1e = np.empty(n)
    k2r = np.empty(n)
    k2e = np.empty(n)
    y1r = np.empty(n)
    y1e = np.empty(n)
    ymr = np.empty(n)
    yme = np.empty(n)
    y2r = np.empty(n)
    y2e = np.empty(n)

    t = 0.0
    sp = 0
    while sp < tt and sample_t[sp] <= t:
        for j in range(n):
            out_rho[sp, j] = yr[j]
            out_eta[sp, j] = ye[j]
        sp += 1
    if sp >= tt:
        return 0
    t_end = sample_t[tt - 1]
    nseg = seg_t.size
    seg = 0
    while kind == 0 and seg + 1 < nseg and seg_t[seg + 1] <= t:
        seg += 1
    h = h0
    accepted = 0
    while t < t_end:
        if h > hmax:
            h = hmax
        # cap the attempt at the next input breakpoint or the final sample
        t_cap = t_end
        if kind == 0 and seg + 1 < nseg and seg_t[seg + 1] < t_cap:
            t_cap = seg_t[seg + 1]
        h_try = h
        capped = False
        if t + h_try >= t_cap:
            h_try = t_cap - t
            capped = True
        if kind == 0:
            c0a = seg_v[seg]
            c0b = seg_v[seg]
        else:
            c0a = s_off + s_amp * math.sin(s_om * t)
            if c0a < 0.0:
                c0a = 0.0
            c0b = s_off + s_amp * math.sin(s_om * (t + 0.5 * h_try))
            if c0b < 0.0:
                c0b = 0.0
        _rhs(yr, ye, sig, c, c0a, k1r, k1e, mode)
        # one full Euler step (error reference) and two half steps
        for j in range(n):
            y1r[j] = yr[j] + h_try * k1r[j]
            ymr[j] = yr[j] + 0.5 * h_try * k1r[j]
        if mode == 0:
            for j in range(n):
                y1e[j] = ye[j] + h_try * k1e[j]
                yme[j] = ye[j] + 0.5 * h_try * k1e[j]
        _project_state(ymr, yme, mode, do_project)
        _rhs(ymr, yme, sig, c, c0b, k2r, k2e, mode)
        for j in range(n):
            y2r[j] = ymr[j] + 0.5 * h_try * k2r[j]
        if mode == 0:
            for j in range(n):
                y2e[j] = yme[j] + 0.5 * h_try * k2e[j]
        err = 0.0
        for j in range(n):
            sc = atol + rtol * max(abs(yr[j]), abs(y2r[j]))
            e = abs(y2r[j] - y1r[j]) / sc
            if e > err:
                err = e
            if mode == 0:
                sc = atol + rtol * max(abs(ye[j]), abs(y2e[j]))
                e = abs(y2e[j] - y1e[j]) / sc
                if e > err:
                    err = e
        if err <= 1.0:
            _project_state(y2r, y2e, mode, do_project)
            t_new = t + h_try
            if capped:
                t_new = t_cap
            denom = t_new - t
            while sp < tt and sample_t[sp] <= t_new:
                alpha = (sample_t[sp] - t) / denom
                for j in range(n):
                    out_rho[sp, j] = yr[j] + alpha * (y2r[j] - yr[j])
                    out_eta[sp, j] = ye[j] + alpha * (y2e[j] - ye[j])
                _project_state(out_rho[sp], out_eta[sp], mode, do_project)
                sp += 1
            for j in range(n):
                yr[j] = y2r[j]
                ye[j] = y2e[j]
            t = t_new
            while kind == 0 and seg + 1 < nseg and seg_t[seg + 1] <= t:
                seg += 1
            if not capped:
                if err == 0.0:
                    fac = fmax
                else:
                    fac = safety / math.sqrt(err)
                    if fac > fmax:
                        fac = fmax
                    elif fac < fmin:
                        fac = fmin
                h = h_try * fac
            accepted += 1
            if accepted > MAX_ACCEPTED_STEPS:
                diag[0] = t
                diag[1] = h_try
                return 2
        else:
            if err != err:  # NaN derivative: force the strongest shrink
                fac = fmin
            else:
                fac = safety / math.sqrt(err)
                if fac < fmin:
                    fac = fmin
            h = h_try * fac
            if h < hmin:
                diag[0] = t
                diag[1] = h
                return 1
    return 0
