"""Numba trial kernels for the Monte Carlo engines.

Per-trial state lives in local arrays; each trial draws from its own
(seed, trial_index) stream, so trials are independent of chunking and
thread count.  Ensemble reductions happen outside, over exact integer
count slabs.

Schedule encoding shared by both kernels: ``kind`` 0 means per-segment
constant input (covers constant and piecewise-constant schedules) with
segment start times ``seg_t`` (or step indices ``seg_m`` for the fixed
scheme) and values ``seg_v``; ``kind`` 1 means the sinusoid
max(0, off + amp*sin(om*t)), handled by thinning against its supremum in
the exact scheme and step-by-step in the fixed scheme.

The exact kernel recomputes the total rate per event with a left-to-right
sum so that `simulate.step_exact` (the readable reference implementation)
consumes a bit-identical draw sequence; tests pin whole-trial parity.
"""

import math

import numpy as np
from numba import njit, prange

from .rng import next_unit, stream_init

__all__ = ["ensemble_exact", "ensemble_fixed", "trial_exact", "trial_fixed"]


@njit(cache=True)
def trial_exact(seed, stream, sigma, c, kind, seg_t, seg_v, s_off, s_amp, s_om, sample_t, out):
    """One exact-SSA trial from the empty lattice; fills out[T, N].

    Sample convention: the state recorded at sample time s is the state
    immediately after the last event at or before s.  Returns 0 if the
    entered-exited-onlattice conservation check holds, 1 otherwise.
    """
    n = sigma.shape[0]
    tt = sample_t.shape[0]
    counts = np.zeros(n, np.int64)
    s0, s1, s2, s3 = stream_init(seed, stream)
    t = 0.0
    sp = 0
    seg = 0
    nseg = seg_t.shape[0]
    entered = 0
    exited = 0
    while sp < tt:
        if kind == 0:
            while seg + 1 < nseg and seg_t[seg + 1] <= t:
                seg += 1
            b = seg_v[seg]
            t_seg_end = seg_t[seg + 1] if seg + 1 < nseg else math.inf
        else:
            b = s_off + abs(s_amp)
            if b < 0.0:
                b = 0.0
            t_seg_end = math.inf
        lam = b
        for i in range(n):
            ci = counts[i]
            if ci > 0:
                if ci < sigma[i]:
                    lam += c * ci / sigma[i]
                else:
                    lam += c
        if lam == 0.0:
            if t_seg_end == math.inf:
                while sp < tt:
                    for i in range(n):
                        out[sp, i] = counts[i]
                    sp += 1
                break
            while sp < tt and sample_t[sp] < t_seg_end:
                for i in range(n):
                    out[sp, i] = counts[i]
                sp += 1
            t = t_seg_end
            continue
        u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
        t_cand = t + (-math.log1p(-u) / lam)
        if t_cand >= t_seg_end:
            while sp < tt and sample_t[sp] < t_seg_end:
                for i in range(n):
                    out[sp, i] = counts[i]
                sp += 1
            t = t_seg_end
            continue
        while sp < tt and sample_t[sp] < t_cand:
            for i in range(n):
                out[sp, i] = counts[i]
            sp += 1
        if sp >= tt:
            break
        t = t_cand
        u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
        x = u * lam
        if x < b:
            if kind == 1:
                c0_now = s_off + s_amp * math.sin(s_om * t)
                if c0_now < 0.0:
                    c0_now = 0.0
                if x >= c0_now:
                    continue  # phantom event of the thinning bound
            counts[0] += 1
            entered += 1
        else:
            acc = b
            fired = -1
            for i in range(n):
                ci = counts[i]
                if ci > 0:
                    if ci < sigma[i]:
                        acc += c * ci / sigma[i]
                    else:
                        acc += c
                    if x < acc:
                        fired = i
                        break
            if fired < 0:
                # x rounded up to the cumulative total; take the last live channel
                for i in range(n - 1, -1, -1):
                    if counts[i] > 0:
                        fired = i
                        break
            if fired < 0:
                counts[0] += 1
                entered += 1
            else:
                counts[fired] -= 1
                if fired == n - 1:
                    exited += 1
                else:
                    counts[fired + 1] += 1
    on_lattice = 0
    for i in range(n):
        on_lattice += counts[i]
    return 0 if on_lattice == entered - exited else 1


@njit(cache=True, parallel=True)
def ensemble_exact(seed, trial0, ntrials, sigma, c, kind, seg_t, seg_v,
                   s_off, s_amp, s_om, sample_t, out, status):
    for j in prange(ntrials):
        status[j] = trial_exact(np.uint64(seed), np.uint64(trial0 + j), sigma, c,
                                kind, seg_t, seg_v, s_off, s_amp, s_om,
                                sample_t, out[j])


@njit(cache=True)
def trial_fixed(seed, stream, sigma, c, dt, kind, seg_m, seg_v, s_off, s_amp, s_om,
                sample_m, out):
    """One fixed-step trial from the empty lattice; fills out[T, N].

    Realizes the per-step scheme: each channel fires independently with
    probability rate*dt, rates frozen at the step start, fires applied in
    descending channel order (last stage first, input last).  Quiet steps
    are skipped in blocks by sampling the geometric number of steps to the
    first firing step, which leaves the law of the chain unchanged.

    Sample index convention: sample_m[j] is the number of completed steps,
    i.e. the state recorded for it is the one after that many steps.
    """
    n = sigma.shape[0]
    tt = sample_m.shape[0]
    counts = np.zeros(n, np.int64)
    pch = np.empty(n + 1, np.float64)     # per-channel fire probability
    suffix = np.empty(n + 2, np.float64)  # suffix[i] = prod_{ch >= i} (1 - pch[ch])
    fired = np.empty(n + 1, np.int64)
    s0, s1, s2, s3 = stream_init(seed, stream)
    m = 0
    sp = 0
    seg = 0
    nseg = seg_m.shape[0]
    m_end = sample_m[tt - 1] + 1
    entered = 0
    exited = 0
    lo = 0
    hi = -1
    while sp < tt:
        if kind == 0:
            while seg + 1 < nseg and seg_m[seg + 1] <= m:
                seg += 1
            p0 = seg_v[seg] * dt
            m_seg_end = seg_m[seg + 1] if seg + 1 < nseg else m_end
        else:
            v = s_off + s_amp * math.sin(s_om * (m * dt))
            if v < 0.0:
                v = 0.0
            p0 = v * dt
            m_seg_end = m + 1
        while lo <= hi and counts[lo] == 0:
            lo += 1
        ch_hi = hi + 1
        ch_lo = 0 if p0 > 0.0 else lo + 1
        s_total = 1.0
        if ch_lo <= ch_hi:
            suffix[ch_hi + 1] = 1.0
            for ch in range(ch_hi, ch_lo - 1, -1):
                if ch == 0:
                    p = p0
                else:
                    ci = counts[ch - 1]
                    if ci <= 0:
                        p = 0.0
                    elif ci < sigma[ch - 1]:
                        p = c * ci / sigma[ch - 1] * dt
                    else:
                        p = c * dt
                pch[ch] = p
                suffix[ch] = suffix[ch + 1] * (1.0 - p)
            s_total = suffix[ch_lo]
        if ch_lo > ch_hi or s_total >= 1.0:
            # no channel can fire during this segment
            target = m_seg_end
            while sp < tt and sample_m[sp] < target:
                for i in range(n):
                    out[sp, i] = counts[i]
                sp += 1
            if sp >= tt:
                break
            m = target
            continue
        avail = float(m_seg_end - m)
        if s_total > 0.0:
            u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
            g_real = math.log(1.0 - u) / math.log(s_total)
            if g_real > avail:
                target = m_seg_end
                while sp < tt and sample_m[sp] < target:
                    for i in range(n):
                        out[sp, i] = counts[i]
                    sp += 1
                if sp >= tt:
                    break
                m = target
                continue
            g = int(math.ceil(g_real))
            if g < 1:
                g = 1
        else:
            g = 1  # some channel fires with probability 1
        target = m + g
        while sp < tt and sample_m[sp] < target:
            for i in range(n):
                out[sp, i] = counts[i]
            sp += 1
        m = target
        # select the fired set at the firing step, conditioned on >= 1 fire
        nf = 0
        if s_total > 0.0:
            u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
            first = ch_hi
            for ch in range(ch_lo, ch_hi + 1):
                # P(first firer > ch | at least one fire)
                tail = (s_total / suffix[ch + 1] - s_total) / (1.0 - s_total)
                if u >= tail:
                    first = ch
                    break
            fired[nf] = first
            nf += 1
            # remaining channels fire independently; skip-scan them with
            # one uniform per firer: u < P(no fire in cur..ch_hi) stops,
            # otherwise the same draw locates the next firer
            cur = first + 1
            while cur <= ch_hi:
                rem = suffix[cur]
                if rem >= 1.0:
                    break
                u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
                if u < rem:
                    break
                sel = ch_hi
                for ch in range(cur, ch_hi + 1):
                    # P(no fire in cur..ch); decreasing, ends at rem
                    if u >= rem / suffix[ch + 1]:
                        sel = ch
                        break
                fired[nf] = sel
                nf += 1
                cur = sel + 1
        else:
            # a sure-fire channel exists; plain independent sweep
            for ch in range(ch_lo, ch_hi + 1):
                p = pch[ch]
                if p > 0.0:
                    if p >= 1.0:
                        fired[nf] = ch
                        nf += 1
                    else:
                        u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
                        if u < p:
                            fired[nf] = ch
                            nf += 1
        for k in range(nf - 1, -1, -1):
            ch = fired[k]
            if ch == 0:
                counts[0] += 1
                entered += 1
                if hi < 0:
                    hi = 0
                lo = 0
            else:
                st = ch - 1
                counts[st] -= 1
                if ch == n:
                    exited += 1
                else:
                    counts[st + 1] += 1
                    if st + 1 > hi:
                        hi = st + 1
        while hi >= 0 and counts[hi] == 0:
            hi -= 1
        if lo > hi:
            lo = 0 if hi < 0 else hi
    on_lattice = 0
    for i in range(n):
        on_lattice += counts[i]
    return 0 if on_lattice == entered - exited else 1


@njit(cache=True, parallel=True)
def ensemble_fixed(seed, trial0, ntrials, sigma, c, dt, kind, seg_m, seg_v,
                   s_off, s_amp, s_om, sample_m, out, status):
    for j in prange(ntrials):
        status[j] = trial_fixed(np.uint64(seed), np.uint64(trial0 + j), sigma, c, dt,
                                kind, seg_m, seg_v, s_off, s_amp, s_om,
                                sample_m, out[j])
