"""Resumable simulation kernels.

One kernel drives the naive algorithm, the piecewise-stationary algorithm and
their combination, so that the combined run consumes exactly the same arm and
noise draws as either standalone run.  The kernel works on a block of
pre-generated inputs (arm uniforms, noise, active context per step) and
returns when the block runs low, the event log fills, or the run ends; all
state lives in arrays owned by the caller, so a call can be resumed.
"""

import math

import numpy as np

from ._accel import njit
from .changedetect import separation
from .estimation import log_push, log_revert, projected_means, stop_margin

# ist slots
I_T = 0
I_TCA = 1
I_TCD = 2
I_CDN = 3
I_JHAT = 4
I_NCA = 5
I_STARTED = 6
I_PSACT = 7
I_NEXTCHK = 8
I_REC = 9
I_RESULT = 10
I_EVN = 11
I_POS = 12
I_NEXP = 13
I_NCD = 14
I_NCAS = 15
I_NALARM = 16
I_SHBAD = 17
I_TRN = 18
I_CDHEAD = 19
I_DIRTY = 20
I_SHCHK = 21
I_STATUS = 22
N_IST = 24

# icfg slots
C_K = 0
C_D = 1
C_N = 2
C_W = 3
C_GAMMA = 4
C_TIGHT = 5
C_EPSZETA = 6
C_RUNPS = 7
C_RUNNAIVE = 8
C_SHADOW = 9
C_SMIN = 10
C_MAXSTEPS = 11
N_ICFG = 12

# fcfg slots
F_EPS = 0
F_DELTA = 1
F_LMAX = 2
F_B = 3
F_TAU = 4
F_TSTAR = 5
F_C3 = 6
F_CBOUND = 7
N_FCFG = 8

# statuses
RUNNING = 0
NEED_DATA = 1
LOG_FULL = 2
DONE_PS = 3
DONE_NAIVE = 4
FAIL_N1 = 5
FAIL_TAU = 6
STEP_CAP = 7
ERR_DEPTH = 8

# event kinds
EV_ALARM = 1
EV_ALIGN = 2
EV_NEWCTX = 3
EV_FAIL_N1 = 4
EV_RECORD = 5
EV_CANCEL = 6
EV_STOP_PS = 7
EV_STOP_NAIVE = 8
EV_TAU_CAP = 9
EV_EARLY_CA = 10

EVENT_NAMES = {
    EV_ALARM: "alarm",
    EV_ALIGN: "align",
    EV_NEWCTX: "new_context",
    EV_FAIL_N1: "context_overflow",
    EV_RECORD: "record",
    EV_CANCEL: "cancel",
    EV_STOP_PS: "stop_ps",
    EV_STOP_NAIVE: "stop_naive",
    EV_TAU_CAP: "tau_cap",
    EV_EARLY_CA: "early_stop_in_ca",
}


@njit
def pick_arm(cdf, u):
    a = 0
    last = cdf.shape[0] - 1
    while a < last and cdf[a] <= u:
        a += 1
    return a


@njit
def naive_radius(t, K, d, L_max, delta, C3):
    ell = math.log(4.0 * K * C3 * t * t * t / delta)
    return math.sqrt(8.0 * L_max / t * ell) + 5.0 * math.sqrt(d / t * ell)


@njit
def naive_eval(nsum, t, X, L_max, delta, C3, q):
    """Return ``(leader, leader - runner-up, rho)`` for the running mean."""
    K, d = X.shape
    for k in range(K):
        s = 0.0
        for i in range(d):
            s += X[k, i] * nsum[i]
        q[k] = s / t
    top = 0
    for k in range(1, K):
        if q[k] > q[top]:
            top = k
    second = -np.inf
    for k in range(K):
        if k != top and q[k] > second:
            second = q[k]
    gap = q[top] - second if K > 1 else np.inf
    return top, gap, naive_radius(float(t), K, d, L_max, delta, C3)


@njit
def _event(ev, ist, kind, t, val):
    n = ist[I_EVN]
    ev[n, 0] = kind
    ev[n, 1] = t
    ev[n, 2] = val
    ist[I_EVN] = n + 1


@njit
def _naive_step(a, y, G, X, nsum, ist, fcfg, q):
    """Feed one pull to the running mean; return the stop arm or -1."""
    d = G.shape[1]
    for i in range(d):
        nsum[i] += G[a, i] * y
    t = ist[I_T]
    if t < fcfg[F_TSTAR] or t < ist[I_NEXTCHK]:
        return -1
    eps = fcfg[F_EPS]
    top, gap, rho = naive_eval(nsum, float(t), X, fcfg[F_LMAX], fcfg[F_DELTA], fcfg[F_C3], q)
    if gap - 2.0 * rho + eps >= 0.0:
        return top
    # The leader gap moves by at most 4c i / t and 2 rho shrinks by at most
    # rho i / t over the next i pulls, so no stop can occur before this point.
    slack = 2.0 * rho - eps - gap
    skip = 0.999 * slack * t / (4.0 * fcfg[F_CBOUND] + 2.0 * rho)
    if skip > 1.0:
        if skip > 1e15:
            skip = 1e15
        ist[I_NEXTCHK] = t + int(skip)
    else:
        ist[I_NEXTCHK] = t + 1
    return -1


@njit
def _push(ring_ctx, ring_u, meta, j, u, T, sh_u, sh_T, shadow):
    if shadow:
        h = meta[0]
        sh_u[h, :, :] = u
        sh_T[h, :] = T
    log_push(ring_ctx, ring_u, meta, j, u)


@njit
def run_block(X, G, P, cdf, M, arm_u, noise, ctx, n, icfg, fcfg, ist,
              u, T, ring_ctx, ring_u, meta, cd_arm, cd_y, h1, h2, arch, nsum,
              ev, tr, sh_u, sh_T, beta, dj, Mh, q, hnew):
    K = icfg[C_K]
    N = icfg[C_N]
    w = icfg[C_W]
    hw = w // 2
    gamma = icfg[C_GAMMA]
    tight = icfg[C_TIGHT] != 0
    eps_zeta = icfg[C_EPSZETA] != 0
    run_ps = icfg[C_RUNPS] != 0
    run_naive = icfg[C_RUNNAIVE] != 0
    shadow = icfg[C_SHADOW] != 0
    s_min = icfg[C_SMIN]
    max_steps = icfg[C_MAXSTEPS]
    eps = fcfg[F_EPS]
    delta = fcfg[F_DELTA]
    L_max = fcfg[F_LMAX]
    b = fcfg[F_B]
    tau = fcfg[F_TAU]
    d = X.shape[1]
    reserve = hw + 1 if run_ps else 1
    tr_cap = tr.shape[0]
    steps = w * (gamma + 1) // 2
    pos = 0

    while True:
        if n - pos < reserve:
            ist[I_STATUS] = NEED_DATA
            break
        if ist[I_EVN] + 8 > ev.shape[0]:
            ist[I_STATUS] = LOG_FULL
            break
        if ist[I_T] >= max_steps:
            ist[I_STATUS] = STEP_CAP
            break

        if run_ps and ist[I_STARTED] == 0:
            # Warm-up: w/2 pulls become the identification window of context 1.
            for k in range(K):
                hnew[k] = 0.0
            stop = -1
            for _ in range(hw):
                a = pick_arm(cdf, arm_u[pos])
                y = M[a, ctx[pos]] + noise[pos]
                pos += 1
                ist[I_T] += 1
                ist[I_NCAS] += 1
                if ist[I_TRN] < tr_cap:
                    tr[ist[I_TRN], 0] = a
                    tr[ist[I_TRN], 1] = y
                    ist[I_TRN] += 1
                for k in range(K):
                    hnew[k] += P[k, a] * y
                if run_naive:
                    stop = _naive_step(a, y, G, X, nsum, ist, fcfg, q)
                    if stop >= 0:
                        break
            for k in range(K):
                arch[0, k] = hnew[k]
            ist[I_NCA] = 1
            ist[I_JHAT] = 0
            ist[I_TCA] = ist[I_T]
            ist[I_STARTED] = 1
            if stop >= 0:
                _event(ev, ist, EV_STOP_NAIVE, ist[I_T], stop)
                ist[I_RESULT] = stop
                ist[I_STATUS] = DONE_NAIVE
                break
            continue

        if run_naive and ist[I_PSACT] == 0 and ist[I_TRN] >= tr_cap:
            # Naive-only stretch: accumulate without evaluating until the next check.
            t0 = ist[I_T]
            nxt = max(ist[I_NEXTCHK], int(math.ceil(fcfg[F_TSTAR])))
            span = min(n - pos - 1, max_steps - t0 - 1, nxt - t0 - 1)
            if span > 0:
                for _ in range(span):
                    a = pick_arm(cdf, arm_u[pos])
                    y = M[a, ctx[pos]] + noise[pos]
                    pos += 1
                    for i in range(d):
                        nsum[i] += G[a, i] * y
                ist[I_T] = t0 + span
                continue

        # one regular step
        a = pick_arm(cdf, arm_u[pos])
        y = M[a, ctx[pos]] + noise[pos]
        pos += 1
        ist[I_T] += 1
        t = ist[I_T]
        if ist[I_TRN] < tr_cap:
            tr[ist[I_TRN], 0] = a
            tr[ist[I_TRN], 1] = y
            ist[I_TRN] += 1
        if run_naive:
            stop = _naive_step(a, y, G, X, nsum, ist, fcfg, q)
            if stop >= 0:
                _event(ev, ist, EV_STOP_NAIVE, t, stop)
                ist[I_RESULT] = stop
                ist[I_STATUS] = DONE_NAIVE
                break
        if ist[I_PSACT] == 0:
            continue
        if t > tau:
            ist[I_PSACT] = 0
            _event(ev, ist, EV_TAU_CAP, t, 0)
            if not run_naive:
                ist[I_STATUS] = FAIL_TAU
                break
            continue

        if (t - ist[I_TCA]) % gamma != 0:
            j = ist[I_JHAT]
            _push(ring_ctx, ring_u, meta, j, u, T, sh_u, sh_T, shadow)
            for i in range(d):
                u[j, i] += G[a, i] * y
            T[j] += 1.0
            ist[I_NEXP] += 1
            ist[I_DIRTY] = 1
        else:
            _push(ring_ctx, ring_u, meta, -1, u, T, sh_u, sh_T, shadow)
            ist[I_NCD] += 1
            head = ist[I_CDHEAD]
            cnt = ist[I_CDN]
            if cnt >= w:
                o = head
                m = (head + hw) % w
                ao = cd_arm[o]
                yo = cd_y[o]
                am = cd_arm[m]
                ym = cd_y[m]
                for k in range(K):
                    h1[k] += P[k, am] * ym - P[k, ao] * yo
                    h2[k] += P[k, a] * y - P[k, am] * ym
            cd_arm[head] = a
            cd_y[head] = y
            ist[I_CDHEAD] = (head + 1) % w
            cnt += 1
            ist[I_CDN] = cnt
            if cnt >= w and (cnt - w) % w == 0:
                # exact recompute to stop drift of the running half sums
                start = ist[I_CDHEAD]
                for k in range(K):
                    h1[k] = 0.0
                    h2[k] = 0.0
                for s in range(w):
                    idx = (start + s) % w
                    aa = cd_arm[idx]
                    yy = cd_y[idx]
                    if s < hw:
                        for k in range(K):
                            h1[k] += P[k, aa] * yy
                    else:
                        for k in range(K):
                            h2[k] += P[k, aa] * yy
            if cnt >= w and separation(h1, h2, float(hw)) > b:
                _event(ev, ist, EV_ALARM, t, 0)
                if ist[I_TCD] >= 0:
                    _event(ev, ist, EV_CANCEL, t, 0)
                ist[I_NALARM] += 1
                ist[I_CDN] = 0
                ist[I_CDHEAD] = 0
                ist[I_TCD] = -1
                for k in range(K):
                    hnew[k] = 0.0
                stop = -1
                for _ in range(hw):
                    a2 = pick_arm(cdf, arm_u[pos])
                    y2 = M[a2, ctx[pos]] + noise[pos]
                    pos += 1
                    ist[I_T] += 1
                    ist[I_NCAS] += 1
                    if ist[I_TRN] < tr_cap:
                        tr[ist[I_TRN], 0] = a2
                        tr[ist[I_TRN], 1] = y2
                        ist[I_TRN] += 1
                    for k in range(K):
                        hnew[k] += P[k, a2] * y2
                    _push(ring_ctx, ring_u, meta, -1, u, T, sh_u, sh_T, shadow)
                    if run_naive:
                        stop = _naive_step(a2, y2, G, X, nsum, ist, fcfg, q)
                        if stop >= 0:
                            break
                t = ist[I_T]
                ist[I_TCA] = t
                if stop >= 0:
                    nca = ist[I_NCA]
                    if nca < arch.shape[0]:
                        for k in range(K):
                            arch[nca, k] = hnew[k]
                        ist[I_NCA] = nca + 1
                    _event(ev, ist, EV_EARLY_CA, t, nca + 1)
                    _event(ev, ist, EV_STOP_NAIVE, t, stop)
                    ist[I_RESULT] = stop
                    ist[I_STATUS] = DONE_NAIVE
                    break
                found = -1
                for jj in range(ist[I_NCA]):
                    if separation(arch[jj], hnew, float(hw)) <= b:
                        found = jj
                        break
                if found >= 0:
                    for k in range(K):
                        arch[found, k] = hnew[k]
                    ist[I_JHAT] = found
                    _event(ev, ist, EV_ALIGN, t, found + 1)
                else:
                    nca = ist[I_NCA]
                    if nca >= N:
                        _event(ev, ist, EV_FAIL_N1, t, N + 1)
                        ist[I_PSACT] = 0
                        if not run_naive:
                            ist[I_STATUS] = FAIL_N1
                            break
                        continue
                    for k in range(K):
                        arch[nca, k] = hnew[k]
                    ist[I_NCA] = nca + 1
                    ist[I_JHAT] = nca
                    _event(ev, ist, EV_NEWCTX, t, nca + 1)
                cap = ring_ctx.shape[0]
                target = (meta[0] - steps) % cap
                if log_revert(ring_ctx, ring_u, meta, steps, u, T) < 0:
                    ist[I_STATUS] = ERR_DEPTH
                    break
                if shadow:
                    ist[I_SHCHK] += 1
                    same = True
                    for jj in range(N):
                        if T[jj] != sh_T[target, jj]:
                            same = False
                        for i in range(d):
                            if u[jj, i] != sh_u[target, jj, i]:
                                same = False
                    if not same:
                        ist[I_SHBAD] += 1
                ist[I_DIRTY] = 1

        # stopping rule
        if ist[I_TCD] < 0:
            if ist[I_DIRTY] != 0:
                ist[I_DIRTY] = 0
                S = 0.0
                for jj in range(N):
                    S += T[jj]
                if S >= s_min and S >= 1.0:
                    projected_means(u, T, X, Mh)
                    best, margin = stop_margin(Mh, T, int(S), K, d, L_max, delta, tight,
                                               eps_zeta, eps, beta, dj)
                    if margin >= -eps:
                        ist[I_REC] = best
                        ist[I_TCD] = ist[I_CDN]
                        _event(ev, ist, EV_RECORD, t, best)
        elif ist[I_CDN] - hw == ist[I_TCD]:
            ist[I_RESULT] = ist[I_REC]
            _event(ev, ist, EV_STOP_PS, t, ist[I_REC])
            ist[I_STATUS] = DONE_PS
            break

    ist[I_POS] = pos
    return ist[I_STATUS]


@njit
def debai_segments(M, starts, ctx, nseg, counts, ist, eps, delta, C3, max_t):
    """Segment-count estimator, stopping checked at changepoints only.

    ``ist = [next segment, status, stop time, arm, segments seen]``.
    """
    K, N = M.shape
    for l in range(ist[0], nseg):
        t = starts[l]
        if t > max_t:
            ist[0] = l
            ist[1] = STEP_CAP
            return ist[1]
        counts[ctx[l]] += 1.0
        lt = l + 1
        best = 0
        best_v = -np.inf
        for k in range(K):
            v = 0.0
            for j in range(N):
                v += M[k, j] * counts[j]
            if v > best_v:
                best_v = v
                best = k
        bt = math.sqrt(1.0 / (2.0 * lt) * math.log(2.0 * C3 * N * lt * lt * lt / delta))
        margin = np.inf
        for k in range(K):
            if k == best:
                continue
            mean = 0.0
            gap = 0.0
            for j in range(N):
                mean += M[best, j] - M[k, j]
                gap += (M[best, j] - M[k, j]) * counts[j]
            gap /= lt
            zeta = -mean / N
            r = 0.0
            for j in range(N):
                r += abs(M[best, j] - M[k, j] + zeta)
            m = gap - bt * r
            if m < margin:
                margin = m
        if margin >= -eps:
            ist[0] = l + 1
            ist[1] = DONE_PS
            ist[2] = t
            ist[3] = best
            ist[4] = lt
            return ist[1]
    ist[0] = nseg
    ist[1] = NEED_DATA
    return ist[1]


@njit
def debai_beta_steps(M, starts, ctx, nseg, counts, ist, eps, delta, C3, L_max, max_t, beta):
    """Time-weighted estimator with per-context radii, checked every step.

    ``ist = [next segment, status, stop time, arm, segments seen, t]``.
    ``starts`` must contain one more entry than ``nseg`` (the end of the last).
    """
    K, N = M.shape
    t = ist[5]
    for l in range(ist[0], nseg):
        j_l = ctx[l]
        end = starts[l + 1]
        s0 = t + 1 if t + 1 > starts[l] else starts[l]
        for tt in range(s0, end):
            if tt > max_t:
                ist[0] = l
                ist[5] = tt - 1
                ist[1] = STEP_CAP
                return ist[1]
            counts[j_l] += 1.0
            tf = float(tt)
            ell = math.log(2.0 * C3 * N * tf * tf * tf / delta)
            floor_p = 6.25 * L_max / tf * ell
            a = L_max * ell / 3.0
            for j in range(N):
                phi = 4.0 * max(counts[j] / tf, floor_p)
                if phi > 0.25:
                    phi = 0.25
                bb = (a + math.sqrt(a * a + 2.0 * tf * phi * L_max * ell)) / tf
                beta[j] = bb if bb < 1.0 else 1.0
            best = 0
            best_v = -np.inf
            for k in range(K):
                v = 0.0
                for j in range(N):
                    v += M[k, j] * counts[j]
                if v > best_v:
                    best_v = v
                    best = k
            margin = np.inf
            for k in range(K):
                if k == best:
                    continue
                sb = 0.0
                sd = 0.0
                gap = 0.0
                for j in range(N):
                    dlt = M[best, j] - M[k, j]
                    sb += beta[j]
                    sd += beta[j] * dlt
                    gap += dlt * counts[j]
                gap /= tf
                zeta = -sd / sb if sb > 0.0 else 0.0
                r = 0.0
                for j in range(N):
                    r += beta[j] * abs(M[best, j] - M[k, j] + zeta)
                m = gap - r
                if m < margin:
                    margin = m
            if margin >= -eps:
                ist[0] = l
                ist[1] = DONE_PS
                ist[2] = tt
                ist[3] = best
                ist[4] = l + 1
                ist[5] = tt
                return ist[1]
        t = end - 1
        ist[5] = t
    ist[0] = nseg
    ist[1] = NEED_DATA
    return ist[1]
