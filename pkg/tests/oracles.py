"""Independent re-derivations used as test oracles.

Written from the formulas directly, with plain loops and the ``math`` module,
sharing no code with the package.
"""

import math

import numpy as np

APERY = 1.2020569031595942


def grid_g_optimal_2d(arms, step=1e-3):
    """Brute-force ``min_lam max_x x^T A(lam)^-1 x`` over the 2-simplex (three arms)."""
    X = np.asarray(arms, dtype=float)
    n = int(round(1.0 / step))
    best = (math.inf, None)
    for i in range(n + 1):
        for j in range(n + 1 - i):
            w = np.array([i, j, n - i - j], dtype=float) / n
            A = (X * w[:, None]).T @ X
            det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
            if det <= 1e-14:
                continue
            inv = np.array([[A[1, 1], -A[0, 1]], [-A[1, 0], A[0, 0]]]) / det
            g = max(float(x @ inv @ x) for x in X)
            if g < best[0]:
                best = (g, w)
    return best


def tau_star(N, K, L, eps, delta):
    lead = 38400 * math.log(80) * N * L / (eps * eps)
    return lead * math.log(N * N * K * L / (delta * eps * eps))


def b_threshold(w, d, d_fae):
    lg = math.log(2 / d_fae)
    first = 8 * d * lg / (3 * w)
    return first + math.sqrt(first**2 + 24 * d * lg / w)


def delta_fae(gamma, delta, tau, K):
    return gamma * delta / (4 * tau**2 * K)


def _mu(M, p):
    return [sum(M[k][j] * p[j] for j in range(len(p))) for k in range(len(M))]


def hardness(arms, thetas, probs, L, eps, delta):
    """Dictionary of the complexity terms, maximised over the admissible pairs."""
    K, N = len(arms), len(probs)
    d = len(arms[0])
    M = [[sum(arms[k][i] * thetas[i][j] for i in range(d)) for j in range(N)] for k in range(K)]
    mu = _mu(M, probs)
    star = max(range(K), key=lambda k: (mu[k], -k))
    lg = math.log(1 / delta)
    out = {"T_V": None, "T_D": None, "T_R": None, "H_DE": None, "H_bar": None, "psebai": None}
    for xe in range(K):
        if mu[xe] < mu[star] - eps:
            continue
        for x in range(K):
            if x in (xe, star):
                continue
            g = mu[star] - mu[x] + eps
            tv = d * lg / g**2
            tr = N * L * lg / g
            s = 0.0
            for j in range(N):
                s += math.sqrt(min(16 * probs[j], 0.25)) * abs(M[xe][j] - M[x][j] + eps)
            hb = s * s
            hd = L * hb / g**2
            candidates = {"T_V": tv, "T_R": tr, "psebai": tv + hd * lg + tr}
            for k, v in candidates.items():
                if out[k] is None or v > out[k]:
                    out[k] = v
            if out["T_D"] is None or hd * lg > out["T_D"]:
                out["T_D"], out["H_DE"], out["H_bar"] = hd * lg, hd, hb
    gaps = [mu[star] - m for m in mu if mu[star] - m > 0]
    dmin = min(gaps) if gaps else math.inf
    out["T_V_N"] = d * lg / (eps + dmin) ** 2
    out["T_D_N"] = L * lg / (eps + dmin) ** 2
    out["nebai"] = out["T_V_N"] + out["T_D_N"]
    out["psebai_plus"] = out["nebai"] if out["psebai"] is None else min(out["psebai"], out["nebai"])
    return out


def n_c(arms, thetas, probs, eps, delta):
    K, N = len(arms), len(probs)
    d = len(arms[0])
    M = [[sum(arms[k][i] * thetas[i][j] for i in range(d)) for j in range(N)] for k in range(K)]
    mu = _mu(M, probs)
    star = max(range(K), key=lambda k: (mu[k], -k))
    ratios = {}
    for x in range(K):
        if x == star:
            continue
        num = sum(probs[j] * (M[star][j] - M[x][j] + eps) ** 2 for j in range(N))
        ratios[x] = num / (mu[star] - mu[x] + eps) ** 2
    x = max(ratios, key=lambda k: (ratios[k], -k))
    return ratios[x] * math.log(1 / (4 * delta)), x


def naive_radius(t, K, d, L, delta):
    lg = math.log(4 * K * APERY * t**3 / delta)
    return math.sqrt(8 * L / t * lg) + 5 * math.sqrt(d / t * lg)


def naive_t_star(d, K, delta):
    return 3 * d * math.log(6 * d * K * APERY / delta)


def naive_noiseless_stop(gap, eps, K, d, L, delta):
    """First ``t >= t*`` at which the naive test passes on exact means."""
    t = math.ceil(naive_t_star(d, K, delta))
    while gap - 2 * naive_radius(t, K, d, L, delta) + eps < 0:
        t += 1
    return t
