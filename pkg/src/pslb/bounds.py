"""Closed-form tuning constants and complexity terms.

Everything here is a pure function of its arguments.  Logarithms are natural;
``ln(1/delta)`` factors are kept explicit and hidden logarithmic factors are
not included.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import zeta

from .env import delta_c, expected_returns

C3 = float(zeta(3.0))


def tau_star(N, K, L_max, eps, delta):
    """Execution cap of the piecewise-stationary algorithm."""
    if min(N, K, L_max, eps, delta) <= 0 or delta >= 1:
        raise ValueError("arguments must be positive and delta < 1")
    return 38400.0 * math.log(80.0) * N * L_max / eps**2 * math.log(N * N * K * L_max / (delta * eps**2))


def t_star(d, K, delta):
    """Warm-up length of the naive algorithm."""
    return 3.0 * d * math.log(6.0 * d * K * C3 / delta)


def delta_fae(gamma, delta, tau, K):
    """Per-window false-alarm budget ``gamma delta / (4 tau^2 K)``."""
    return gamma * delta / (4.0 * tau * tau * K)


def threshold_b(w, d, d_fae):
    """LCD threshold guaranteeing the false-alarm budget ``d_fae`` per window."""
    if not 0 < d_fae < 1:
        raise ValueError("delta_FAE must lie in (0, 1)")
    if w <= 0:
        raise ValueError("w must be positive")
    ell = math.log(2.0 / d_fae)
    a = 8.0 * d / (3.0 * w) * ell
    return a + math.sqrt(a * a + 24.0 * d / w * ell)


def detectable(instance, b):
    """Whether ``2 b <= Delta_c`` for the instance."""
    return 2.0 * b <= delta_c(instance)


def check_assumption(instance, w, b, gamma, l_min=None):
    """Return ``(2b <= Delta_c, 3 w gamma <= L_min)``."""
    l_min = instance.lmin if l_min is None else l_min
    return detectable(instance, b), 3 * w * gamma <= l_min


def _gaps(instance):
    M = instance.means
    mu = expected_returns(instance)
    star = int(np.argmax(mu))
    return M, mu, star


def hbar(instance, eps, xe, x):
    """``(sum_j sqrt(min{16 p_j, 1/4}) |Delta_j(xe, x) + eps|)^2``."""
    M = instance.means
    w = np.sqrt(np.minimum(16.0 * instance.probs, 0.25))
    return float((w * np.abs(M[xe] - M[x] + eps)).sum() ** 2)


def h_de(instance, eps, xe, x):
    M, mu, star = _gaps(instance)
    return instance.lmax / (mu[star] - mu[x] + eps) ** 2 * hbar(instance, eps, xe, x)


@dataclass
class BoundReport:
    """Complexity terms; ``nan`` and ``None`` pairs mark an empty maximum."""

    eps: float
    delta: float
    tau_star: float
    b_threshold: float
    T_V: float
    T_V_arm: object
    T_D: float
    T_D_pair: object
    T_R: float
    T_R_arm: object
    H_DE: float
    H_bar: float
    psebai: float
    psebai_pair: object
    T_V_N: float
    T_D_N: float
    nebai: float
    psebai_plus: float
    N_C: float
    N_C_arm: int

    def as_dict(self):
        out = {}
        for k, v in asdict(self).items():
            if isinstance(v, (np.floating, np.integer)):
                v = v.item()
            elif isinstance(v, tuple):
                v = tuple(int(x) for x in v)
            out[k] = v
        return out


def hardness_terms(instance, eps, delta, gamma=6, w=None, l_max=None):
    """Upper-bound terms for the instance.

    The piecewise-stationary terms maximise over pairs ``(x_eps, x)`` with
    ``x_eps`` in the eps-best set and ``x`` distinct from both ``x_eps`` and the
    best arm.  ``w`` defaults to ``L_min / (3 gamma)`` rounded down to even.
    """
    if eps <= 0 or not 0 < delta < 1:
        raise ValueError("need eps > 0 and delta in (0, 1)")
    M, mu, star = _gaps(instance)
    K, d, N = instance.K, instance.d, instance.N
    L = instance.lmax if l_max is None else l_max
    lg = math.log(1.0 / delta)
    gap = mu[star] - mu
    best = np.flatnonzero(mu >= mu[star] - eps).tolist()
    pairs = [(xe, x) for xe in best for x in range(K) if x not in (xe, star)]

    nan = float("nan")
    tv = (nan, None)
    td = (nan, None, nan, nan)
    tr = (nan, None)
    tot = (nan, None)
    for xe, x in pairs:
        v = d / (gap[x] + eps) ** 2 * lg
        r = N * L / (gap[x] + eps) * lg
        if not v <= tv[0]:
            tv = (v, x)
        if not r <= tr[0]:
            tr = (r, x)
        hb = hbar(instance, eps, xe, x)
        hd = L / (gap[x] + eps) ** 2 * hb
        if not hd * lg <= td[0]:
            td = (hd * lg, (xe, x), hd, hb)
        s = v + hd * lg + r
        if not s <= tot[0]:
            tot = (s, (xe, x))

    dmin = float(gap[gap > 0].min()) if np.any(gap > 0) else math.inf
    tvn = d / (eps + dmin) ** 2 * lg
    tdn = L / (eps + dmin) ** 2 * lg
    nebai = tvn + tdn
    plus = min(tot[0], nebai) if not math.isnan(tot[0]) else nebai

    tau = tau_star(N, K, L, eps, delta)
    if w is None:
        w = max(2, (instance.lmin // (3 * gamma)) // 2 * 2)
    b = threshold_b(w, d, delta_fae(gamma, delta, tau, K))
    nc, nc_arm = nc_lower_bound(instance, eps, delta) if delta < 0.25 else (nan, -1)
    return BoundReport(
        eps=eps, delta=delta, tau_star=tau, b_threshold=b,
        T_V=tv[0], T_V_arm=tv[1], T_D=td[0], T_D_pair=td[1], T_R=tr[0], T_R_arm=tr[1],
        H_DE=td[2], H_bar=td[3], psebai=tot[0], psebai_pair=tot[1],
        T_V_N=tvn, T_D_N=tdn, nebai=nebai, psebai_plus=plus, N_C=nc, N_C_arm=nc_arm,
    )


def nc_lower_bound(instance, eps, delta):
    """Closed-form lower bound on the expected number of observed changepoints.

    Returns ``(N_C, maximising arm)``.
    """
    if not 0 < delta < 0.25:
        raise ValueError("need delta in (0, 1/4)")
    M, mu, star = _gaps(instance)
    best, arg = -math.inf, -1
    for x in range(instance.K):
        if x == star:
            continue
        dj = M[star] - M[x] + eps
        ratio = float(instance.probs @ dj**2) / (mu[star] - mu[x] + eps) ** 2
        if ratio > best:
            best, arg = ratio, x
    if arg < 0:
        return 0.0, -1
    return best * math.log(1.0 / (4.0 * delta)), arg


def transductive_singleton(instance, eps, iters=2000):
    """``min_lam max_{x != x*} ||x* - x||^2_{A(lam)^-1} / (Delta + eps)^2``.

    Approximate value from Frank-Wolfe with step ``2 / (k + 3)`` on the
    weighted directions; useful for single-context instances only.
    """
    X = instance.arms
    M, mu, star = _gaps(instance)
    Y = np.array([(X[star] - X[x]) / (mu[star] - mu[x] + eps) for x in range(instance.K) if x != star])
    if Y.size == 0:
        return 0.0
    lam = np.full(instance.K, 1.0 / instance.K)
    best = math.inf
    for k in range(iters):
        Ainv = np.linalg.inv((X * lam[:, None]).T @ X)
        vals = np.einsum("ij,jk,ik->i", Y, Ainv, Y)
        i = int(np.argmax(vals))
        best = min(best, float(vals[i]))
        grad = -((X @ Ainv @ Y[i]) ** 2)
        s = np.zeros_like(lam)
        s[int(np.argmin(grad))] = 1.0
        lam += 2.0 / (k + 3.0) * (s - lam)
    return best
