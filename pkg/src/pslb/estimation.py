"""Per-context running estimates and confidence radii.

Exp-phase samples are routed to the currently estimated context ``j``:
``u_j += A^{-1} x_s Y_s`` and ``T_j += 1``.  From these, ``theta_hat_j = u_j / T_j``
(zero when ``T_j = 0``) and ``p_hat_j = T_j / S``.

Every step that the change detector might later have to discard is logged in
a ring buffer holding the *previous* value of the touched row, so that undoing
restores the statistics bit for bit rather than by floating-point subtraction.
Steps that touch nothing (CD and CA pulls) are logged as no-ops so the log
depth counts time steps.

The numeric cores are ``@njit`` functions shared with the algorithm kernels.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._accel import njit

RADIUS_MODES = ("theory", "tight")
ZETA_MODES = ("mean", "eps")


class ReversionDepthError(RuntimeError):
    """Not enough logged history to revert; Assumption-type misconfiguration."""


# ---------------------------------------------------------------------------
# numeric cores


@njit
def clip2(v):
    if v > 2.0:
        return 2.0
    if v < -2.0:
        return -2.0
    return v


@njit
def log_terms(S, K, N, delta):
    """``ln(2/delta_v)``, ``ln(2/delta_d)``, ``ln(2/delta_m)`` at Exp count ``S``."""
    l3 = 3.0 * math.log(S)
    lv = math.log(30.0 * K / delta) + l3
    ld = math.log(30.0 * N / delta) + l3
    lm = math.log(30.0 * K * N / delta) + l3
    return lv, ld, lm


@njit
def forced_exploration_ok(S, N, L_max, delta):
    if S < 1:
        return False
    ld = math.log(30.0 * N / delta) + 3.0 * math.log(S)
    return S >= (2.0 * L_max / 9.0) * ld


@njit
def radius_terms(T, S, K, d, L_max, delta, tight, beta):
    """Fill ``beta`` and return ``(alpha, xi)`` for the current counts.

    ``tight`` selects the sharper constants used for experiments.
    """
    N = T.shape[0]
    Sf = float(S)
    lv, ld, lm = log_terms(Sf, K, N, delta)
    floor_p = 6.25 * L_max / Sf * ld
    for j in range(N):
        p = T[j] / Sf
        phi = 4.0 * max(p, floor_p)
        if phi > 0.25:
            phi = 0.25
        if tight:
            a = L_max * ld / 3.0
            b = (a + math.sqrt(a * a + 2.0 * Sf * phi * L_max * ld)) / Sf
        else:
            b = 2.5 * math.sqrt(2.0 * phi * L_max / Sf * ld)
        beta[j] = b if b < 1.0 else 1.0
    if not tight:
        alpha = 5.0 * math.sqrt(d / Sf * lv)
        xi = 25.0 * math.sqrt(2.0) * N * L_max / Sf * lm
        return alpha, xi
    q = d / Sf * lv
    alpha = q + math.sqrt(q * q + 4.0 * q)
    xi = 0.0
    psi1_floor = d / (4.0 * Sf) * lm
    for j in range(N):
        p = T[j] / Sf
        if psi1_floor > p:
            xi += 4.0 * beta[j]
        elif floor_p > p:
            qj = d / T[j] * lm
            xt = qj + math.sqrt(qj * qj + 4.0 * qj)
            xi += min(4.0, 2.0 * xt) * beta[j]
        else:
            xi += 10.0 * math.sqrt(d / T[j] * lm) * beta[j]
    return alpha, xi


@njit
def pair_radius(dj, beta, alpha, xi, eps_zeta, eps):
    """``2(alpha + xi) + sum_j beta_j |clip(dj_j) + zeta|`` for one arm pair."""
    N = dj.shape[0]
    if eps_zeta:
        zeta = eps
    else:
        sb = 0.0
        sd = 0.0
        for j in range(N):
            sb += beta[j]
            sd += beta[j] * clip2(dj[j])
        zeta = -sd / sb if sb > 0.0 else 0.0
    r = 2.0 * (alpha + xi)
    for j in range(N):
        r += beta[j] * abs(clip2(dj[j]) + zeta)
    return r


@njit
def projected_means(u, T, X, out):
    """``out[k, j] = x_k^T theta_hat_j``."""
    K = X.shape[0]
    N, d = u.shape
    for j in range(N):
        if T[j] == 0:
            for k in range(K):
                out[k, j] = 0.0
            continue
        inv = 1.0 / T[j]
        for k in range(K):
            s = 0.0
            for i in range(d):
                s += X[k, i] * u[j, i]
            out[k, j] = s * inv


@njit
def stop_margin(Mh, T, S, K, d, L_max, delta, tight, eps_zeta, eps, beta, dj):
    """Return ``(x*, min_{x != x*} Delta_hat(x*, x) - rho(x*, x))``.

    ``x*`` maximises ``x^T Theta_hat p_hat`` with ties to the lowest index.  The
    margin is ``+inf`` when there is a single arm.
    """
    N = T.shape[0]
    Sf = float(S)
    best = 0
    best_v = -np.inf
    for k in range(K):
        v = 0.0
        for j in range(N):
            v += Mh[k, j] * T[j]
        v /= Sf
        if v > best_v:
            best_v = v
            best = k
    alpha, xi = radius_terms(T, S, K, d, L_max, delta, tight, beta)
    margin = np.inf
    for k in range(K):
        if k == best:
            continue
        gap = 0.0
        for j in range(N):
            dj[j] = Mh[best, j] - Mh[k, j]
            gap += dj[j] * T[j]
        gap /= Sf
        m = gap - pair_radius(dj, beta, alpha, xi, eps_zeta, eps)
        if m < margin:
            margin = m
    return best, margin


# Undo log.  ``ring_ctx[i] = -1`` marks a no-op entry.


@njit
def log_push(ring_ctx, ring_u, meta, j, u):
    """Append an entry; ``meta = [head, count]``.  ``j < 0`` pushes a no-op."""
    cap = ring_ctx.shape[0]
    h = meta[0]
    ring_ctx[h] = j
    if j >= 0:
        for i in range(u.shape[1]):
            ring_u[h, i] = u[j, i]
    meta[0] = (h + 1) % cap
    if meta[1] < cap:
        meta[1] += 1


@njit
def log_revert(ring_ctx, ring_u, meta, steps, u, T):
    """Undo the newest ``steps`` entries and clear the log.

    Returns the number of Exp samples removed, or -1 if the log is too short.
    """
    cap = ring_ctx.shape[0]
    if steps > meta[1]:
        return -1
    removed = 0
    h = meta[0]
    for _ in range(steps):
        h = (h - 1) % cap
        j = ring_ctx[h]
        if j >= 0:
            for i in range(u.shape[1]):
                u[j, i] = ring_u[h, i]
            T[j] -= 1
            removed += 1
    meta[0] = 0
    meta[1] = 0
    return removed


# ---------------------------------------------------------------------------
# Python-facing API


@dataclass(frozen=True)
class RadiusParams:
    """Constants of the confidence radius.

    ``mode`` is ``"theory"`` or ``"tight"``; ``zeta`` is ``"mean"`` (weighted
    average of the clipped per-context gaps) or ``"eps"`` (``zeta = eps``).
    """

    K: int
    N: int
    d: int
    L_max: float
    delta: float
    mode: str = "theory"
    zeta: str = "mean"
    eps: float = 0.0

    def __post_init__(self):
        if self.mode not in RADIUS_MODES:
            raise ValueError(f"mode must be one of {RADIUS_MODES}")
        if self.zeta not in ZETA_MODES:
            raise ValueError(f"zeta must be one of {ZETA_MODES}")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    def delta_splits(self, S):
        S3 = float(S) ** 3
        return (
            self.delta / (15 * self.K * S3),
            self.delta / (15 * self.N * S3),
            self.delta / (15 * self.K * self.N * S3),
        )

    def terms(self, T, S):
        """``(alpha, xi, beta)`` for counts ``T`` and Exp count ``S``."""
        beta = np.empty(self.N)
        alpha, xi = radius_terms(
            np.asarray(T, dtype=np.float64), int(S), self.K, self.d, float(self.L_max),
            self.delta, self.mode == "tight", beta,
        )
        return alpha, xi, beta


class RunningStats:
    """Exp-phase statistics with an exact undo log.

    Args:
        N: number of contexts tracked.
        d: dimension.
        capacity: undo-log depth, normally ``w (gamma + 1) / 2``.
    """

    def __init__(self, N, d, capacity=1):
        self.u = np.zeros((N, d))
        self.T = np.zeros(N)
        self.j_hat = 0
        self._ring_ctx = np.full(max(int(capacity), 1), -1, dtype=np.int64)
        self._ring_u = np.zeros((self._ring_ctx.size, d))
        self._meta = np.zeros(2, dtype=np.int64)

    @property
    def S(self):
        return int(self.T.sum())

    @property
    def logged(self):
        return int(self._meta[1])

    def update(self, j, arm, reward, allocation):
        """Record one Exp-phase sample for context ``j`` (0-based)."""
        inc = allocation.info_inverse @ np.asarray(arm, dtype=float) * reward
        log_push(self._ring_ctx, self._ring_u, self._meta, int(j), self.u)
        self.u[j] += inc
        self.T[j] += 1

    def push_noop(self, n=1):
        for _ in range(n):
            log_push(self._ring_ctx, self._ring_u, self._meta, -1, self.u)

    def revert(self, steps):
        if log_revert(self._ring_ctx, self._ring_u, self._meta, int(steps), self.u, self.T) < 0:
            raise ReversionDepthError(f"cannot revert {steps} steps; only {self.logged} logged")

    def theta_hat(self):
        out = np.zeros_like(self.u)
        seen = self.T > 0
        out[seen] = self.u[seen] / self.T[seen, None]
        return out

    def p_hat(self):
        S = self.T.sum()
        return self.T / S if S > 0 else np.zeros_like(self.T)


def _gaps(stats, x, x_tilde):
    return stats.theta_hat() @ (np.asarray(x, dtype=float) - np.asarray(x_tilde, dtype=float))


def estimated_gap(stats, x, x_tilde):
    """``Delta_hat(x, x~) = (x - x~)^T Theta_hat p_hat``."""
    return float(_gaps(stats, x, x_tilde) @ stats.p_hat())


def confidence_radius(stats, params, x, x_tilde):
    """Radius ``rho_t(x, x~)`` around :func:`estimated_gap`."""
    S = stats.S
    if S < 1:
        raise ValueError("radius undefined before the first Exp sample")
    alpha, xi, beta = params.terms(stats.T, S)
    return float(pair_radius(_gaps(stats, x, x_tilde), beta, alpha, xi, params.zeta == "eps", params.eps))


def empirical_best_arm(stats, arms):
    """Lowest-index maximiser of ``x^T Theta_hat p_hat``."""
    X = np.atleast_2d(np.asarray(arms, dtype=float))
    return int(np.argmax(X @ (stats.theta_hat().T @ stats.p_hat())))
