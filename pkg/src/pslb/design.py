"""G-optimal allocation over a finite arm set.

The G-optimal design minimises ``g(lam) = max_x x^T A(lam)^{-1} x`` with
``A(lam) = sum_x lam_x x x^T``.  By the Kiefer-Wolfowitz theorem this is the
D-optimal design and its optimal value is exactly ``d``.  We solve the
D-optimal problem with Frank-Wolfe steps plus Wolfe-Atwood away steps, started
from a Kumar-Yildirim style core set.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

PRUNE = 1e-12
REFACTOR_EVERY = 256
POLISH = 1e-11


class RankDeficientError(ValueError):
    """Arms (or the weighted support) do not span R^d."""


class ConvergenceError(RuntimeError):
    def __init__(self, g, iterations):
        super().__init__(f"design did not converge after {iterations} iterations (g = {g:.12g})")
        self.g = g
        self.iterations = iterations


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Allocation:
    """Probability weights over arms with the induced information matrix.

    Attributes:
        weights: (K,) nonnegative, summing to one.
        info_matrix: (d, d) matrix ``A(lam)``.
        info_inverse: (d, d) inverse of ``info_matrix``.
        cdf: (K,) cumulative weights used for inverse-CDF sampling.
    """

    weights: np.ndarray
    info_matrix: np.ndarray
    info_inverse: np.ndarray
    cdf: np.ndarray

    @classmethod
    def from_weights(cls, arms, weights):
        arms = _as_arms(arms)
        w = np.asarray(weights, dtype=float)
        if w.shape != (arms.shape[0],) or np.any(w < 0):
            raise ValueError("weights must be a nonnegative vector with one entry per arm")
        w = w / w.sum()
        A = (arms * w[:, None]).T @ arms
        A = 0.5 * (A + A.T)
        try:
            Ainv = cho_solve(cho_factor(A), np.eye(A.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise RankDeficientError("weighted arms do not span R^d") from exc
        Ainv = 0.5 * (Ainv + Ainv.T)
        return cls(_frozen(w), _frozen(A), _frozen(Ainv), _frozen(_cdf(w)))

    @property
    def support(self):
        return np.flatnonzero(self.weights > 0)


def _cdf(w):
    c = np.cumsum(w)
    last = np.flatnonzero(w > 0)[-1]
    c[last:] = 1.0
    return c


def _as_arms(arms):
    X = np.atleast_2d(np.asarray(arms, dtype=float))
    if X.ndim != 2:
        raise ValueError("arms must be a (K, d) array")
    return X


def _core_set(X):
    """Greedy spanning core set (Kumar-Yildirim start).

    Repeatedly picks the arm with the largest component orthogonal to the span
    of those already chosen.  Returns ``d`` indices.
    """
    K, d = X.shape
    R = X.copy()
    chosen = []
    for _ in range(d):
        norms = np.einsum("ij,ij->i", R, R)
        norms[chosen] = -1.0
        i = int(np.argmax(norms))
        q = R[i] / np.sqrt(norms[i])
        R -= np.outer(R @ q, q)
        chosen.append(i)
    return chosen


def _inverse(X, w):
    A = (X * w[:, None]).T @ X
    Ainv = cho_solve(cho_factor(0.5 * (A + A.T)), np.eye(X.shape[1]))
    return 0.5 * (Ainv + Ainv.T)


def _caratheodory(X, w, d):
    """Shrink the support to at most d(d+1)/2 points without changing A(w)."""
    p = d * (d + 1) // 2
    iu = np.triu_indices(d)
    while True:
        supp = np.flatnonzero(w > 0)
        if supp.size <= p:
            return w
        V = np.stack([np.outer(X[i], X[i])[iu] for i in supp], axis=1)
        c = np.linalg.svd(V)[2][-1]
        if c.sum() > 0 or (c.sum() == 0 and c.max() <= 0):
            c = -c
        pos = c > 0
        if not pos.any():
            return w
        ratio = w[supp][pos] / c[pos]
        k = int(np.argmin(ratio))
        step = ratio[k]
        w = w.copy()
        w[supp] -= step * c
        w[supp[np.flatnonzero(pos)[k]]] = 0.0
        w[w < PRUNE] = 0.0
        w /= w.sum()


def compute_g_optimal(arms, tolerance=1e-6, max_iter=100_000):
    """Approximate G-optimal allocation.

    Args:
        arms: (K, d) array; the rows must span R^d.
        tolerance: stop once ``g(lam) <= d (1 + tolerance)``.
        max_iter: iteration cap.

    Returns:
        Allocation with ``max_design_norm <= d (1 + tolerance)``.

    Raises:
        RankDeficientError: arms do not span R^d.
        ConvergenceError: the cap was reached first.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    X0 = _as_arms(arms)
    K, d = X0.shape
    if K < d or np.linalg.matrix_rank(X0) < d:
        raise RankDeficientError(f"{K} arms do not span R^{d}")
    # Work on a normalised copy; g is invariant to a common scale.
    X = X0 / np.abs(X0).max()

    w = np.zeros(K)
    w[_core_set(X)] = 1.0 / d
    Ainv = _inverse(X, w)
    g = np.einsum("ij,jk,ik->i", X, Ainv, X)
    # Polish past the requested tolerance so the weights, not only g, settle.
    target = d * (1.0 + min(tolerance, POLISH))
    updates = 0
    it = 0
    while True:
        up = int(np.argmax(g))
        if g[up] <= target:
            break
        if it >= max_iter:
            if g[up] <= d * (1.0 + tolerance):
                break
            raise ConvergenceError(float(g[up]), it)
        it += 1
        supp = np.flatnonzero(w > 0)
        down = supp[int(np.argmin(g[supp]))]
        if g[up] - d >= d - g[down] or supp.size == 1:
            j, gj = up, g[up]
            alpha = (gj - d) / (d * (gj - 1.0))
        else:
            j, gj = down, g[down]
            floor = -w[j] / (1.0 - w[j])
            alpha = (gj - d) / (d * (gj - 1.0)) if gj > 1.0 else floor
            if alpha <= floor:
                alpha = floor
        w *= 1.0 - alpha
        w[j] += alpha
        if w[j] < PRUNE:
            w[j] = 0.0
        # Sherman-Morrison on A' = (1 - a) A + a x x^T.
        v = Ainv @ X[j]
        denom = (1.0 - alpha) + alpha * gj
        Ainv = (Ainv - (alpha / denom) * np.outer(v, v)) / (1.0 - alpha)
        proj = X @ v
        g = (g - (alpha / denom) * proj * proj) / (1.0 - alpha)
        updates += 1
        if updates % REFACTOR_EVERY == 0:
            w[w < PRUNE] = 0.0
            w /= w.sum()
            Ainv = _inverse(X, w)
            g = np.einsum("ij,jk,ik->i", X, Ainv, X)

    w[w < PRUNE] = 0.0
    w /= w.sum()
    w = _caratheodory(X, w, d)
    return Allocation.from_weights(X0, w)


def design_norms(allocation, arms):
    X = _as_arms(arms)
    return np.einsum("ij,jk,ik->i", X, allocation.info_inverse, X)


def max_design_norm(allocation, arms):
    """``max_x x^T A(lam)^{-1} x`` over the given arms."""
    if not np.all(np.isfinite(allocation.info_inverse)):
        raise RankDeficientError("singular information matrix")
    return float(design_norms(allocation, arms).max())


def sample_arm(allocation, rng_stream):
    """Draw one arm index from the allocation using exactly one uniform."""
    u = rng_stream.random()
    return int(np.searchsorted(allocation.cdf, u, side="right"))
