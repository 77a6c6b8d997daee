"""Sliding-window change detection and context alignment.

LCD compares the regression estimates of the two halves of a window of ``w``
samples along every arm direction and alarms when some arm separates them by
more than ``b``.  LCA draws ``w/2`` fresh samples after an alarm and matches
them against the archived identification windows of the contexts seen so far.

All statistics are expressed through ``P[k, a] = x_k^T A^{-1} x_a``, so a half
window is summarised by the K-vector ``h[k] = sum_s P[k, a_s] Y_s``.
"""

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .design import sample_arm


@njit
def half_sum(P, arms_idx, rewards, start, stop, out):
    """``out[k] = sum_{s in [start, stop)} P[k, a_s] Y_s``."""
    K = P.shape[0]
    for k in range(K):
        out[k] = 0.0
    for s in range(start, stop):
        a = arms_idx[s]
        y = rewards[s]
        for k in range(K):
            out[k] += P[k, a] * y


@njit
def separation(h1, h2, half):
    """``max_k |h2[k] - h1[k]| / half``: the LCD statistic for two half sums."""
    m = 0.0
    for k in range(h1.shape[0]):
        v = abs(h2[k] - h1[k])
        if v > m:
            m = v
    return m / half


def projection_matrix(arms, allocation):
    X = np.atleast_2d(np.asarray(arms, dtype=float))
    return X @ allocation.info_inverse @ X.T


def _split(samples):
    idx = np.array([int(a) for a, _ in samples], dtype=np.int64)
    y = np.array([float(r) for _, r in samples])
    return idx, y


def lcd_statistic(arms, samples, allocation, P=None):
    """``max_x |x^T (theta2 - theta1)|`` for a window of (arm index, reward)."""
    n = len(samples)
    if n == 0 or n % 2:
        raise ValueError("window must have a positive even length")
    P = projection_matrix(arms, allocation) if P is None else P
    idx, y = _split(samples)
    h1 = np.empty(P.shape[0])
    h2 = np.empty(P.shape[0])
    half_sum(P, idx, y, 0, n // 2, h1)
    half_sum(P, idx, y, n // 2, n, h2)
    return float(separation(h1, h2, n / 2))


def lcd(arms, w, b, samples, allocation):
    """True iff the last ``w`` samples straddle a detectable change."""
    if w % 2 or len(samples) < w:
        raise ValueError("need an even w and at least w samples")
    return lcd_statistic(arms, list(samples)[-w:], allocation) > b


@dataclass
class CdBuffer:
    """CD samples since the last alarm and the recorded stop marker."""

    samples: list = field(default_factory=list)
    t_cd: float = float("inf")

    def append(self, arm, reward):
        self.samples.append((int(arm), float(reward)))

    def clear(self):
        self.samples.clear()
        self.t_cd = float("inf")


class CaArchive:
    """Identification windows keyed by 1-based context index in insertion order."""

    def __init__(self):
        self._store = OrderedDict()

    def __len__(self):
        return len(self._store)

    def __getitem__(self, j):
        return self._store[j]

    def __iter__(self):
        return iter(self._store)

    def items(self):
        return self._store.items()

    def set(self, j, samples):
        self._store[j] = [(int(a), float(r)) for a, r in samples]

    def add(self, samples):
        j = len(self._store) + 1
        self.set(j, samples)
        return j


def match(arms, w, b, new_samples, archive, allocation):
    """Index of the first archived window that ``new_samples`` does not alarm against."""
    for j, stored in archive.items():
        if not lcd(arms, w, b, list(new_samples) + list(stored), allocation):
            return j
    return None


def _pull(env, allocation):
    arm = sample_arm(allocation, env.arm_stream)
    return arm, env.step(arm).reward


def lca(env, arms, w, b, archive, allocation):
    """Draw ``w/2`` fresh samples and align them with the archive.

    Returns ``(index, archive)``.  The index is ``len(archive)`` after a new
    context was appended; the caller treats ``N + 1`` as failure.
    """
    new = [_pull(env, allocation) for _ in range(w // 2)]
    j = match(arms, w, b, new, archive, allocation)
    if j is None:
        return archive.add(new), archive
    archive.set(j, new)
    return j, archive


def lca_plus(env, arms, w, b, archive, allocation, naive):
    """LCA whose pulls also feed a NεBAI state.

    ``naive`` must provide ``update(arm_index, reward)`` and ``check()``, the
    latter returning the recommended arm or ``None``.  Returns
    ``(index, archive, early_stop_arm)``.  On an early stop the partial window
    is stored under a fresh index.
    """
    new = []
    for _ in range(w // 2):
        arm, y = _pull(env, allocation)
        new.append((arm, y))
        naive.update(arm, y)
        stop = naive.check()
        if stop is not None:
            return archive.add(new), archive, stop
    j = match(arms, w, b, new, archive, allocation)
    if j is None:
        return archive.add(new), archive, None
    archive.set(j, new)
    return j, archive, None
