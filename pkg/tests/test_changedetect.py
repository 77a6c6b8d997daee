import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pslb.algos import NaiveState
from pslb.bounds import threshold_b
from pslb.changedetect import (
    CaArchive,
    CdBuffer,
    lca,
    lca_plus,
    lcd,
    lcd_statistic,
    match,
    projection_matrix,
)
from pslb.design import Allocation, compute_g_optimal, sample_arm
from pslb.env import EnvState, make_example_5_1

from .conftest import PHI, single_context

ARMS = np.eye(2)
UNIFORM2 = Allocation.from_weights(ARMS, [0.5, 0.5])


class Alternating:
    """Arm stream stand-in giving e1, e2, e1, e2, ... under the uniform allocation."""

    def __init__(self):
        self.k = 0

    def random(self):
        self.k += 1
        return 0.25 if self.k % 2 else 0.75


class ScriptedEnv:
    """Noiseless environment whose context vector can be switched by the test."""

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float)
        self.arm_stream = Alternating()

    def step(self, arm):
        class Obs:
            pass

        o = Obs()
        o.reward = float(ARMS[arm] @ self.theta)
        return o


def balanced(theta, n):
    theta = np.asarray(theta, dtype=float)
    return [(k % 2, float(theta[k % 2])) for k in range(n)]


def test_identical_halves_do_not_alarm():
    half = [(0, 0.3), (1, -0.1), (0, 0.5), (1, 0.2)]
    assert not lcd(ARMS, 8, 1e-9, half + half, UNIFORM2)
    assert lcd_statistic(ARMS, half + half, UNIFORM2) == 0.0


def test_balanced_change_alarms():
    window = balanced([0.0, 0.0], 4) + balanced([0.5, 0.0], 4)
    assert lcd_statistic(ARMS, window, UNIFORM2) == pytest.approx(0.5)
    assert lcd(ARMS, 8, 0.2, window, UNIFORM2)
    assert not lcd(ARMS, 8, 0.6, window, UNIFORM2)


def test_lcd_uses_last_w_samples():
    old = balanced([0.9, 0.9], 6)
    window = old + balanced([0.1, 0.1], 8)
    assert not lcd(ARMS, 8, 0.05, window, UNIFORM2)


def test_lcd_rejects_bad_windows():
    with pytest.raises(ValueError):
        lcd(ARMS, 7, 0.1, balanced([0, 0], 8), UNIFORM2)
    with pytest.raises(ValueError):
        lcd(ARMS, 8, 0.1, balanced([0, 0], 6), UNIFORM2)
    with pytest.raises(ValueError):
        lcd_statistic(ARMS, balanced([0, 0], 5), UNIFORM2)


@settings(max_examples=200, deadline=None)
@given(
    theta=st.tuples(st.floats(-0.7, 0.7), st.floats(-0.7, 0.7)),
    arms=st.lists(st.integers(0, 2), min_size=1, max_size=30),
    perm_seed=st.integers(0, 2**32 - 1),
    b=st.floats(1e-6, 10.0),
)
def test_single_noiseless_context_never_alarms(theta, arms, perm_seed, b):
    X = np.array([[1.0, 0.0], [0.0, 1.0], [math.cos(PHI), math.sin(PHI)]])
    alloc = compute_g_optimal(X)
    y = X @ np.asarray(theta)
    first = [(a, float(y[a])) for a in arms]
    order = np.random.default_rng(perm_seed).permutation(len(first))
    second = [first[i] for i in order]
    assert not lcd(X, 2 * len(first), b, first + second, alloc)


def test_false_alarm_rate_on_stationary_noise():
    inst = make_example_5_1(2, PHI, schedule={"kind": "stationary"})
    alloc = compute_g_optimal(inst.arms)
    P = projection_matrix(inst.arms, alloc)
    w, windows, d_fae = 200, 10_000, 1e-3
    b = threshold_b(w, inst.d, d_fae)
    env = EnvState(inst, seed=2024)
    arm_u, noise, ctx, _ = env.block(w * windows)
    arms = np.searchsorted(alloc.cdf, arm_u, side="right")
    y = inst.means[arms, ctx] + noise
    contrib = P[:, arms] * y  # (K, n)
    halves = contrib.reshape(inst.K, windows, 2, w // 2).sum(axis=3)
    stat = np.abs(halves[:, :, 1] - halves[:, :, 0]).max(axis=0) / (w / 2)
    rate = np.mean(stat > b)
    budget = inst.K * d_fae
    assert rate <= budget + 3 * math.sqrt(budget / windows)
    # Cross-check the vectorised statistic against the module on a few windows.
    for k in (0, 17, windows - 1):
        sl = slice(k * w, (k + 1) * w)
        samples = list(zip(arms[sl].tolist(), y[sl].tolist()))
        assert lcd_statistic(inst.arms, samples, alloc) == pytest.approx(stat[k], rel=1e-9, abs=1e-12)


def test_cd_buffer():
    buf = CdBuffer()
    buf.append(1, 0.5)
    buf.t_cd = 3
    assert buf.samples == [(1, 0.5)]
    buf.clear()
    assert buf.samples == [] and buf.t_cd == float("inf")


def test_archive_indices_follow_insertion():
    arch = CaArchive()
    assert arch.add([(0, 1.0)]) == 1
    assert arch.add([(1, 2.0)]) == 2
    arch.set(1, [(1, 0.0)])
    assert list(arch) == [1, 2] and arch[1] == [(1, 0.0)]


def test_lca_matches_known_context():
    arch = CaArchive()
    arch.add(balanced([1.0, 0.0], 4))
    env = ScriptedEnv([1.0, 0.0])
    j, arch = lca(env, ARMS, 8, 0.2, arch, UNIFORM2)
    assert j == 1 and len(arch) == 1


def test_lca_opens_new_context():
    arch = CaArchive()
    arch.add(balanced([1.0, 0.0], 4))
    j, arch = lca(ScriptedEnv([0.0, 1.0]), ARMS, 8, 0.2, arch, UNIFORM2)
    assert j == 2 and len(arch) == 2
    assert arch[2] == balanced([0.0, 1.0], 4)


def test_lca_overflow_index_signals_failure():
    arch = CaArchive()
    arch.add(balanced([1.0, 0.0], 4))
    arch.add(balanced([0.0, 1.0], 4))
    j, _ = lca(ScriptedEnv([-1.0, -1.0]), ARMS, 8, 0.2, arch, UNIFORM2)
    assert j == 3  # N + 1 for an N = 2 instance


def test_lca_first_match_wins():
    arch = CaArchive()
    arch.add(balanced([0.5, 0.5], 4))
    arch.add(balanced([0.55, 0.5], 4))
    assert match(ARMS, 8, 0.2, balanced([0.52, 0.5], 4), arch, UNIFORM2) == 1


def test_archive_keeps_latest_alignment():
    arch = CaArchive()
    arch.add(balanced([0.5, 0.0], 4))
    env = ScriptedEnv([0.52, 0.0])
    lca(env, ARMS, 8, 0.2, arch, UNIFORM2)
    assert arch[1] == balanced([0.52, 0.0], 4)
    env.theta = np.array([0.54, 0.0])
    lca(env, ARMS, 8, 0.2, arch, UNIFORM2)
    assert arch[1] == balanced([0.54, 0.0], 4)


class NeverStops:
    def __init__(self):
        self.seen = []

    def update(self, arm, reward):
        self.seen.append((arm, reward))

    def check(self):
        return None


def test_lca_plus_without_stop_equals_lca():
    inst = make_example_5_1(2, PHI)
    alloc = compute_g_optimal(inst.arms)
    stored = [(k % 3, float(inst.means[k % 3, 0])) for k in range(20)]
    a1, a2 = CaArchive(), CaArchive()
    a1.add(stored)
    a2.add(stored)
    e1, e2 = EnvState(inst, 5), EnvState(inst, 5)
    j1, _ = lca(e1, inst.arms, 40, 0.9, a1, alloc)
    naive = NeverStops()
    j2, _, stop = lca_plus(e2, inst.arms, 40, 0.9, a2, alloc, naive)
    assert stop is None and j1 == j2
    assert a1[j1] == a2[j2] == naive.seen


def _pull(env, alloc):
    arm = sample_arm(alloc, env.arm_stream)
    return arm, env.step(arm).reward


def test_lca_plus_early_stop_one_pull_away():
    inst = single_context([1.0, 0.0], lmin=10, lmax=10)
    alloc = compute_g_optimal(inst.arms)
    oracle = NaiveState(inst.arms, alloc, eps=0.5, delta=0.05, L_max=10)
    env = EnvState(inst, seed=3)
    m = 0
    while True:
        oracle.update(*_pull(env, alloc))
        m += 1
        if oracle.check() is not None:
            break
    naive = NaiveState(inst.arms, alloc, eps=0.5, delta=0.05, L_max=10)
    env = EnvState(inst, seed=3)
    for _ in range(m - 1):
        naive.update(*_pull(env, alloc))
    assert naive.check() is None
    arch = CaArchive()
    arch.add(balanced([1.0, 0.0], 10))
    j, arch, stop = lca_plus(env, inst.arms, 20, 0.2, arch, alloc, naive)
    assert stop == 0
    assert j == 2 and len(arch[2]) == 1


def test_lca_plus_no_stop_before_warmup():
    inst = single_context([1.0, 0.0], lmin=10, lmax=10)
    alloc = compute_g_optimal(inst.arms)
    naive = NaiveState(inst.arms, alloc, eps=5.0, delta=0.05, L_max=10)
    assert naive.rho() == pytest.approx(10.0)
    w = 2 * int(naive.t_star // 2)
    arch = CaArchive()
    arch.add(balanced([1.0, 0.0], w // 2))
    j, _, stop = lca_plus(EnvState(inst, 1), inst.arms, w, 0.2, arch, alloc, naive)
    assert stop is None and naive.t == w // 2 < naive.t_star
    assert j == 1
