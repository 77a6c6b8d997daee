import math

import numpy as np
import pytest

from pslb.algos import (
    ConfigError,
    NaiveState,
    PSParams,
    min_exploration,
    resolve,
    run_debai,
    run_debai_beta,
    run_nebai,
    run_psebai,
    run_psebai_plus,
)
from pslb.design import compute_g_optimal
from pslb.env import DynamicsError, Instance, NoiseModel, Schedule, eps_best_set, make_example_5_1
from pslb.estimation import forced_exploration_ok
from pslb.rng import Stream

from .conftest import PHI, single_context
from .oracles import naive_radius, naive_t_star

PROFILE = dict(delta=0.05, gamma=6, w=166, lcd_mult=3, b=0.5, radius="tight", allow_violation=True)


def profile_params(eps, **kw):
    return PSParams(eps=eps, **{**PROFILE, **kw})


def naive_scan_oracle(seed, eps, L, delta, horizon):
    """Replay the arm stream and return the first t >= t* passing the naive test.

    Instance: one noiseless context theta = (1, 0), arms e1 and e2, uniform design.
    The running estimate is (2 n1 / t, 0), so the test reads 2 n1 / t - 2 rho_t + eps >= 0.
    """
    u = Stream(seed, "arms").take(horizon)
    n1 = np.cumsum(u < 0.5)
    t = np.arange(1, horizon + 1, dtype=float)
    lead = np.abs(2 * n1 / t)
    rho = np.array([naive_radius(x, 2, 2, L, delta) for x in t])
    ok = (t >= math.ceil(naive_t_star(2, 2, delta))) & (lead - 2 * rho + eps >= 0)
    hits = np.flatnonzero(ok)
    return int(hits[0]) + 1 if hits.size else None


def test_nebai_matches_scan_oracle():
    inst = single_context([1.0, 0.0], lmin=100, lmax=100)
    for seed in (0, 1, 2):
        r = run_nebai(inst, 0.5, 0.05, seed, l_max=100)
        expected = naive_scan_oracle(seed, 0.5, 100, 0.05, 200_000)
        assert r.status == "stop_naive"
        assert r.arm == 0
        assert r.tau == expected


def test_nebai_large_eps_stops_early():
    inst = single_context([1.0, 0.0], lmin=100, lmax=100)
    r = run_nebai(inst, 2.0, 0.05, 4, l_max=100)
    first = next(t for t in range(1, 10**6) if naive_radius(t, 2, 2, 100, 0.05) <= 1.0)
    assert r.tau <= first
    assert r.tau >= math.ceil(naive_t_star(2, 2, 0.05))


def test_nebai_is_deterministic(ex51):
    a = run_nebai(ex51, 0.6, 0.05, 42)
    b = run_nebai(ex51, 0.6, 0.05, 42)
    assert (a.tau, a.arm) == (b.tau, b.arm)
    assert run_nebai(ex51, 0.6, 0.05, 43).tau != a.tau


def test_nebai_step_cap_reports_leader(ex51):
    r = run_nebai(ex51, 0.1, 0.05, 1, max_steps=100_000)
    assert r.cap_hit and r.status == "step_cap" and r.tau == 100_000
    assert r.arm in (0, 2)


def test_naive_state_warmup_sentinel(ex51):
    alloc = compute_g_optimal(ex51.arms)
    s = NaiveState(ex51.arms, alloc, eps=0.2, delta=0.05, L_max=5000)
    assert s.t_star == pytest.approx(naive_t_star(2, 3, 0.05))
    s.update(0, 1.0)
    assert s.rho() == 0.4 and s.check() is None
    s.t = 10**6
    assert s.rho() == pytest.approx(naive_radius(10**6, 3, 2, 5000, 0.05))


def test_min_exploration_is_the_forced_threshold():
    for N, L in [(1, 100), (2, 5000), (6, 3000)]:
        S = min_exploration(N, L, 0.05)
        assert forced_exploration_ok(S, N, L, 0.05)
        assert not forced_exploration_ok(S - 1, N, L, 0.05)


def test_resolve_defaults_and_checks(ex51):
    res = resolve(ex51, PSParams(eps=0.1, allow_violation=True))
    assert res.w == 166 and res.w_eff == 166
    assert not res.feasible_b and res.feasible_w
    with pytest.raises(ConfigError, match="detectability"):
        resolve(ex51, PSParams(eps=0.1))
    with pytest.raises(ConfigError):
        PSParams(eps=0.1, w=7)
    with pytest.raises(ConfigError):
        PSParams(eps=0.1, gamma=1)


def test_psebai_noiseless_example(ex51_noiseless):
    p = profile_params(0.3)
    r = run_psebai(ex51_noiseless, p, 7)
    assert r.status == "stop_ps"
    assert r.arm in eps_best_set(ex51_noiseless, 0.3)
    assert r.tau < resolve(ex51_noiseless, p).tau_star
    assert r.tau >= r.S
    assert r.tau <= 4 * r.S


@pytest.mark.parametrize("seed", range(3))
def test_psebai_phase_accounting(ex51, seed):
    r = run_psebai(ex51, profile_params(0.4), seed)
    assert r.status == "stop_ps"
    assert r.S <= r.tau <= 4 * r.S
    assert r.phases["exp"] >= r.S  # reverted Exp samples stay counted
    assert r.phases["exp"] + r.phases["cd"] + r.phases["ca"] == r.tau


def test_single_context_raises_no_alarms():
    inst = make_example_5_1(2, PHI)
    one = Instance(inst.arms, inst.thetas[:, :1], [1.0], inst.lmin, inst.lmax, name="one context")
    p = PSParams(eps=0.1, delta=0.05, allow_violation=True)  # formula threshold
    for seed in range(20):
        r = run_psebai(one, p, seed, max_steps=2_000_000)
        assert r.n_alarms == 0
        assert not any(k == "alarm" for k, _, _ in r.events)


def test_forced_cancellation_of_recorded_arm():
    """A change right after a record must cancel the pending recommendation."""
    seed = 1
    p = profile_params(0.3)
    base = make_example_5_1(2, PHI, noise=NoiseModel("none"))
    first = run_psebai(base, p, seed)
    t_rec = next(t for k, t, _ in first.events if k == "record")
    sch = Schedule(base, seed)
    sch.ensure(t_rec + 1)
    k = int(np.searchsorted(sch.starts, t_rec, side="right")) - 1
    assert sch.contexts[k] != sch.contexts[k + 1]
    lengths = np.diff(sch.starts[: k + 1]).tolist() + [t_rec - int(sch.starts[k]) + 1, 5000]
    split = make_example_5_1(2, PHI, lmin=1, lmax=5000, noise=NoiseModel("none"),
                             schedule={"kind": "fixed", "lengths": lengths})
    r = run_psebai(split, profile_params(0.3, l_min=3000, l_max=5000), seed)
    kinds = [k for k, t, _ in r.events if t >= t_rec]
    assert kinds[:3] == ["record", "alarm", "cancel"]
    assert kinds.index("record", 1) > kinds.index("cancel")
    assert r.status == "stop_ps" and r.arm in eps_best_set(split, 0.3)


def test_shadow_snapshots_match_after_every_alignment(ex51):
    r = run_psebai(ex51, profile_params(0.4), 3, shadow=True)
    assert r.shadow_checks == r.n_alarms > 0
    assert r.shadow_mismatches == 0


def test_plus_shares_the_stream_with_psebai(ex51):
    for seed in range(3):
        a = run_psebai(ex51, profile_params(0.4), seed, trace=400_000)
        b = run_psebai_plus(ex51, profile_params(0.4), seed, trace=400_000)
        n = min(len(a.trace), len(b.trace))
        assert n > 0
        np.testing.assert_array_equal(a.trace[:n], b.trace[:n])
        if b.status == "stop_ps":
            assert (a.arm, a.tau, a.S) == (b.arm, b.tau, b.S)


def three_context_instance():
    """Arms e1, e2 with three well-separated noiseless contexts."""
    return Instance(
        arms=np.eye(2),
        thetas=np.array([[0.9, 0.0, -0.5], [0.0, 0.9, -0.9]]),
        probs=np.full(3, 1 / 3),
        lmin=1000,
        lmax=1000,
        noise=NoiseModel("none"),
    )


def test_context_overflow_fails_psebai_and_plus_falls_back():
    inst = three_context_instance()
    p = PSParams(eps=0.5, delta=0.05, gamma=6, w=54, b=0.5, N=2, allow_violation=True)
    r = run_psebai(inst, p, 0)
    assert r.status == "context_overflow" and r.failed
    assert ("context_overflow", r.tau, 3) in r.events
    plus = run_psebai_plus(inst, p, 0)
    assert plus.status == "stop_naive"
    assert plus.arm in eps_best_set(inst, 0.5)
    assert plus.tau > r.tau


def test_debai_needs_full_information(ex51):
    with pytest.raises(DynamicsError):
        run_debai(ex51, 0.1, 0.05, 0, dynamics="hidden")
    with pytest.raises(DynamicsError):
        run_debai_beta(ex51, 0.1, 0.05, 0, dynamics="index_revealed")


def test_debai_single_context_stops_at_first_changepoint():
    # With N = 1 the centred radius is identically zero, so the first check passes.
    inst = make_example_5_1(2, PHI)
    one = Instance(inst.arms, inst.thetas[:, :1], [1.0], inst.lmin, inst.lmax)
    r = run_debai(one, 0.01, 0.05, 0, max_steps=2_000_000)
    assert (r.status, r.tau, r.segments, r.arm) == ("stop", 1, 1, 2)


def test_debai_without_changepoints_hits_the_cap():
    inst = make_example_5_1(2, PHI, schedule={"kind": "stationary"})
    r = run_debai(inst, 0.1, 0.05, 0, max_steps=2_000_000)
    assert r.cap_hit and r.status == "step_cap" and r.tau == 2_000_000


def test_segment_frequencies_concentrate(ex51):
    hits = 0
    for seed in range(100):
        sch = Schedule(ex51, seed)
        sch.ensure(1000 * 5000)
        hits += abs(np.mean(sch.contexts[:1000] == 0) - 0.5) <= 0.05
    assert hits >= 95


def test_per_context_gaps_of_example(ex51):
    dj = ex51.means[0] - ex51.means[2]
    np.testing.assert_allclose(dj, [math.cos(PHI) - 1, math.cos(PHI) - math.cos(2 * PHI)], atol=1e-12)
    np.testing.assert_allclose(dj, [-0.0761, 0.2168], atol=1e-4)


@pytest.mark.parametrize("runner", [run_debai, run_debai_beta])
def test_full_information_baselines_are_correct(ex51, runner):
    for seed in range(20):
        r = runner(ex51, 0.1, 0.05, seed)
        assert r.status == "stop" and not r.cap_hit
        assert r.arm in eps_best_set(ex51, 0.1)
        assert r.segments >= 1 and r.S == 0


def test_debai_stops_at_changepoints(ex51):
    for seed in range(5):
        r = run_debai(ex51, 0.05, 0.05, seed)
        sch = Schedule(ex51, seed)
        sch.ensure(r.tau + 1)
        assert r.tau in set(sch.starts.tolist())
