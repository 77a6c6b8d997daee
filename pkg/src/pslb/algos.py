"""Identification algorithms.

``run_nebai``, ``run_psebai`` and ``run_psebai_plus`` share one kernel
(:mod:`pslb._kernels`) and therefore one random stream: with the same seed the
three runs pull the same arms and observe the same rewards until one of them
stops.  ``run_debai`` and ``run_debai_beta`` observe contexts and changepoints
directly and never pull arms.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kn
from .bounds import C3, delta_fae, t_star, tau_star, threshold_b
from .design import compute_g_optimal
from .env import EnvState, delta_c
from .estimation import RADIUS_MODES, ZETA_MODES, ReversionDepthError

DEFAULT_STEP_CAP = 10**9
BLOCK = 1 << 16


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PSParams:
    """Tuning of the piecewise-stationary algorithms.

    Attributes:
        eps, delta: target accuracy and confidence.
        gamma: one CD sample every ``gamma`` steps.
        w: base window (even).  ``None`` means ``L_min / (3 gamma)`` rounded
            down to an even number.
        lcd_mult: window multiplier actually used by detection and alignment.
        b: explicit LCD threshold; ``None`` uses the false-alarm formula on the
            effective window.
        radius: ``"theory"`` or ``"tight"`` confidence radii.
        zeta: ``"mean"`` or ``"eps"`` centring of the radius.
        l_min, l_max: segment bounds assumed by the algorithm (``None`` takes
            the instance's).
        N: number of contexts assumed (``None`` takes the instance's).
        allow_violation: skip the detectability and window checks.
    """

    eps: float
    delta: float = 0.05
    gamma: int = 6
    w: int = None
    lcd_mult: int = 1
    b: float = None
    radius: str = "theory"
    zeta: str = "mean"
    l_min: int = None
    l_max: int = None
    N: int = None
    allow_violation: bool = False

    def __post_init__(self):
        if self.eps <= 0 or not 0 < self.delta < 1:
            raise ConfigError("need eps > 0 and delta in (0, 1)")
        if self.gamma < 2:
            raise ConfigError("gamma must be at least 2")
        if self.radius not in RADIUS_MODES or self.zeta not in ZETA_MODES:
            raise ConfigError("unknown radius or zeta mode")
        if self.w is not None and (self.w <= 0 or self.w % 2):
            raise ConfigError("w must be a positive even integer")
        if self.lcd_mult < 1:
            raise ConfigError("lcd_mult must be at least 1")


@dataclass
class Resolved:
    """Concrete constants for one (instance, params) pair."""

    N: int
    l_min: int
    l_max: int
    w: int
    w_eff: int
    b: float
    tau_star: float
    t_star: float
    feasible_b: bool
    feasible_w: bool


def resolve(instance, params):
    N = params.N or instance.N
    l_min = params.l_min or instance.lmin
    l_max = params.l_max or instance.lmax
    w = params.w if params.w is not None else (l_min // (3 * params.gamma)) // 2 * 2
    if w < 2:
        raise ConfigError("window is too small; increase L_min or lower gamma")
    w_eff = w * params.lcd_mult
    tau = tau_star(N, instance.K, l_max, params.eps, params.delta)
    b = params.b
    if b is None:
        b = threshold_b(w_eff, instance.d, delta_fae(params.gamma, params.delta, tau, instance.K))
    ok_b = 2 * b <= delta_c(instance) if instance.N > 1 else True
    ok_w = 3 * w * params.gamma <= l_min
    if not params.allow_violation and not (ok_b and ok_w):
        raise ConfigError(
            f"detectability assumption violated: 2b={2 * b:.4g} vs Delta_c={delta_c(instance):.4g}, "
            f"3 w gamma={3 * w * params.gamma} vs L_min={l_min}"
        )
    return Resolved(N, l_min, l_max, w, w_eff, float(b), tau, t_star(instance.d, instance.K, params.delta),
                    ok_b, ok_w)


def min_exploration(N, L_max, delta):
    """Smallest S with ``S >= (2 L_max / 9) ln(2 / delta_d(S))``."""
    a = 2.0 * L_max / 9.0
    c = math.log(30.0 * N / delta)
    S = max(1.0, math.ceil(a * c))
    while True:
        nxt = math.ceil(a * (c + 3.0 * math.log(S)))
        if nxt <= S:
            break
        S = nxt
    while S > 1 and S - 1 >= a * (c + 3.0 * math.log(S - 1)):
        S -= 1
    return int(S)


@dataclass
class AlgoResult:
    """Outcome of one run.

    ``arm`` is ``None`` on failure.  ``status`` is one of ``"stop_ps"``,
    ``"stop_naive"``, ``"stop"`` (full-information algorithms),
    ``"context_overflow"``, ``"tau_cap"`` or ``"step_cap"``.  On a step cap the
    arm is the current empirical leader and ``cap_hit`` is set.
    """

    algorithm: str
    arm: object
    tau: int
    S: int
    segments: int
    status: str
    cap_hit: bool = False
    phases: dict = field(default_factory=dict)
    events: list = field(default_factory=list)
    n_alarms: int = 0
    shadow_checks: int = 0
    shadow_mismatches: int = 0
    trace: np.ndarray = None

    @property
    def failed(self):
        return self.arm is None


_STATUS = {
    kn.DONE_PS: "stop_ps",
    kn.DONE_NAIVE: "stop_naive",
    kn.FAIL_N1: "context_overflow",
    kn.FAIL_TAU: "tau_cap",
    kn.STEP_CAP: "step_cap",
}


class NaiveState:
    """Running mean over all pulls with the naive stopping test.

    ``update`` feeds one pull; ``check`` returns the recommended arm once the
    test passes and ``None`` before (always ``None`` before ``t*``).
    """

    def __init__(self, arms, allocation, eps, delta, L_max):
        self.X = np.atleast_2d(np.asarray(arms, dtype=float))
        self.G = self.X @ allocation.info_inverse
        self.eps, self.delta, self.L_max = eps, delta, L_max
        self.t_star = t_star(self.X.shape[1], self.X.shape[0], delta)
        self.sum = np.zeros(self.X.shape[1])
        self.t = 0
        self._q = np.empty(self.X.shape[0])

    @property
    def theta(self):
        return self.sum / max(self.t, 1)

    def rho(self):
        if self.t < self.t_star:
            return 2.0 * self.eps
        K, d = self.X.shape
        return kn.naive_radius(float(self.t), K, d, self.L_max, self.delta, C3)

    def update(self, arm, reward):
        self.sum += self.G[arm] * reward
        self.t += 1

    def leader(self):
        return int(np.argmax(self.X @ self.theta))

    def check(self):
        if self.t < self.t_star:
            return None
        top, gap, rho = kn.naive_eval(self.sum, float(self.t), self.X, self.L_max, self.delta, C3, self._q)
        return int(top) if gap - 2.0 * rho + self.eps >= 0.0 else None


class _Run:
    """Array state of one kernel run."""

    def __init__(self, instance, allocation, params, res, run_ps, run_naive, max_steps, shadow, trace):
        K, d = instance.K, instance.d
        N = res.N
        X = instance.arms
        self.X = np.ascontiguousarray(X)
        self.G = np.ascontiguousarray(X @ allocation.info_inverse)
        self.P = np.ascontiguousarray(X @ allocation.info_inverse @ X.T)
        self.cdf = np.ascontiguousarray(allocation.cdf)
        self.M = np.ascontiguousarray(instance.means)
        w = res.w_eff
        self.icfg = np.zeros(kn.N_ICFG, dtype=np.int64)
        self.icfg[kn.C_K] = K
        self.icfg[kn.C_D] = d
        self.icfg[kn.C_N] = N
        self.icfg[kn.C_W] = w
        self.icfg[kn.C_GAMMA] = params.gamma
        self.icfg[kn.C_TIGHT] = params.radius == "tight"
        self.icfg[kn.C_EPSZETA] = params.zeta == "eps"
        self.icfg[kn.C_RUNPS] = run_ps
        self.icfg[kn.C_RUNNAIVE] = run_naive
        self.icfg[kn.C_SHADOW] = shadow
        self.icfg[kn.C_SMIN] = min_exploration(N, res.l_max, params.delta)
        self.icfg[kn.C_MAXSTEPS] = max_steps
        cbound = float(np.abs(self.P).max() * (np.abs(self.M).max() + 1.0))
        self.fcfg = np.array([params.eps, params.delta, float(res.l_max), res.b, res.tau_star,
                              math.ceil(res.t_star), C3, cbound])
        self.ist = np.zeros(kn.N_IST, dtype=np.int64)
        self.ist[kn.I_TCD] = -1
        self.ist[kn.I_PSACT] = 1 if run_ps else 0
        self.ist[kn.I_REC] = -1
        self.ist[kn.I_RESULT] = -1
        self.u = np.zeros((N, d))
        self.T = np.zeros(N)
        cap = w * (params.gamma + 1) // 2
        self.ring_ctx = np.full(cap, -1, dtype=np.int64)
        self.ring_u = np.zeros((cap, d))
        self.meta = np.zeros(2, dtype=np.int64)
        self.cd_arm = np.zeros(w, dtype=np.int64)
        self.cd_y = np.zeros(w)
        self.h1 = np.zeros(K)
        self.h2 = np.zeros(K)
        self.arch = np.zeros((N + 1, K))
        self.nsum = np.zeros(d)
        self.ev = np.zeros((256, 3), dtype=np.int64)
        self.tr = np.zeros((int(trace), 2))
        self.sh_u = np.zeros((cap if shadow else 1, N, d))
        self.sh_T = np.zeros((cap if shadow else 1, N))
        self.beta = np.zeros(N)
        self.dj = np.zeros(N)
        self.Mh = np.zeros((K, N))
        self.q = np.zeros(K)
        self.hnew = np.zeros(K)

    def drive(self, env):
        reserve = int(self.icfg[kn.C_W]) // 2 + 1
        n = max(BLOCK, 4 * reserve)
        while True:
            arm_u, noise, ctx, _ = env.block(n)
            self.ist[kn.I_POS] = 0
            status = kn.run_block(
                self.X, self.G, self.P, self.cdf, self.M, arm_u, noise, ctx, n, self.icfg, self.fcfg,
                self.ist, self.u, self.T, self.ring_ctx, self.ring_u, self.meta, self.cd_arm, self.cd_y,
                self.h1, self.h2, self.arch, self.nsum, self.ev, self.tr, self.sh_u, self.sh_T,
                self.beta, self.dj, self.Mh, self.q, self.hnew,
            )
            env.advance(int(self.ist[kn.I_POS]))
            if status == kn.NEED_DATA:
                continue
            if status == kn.LOG_FULL:
                self.ev = np.concatenate([self.ev, np.zeros_like(self.ev)])
                continue
            return int(status)

    def events(self):
        return [(kn.EVENT_NAMES[int(k)], int(t), int(v)) for k, t, v in self.ev[: self.ist[kn.I_EVN]]]


def _kernel_run(name, instance, params, seed, run_ps, run_naive, *, env=None, allocation=None,
                schedule_seed=None, max_steps=DEFAULT_STEP_CAP, shadow=False, trace=0):
    allocation = allocation or compute_g_optimal(instance.arms)
    res = resolve(instance, params)
    env = env or EnvState(instance, seed, schedule_seed)
    run = _Run(instance, allocation, params, res, run_ps, run_naive, max_steps, shadow, trace)
    status = run.drive(env)
    if status == kn.ERR_DEPTH:
        raise ReversionDepthError("undo log shorter than the reversion depth")
    ist = run.ist
    tau = int(ist[kn.I_T])
    arm = int(ist[kn.I_RESULT]) if status in (kn.DONE_PS, kn.DONE_NAIVE) else None
    cap = status == kn.STEP_CAP
    if cap:
        if run_naive:
            arm = int(np.argmax(run.X @ run.nsum))
        elif run.T.sum() > 0:
            arm = int(np.argmax(run.X @ run.u.sum(axis=0)))
    return AlgoResult(
        algorithm=name,
        arm=arm,
        tau=tau,
        S=int(run.T.sum()),
        segments=env.schedule.segments_seen(max(tau, 1)),
        status=_STATUS[status],
        cap_hit=cap,
        phases={"exp": int(ist[kn.I_NEXP]), "cd": int(ist[kn.I_NCD]), "ca": int(ist[kn.I_NCAS])},
        events=run.events(),
        n_alarms=int(ist[kn.I_NALARM]),
        shadow_checks=int(ist[kn.I_SHCHK]),
        shadow_mismatches=int(ist[kn.I_SHBAD]),
        trace=run.tr[: ist[kn.I_TRN]].copy() if trace else None,
    )


def run_nebai(instance, eps, delta, seed, *, l_max=None, **kw):
    """Naive eps-BAI: G-optimal sampling, stop on the running-mean test."""
    params = PSParams(eps=eps, delta=delta, l_max=l_max, allow_violation=True, w=2)
    return _kernel_run("nebai", instance, params, seed, False, True, **kw)


def run_psebai(instance, params, seed, **kw):
    """Piecewise-stationary eps-BAI with change detection and alignment."""
    return _kernel_run("psebai", instance, params, seed, True, False, **kw)


def run_psebai_plus(instance, params, seed, **kw):
    """Piecewise-stationary eps-BAI with the naive test run on the same stream."""
    return _kernel_run("psebai_plus", instance, params, seed, True, True, **kw)


def _full_info_check(dynamics):
    if dynamics != "full_info":
        from .env import DynamicsError

        raise DynamicsError("this algorithm needs full-information dynamics")


def run_debai(instance, eps, delta, seed, *, schedule_seed=None, max_steps=DEFAULT_STEP_CAP,
              dynamics="full_info", env=None):
    """Full-information baseline with segment-count frequencies.

    Stopping is checked at changepoints only; every quantity it uses is
    constant between changepoints.
    """
    _full_info_check(dynamics)
    env = env or EnvState(instance, seed, schedule_seed)
    sch = env.schedule
    M = np.ascontiguousarray(instance.means)
    counts = np.zeros(instance.N)
    ist = np.zeros(5, dtype=np.int64)
    horizon = 1
    while True:
        sch.ensure(horizon)
        nseg = sch.starts.size
        status = kn.debai_segments(M, sch.starts, sch.contexts, nseg, counts, ist, eps, delta, C3, max_steps)
        if status != kn.NEED_DATA:
            break
        if sch._end > max_steps:
            status = kn.STEP_CAP
            break
        horizon = int(sch._end) + 1
    if status == kn.STEP_CAP:
        arm = int(np.argmax(M @ counts))
        l = int(ist[0])
        return AlgoResult("debai", arm, int(max_steps), 0, l, "step_cap", cap_hit=True)
    return AlgoResult("debai", int(ist[3]), int(ist[2]), 0, int(ist[4]), "stop")


def run_debai_beta(instance, eps, delta, seed, *, schedule_seed=None, l_max=None,
                   max_steps=DEFAULT_STEP_CAP, dynamics="full_info", env=None):
    """Full-information baseline with time-weighted frequencies, checked every step."""
    _full_info_check(dynamics)
    env = env or EnvState(instance, seed, schedule_seed)
    sch = env.schedule
    M = np.ascontiguousarray(instance.means)
    counts = np.zeros(instance.N)
    beta = np.zeros(instance.N)
    ist = np.zeros(6, dtype=np.int64)
    L = float(l_max or instance.lmax)
    horizon = 1
    while True:
        sch.ensure(horizon)
        starts = np.concatenate([sch.starts, [sch._end]])
        nseg = sch.starts.size
        status = kn.debai_beta_steps(M, starts, sch.contexts, nseg, counts, ist, eps, delta, C3, L,
                                     max_steps, beta)
        if status != kn.NEED_DATA:
            break
        horizon = int(sch._end) + 1
    if status == kn.STEP_CAP:
        arm = int(np.argmax(M @ counts))
        return AlgoResult("debai_beta", arm, int(max_steps), 0, sch.segments_seen(int(max_steps)),
                          "step_cap", cap_hit=True)
    return AlgoResult("debai_beta", int(ist[3]), int(ist[2]), 0, int(ist[4]), "stop")


ALGORITHMS = ("nebai", "psebai", "psebai_plus", "debai", "debai_beta")
