"""Piecewise-stationary linear bandit environment.

An instance is ``(arms, thetas, probs, schedule, noise)``.  Time starts at 1;
segment ``l`` starts at ``c_l`` (``c_1 = 1``) and lasts ``L_l`` steps, and at every
segment start a context ``j`` is drawn i.i.d. from ``probs``.  Pulling arm ``x``
at time ``t`` returns ``x^T theta_{j_t} + eta_t`` with zero-mean noise on [-1, 1].

Randomness comes from four named Philox streams (see :mod:`pslb.rng`).  The
segment and context streams may be keyed by a different seed than the arm and
noise streams, so several algorithms can face the same changepoint sequence.
"""

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .rng import Stream

DYNAMICS = ("hidden", "index_revealed", "full_info")


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean noise supported on [-1, 1].

    ``kind`` is ``"uniform"``, ``"clipped_gaussian"`` (Gaussian with scale
    ``sigma`` truncated to [-1, 1]) or ``"none"``.  Each sample uses one uniform.
    """

    kind: str = "uniform"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "clipped_gaussian", "none"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "clipped_gaussian" and not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def transform(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return 2.0 * u - 1.0
        if self.kind == "none":
            return np.zeros_like(u)
        lo = ndtr(-1.0 / self.sigma)
        hi = ndtr(1.0 / self.sigma)
        return np.clip(self.sigma * ndtri(lo + u * (hi - lo)), -1.0, 1.0)

    def to_dict(self):
        if self.kind == "clipped_gaussian":
            return {"kind": self.kind, "sigma": self.sigma}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            return cls(d)
        return cls(d.get("kind", "uniform"), float(d.get("sigma", 1.0)))


@dataclass
class Instance:
    """A PSLB instance.

    Attributes:
        arms: (K, d) arm vectors.
        thetas: (d, N) latent vectors, one column per context.
        probs: (N,) context distribution.
        lmin, lmax: segment length bounds.
        schedule: ``{"kind": "two_point", "p_min": 0.8}`` (length ``lmin`` w.p.
            ``p_min``, else ``lmax``), ``{"kind": "fixed", "lengths": [...]}``
            (cycled) or ``{"kind": "stationary"}`` (a single endless segment).
        noise: noise model.
    """

    arms: np.ndarray
    thetas: np.ndarray
    probs: np.ndarray
    lmin: int
    lmax: int
    schedule: dict = field(default_factory=lambda: {"kind": "two_point", "p_min": 0.8})
    noise: NoiseModel = field(default_factory=NoiseModel)
    name: str = ""

    def __post_init__(self):
        self.arms = np.atleast_2d(np.asarray(self.arms, dtype=float))
        self.thetas = np.asarray(self.thetas, dtype=float)
        if self.thetas.ndim == 1:
            self.thetas = self.thetas[:, None]
        self.probs = np.atleast_1d(np.asarray(self.probs, dtype=float))
        self.lmin, self.lmax = int(self.lmin), int(self.lmax)
        if isinstance(self.noise, (dict, str)):
            self.noise = NoiseModel.from_dict(self.noise)
        self.validate()

    @property
    def K(self):
        return self.arms.shape[0]

    @property
    def d(self):
        return self.arms.shape[1]

    @property
    def N(self):
        return self.thetas.shape[1]

    def validate(self):
        K, d = self.arms.shape
        if self.thetas.shape[0] != d:
            raise ValueError("thetas must have one row per arm dimension")
        if self.probs.shape != (self.N,):
            raise ValueError("probs must have one entry per context")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be a probability vector")
        if np.linalg.matrix_rank(self.arms) < d:
            raise ValueError("arms do not span R^d")
        if np.abs(self.means).max() > 1.0 + 1e-12:
            raise ValueError("instance is not normalised: |x^T theta| > 1")
        if not 1 <= self.lmin <= self.lmax:
            raise ValueError("need 1 <= lmin <= lmax")
        kind = self.schedule.get("kind")
        if kind == "two_point":
            if not 0.0 <= float(self.schedule.get("p_min", 0.8)) <= 1.0:
                raise ValueError("p_min must lie in [0, 1]")
        elif kind == "fixed":
            lengths = list(self.schedule.get("lengths", []))
            if not lengths or any(not self.lmin <= int(v) <= self.lmax for v in lengths):
                raise ValueError("fixed lengths must be nonempty and within [lmin, lmax]")
        elif kind != "stationary":
            raise ValueError(f"unknown schedule kind {kind!r}")

    @property
    def means(self):
        """(K, N) table of ``x_k^T theta_j``."""
        return self.arms @ self.thetas

    def to_dict(self):
        return {
            "name": self.name,
            "arms": self.arms.tolist(),
            "thetas": self.thetas.tolist(),
            "probs": self.probs.tolist(),
            "lmin": self.lmin,
            "lmax": self.lmax,
            "schedule": dict(self.schedule),
            "noise": self.noise.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            arms=d["arms"],
            thetas=d["thetas"],
            probs=d["probs"],
            lmin=d["lmin"],
            lmax=d["lmax"],
            schedule=dict(d.get("schedule", {"kind": "two_point", "p_min": 0.8})),
            noise=NoiseModel.from_dict(d.get("noise", {"kind": "uniform"})),
            name=d.get("name", ""),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def expected_returns(instance):
    return instance.means @ instance.probs


def expected_return(instance, arm_index):
    return float(expected_returns(instance)[arm_index])


def best_arm(instance):
    """Minimal-index maximiser of the expected return."""
    return int(np.argmax(expected_returns(instance)))


def eps_best_set(instance, epsilon):
    mu = expected_returns(instance)
    return set(np.flatnonzero(mu >= mu.max() - epsilon).tolist())


def delta_min(instance):
    """Smallest positive gap ``mu* - mu_x`` (``inf`` when every arm is optimal)."""
    mu = expected_returns(instance)
    gaps = mu.max() - mu
    gaps = gaps[gaps > 0]
    return float(gaps.min()) if gaps.size else math.inf


def delta_c(instance):
    """Min over distinct context pairs of ``max_x |x^T (theta_j - theta_k)|``."""
    M = instance.means
    best = math.inf
    for j in range(instance.N):
        for k in range(j + 1, instance.N):
            gap = float(np.abs(M[:, j] - M[:, k]).max())
            if gap > 0:
                best = min(best, gap)
            elif not np.array_equal(instance.thetas[:, j], instance.thetas[:, k]):
                best = 0.0
    return best if best < math.inf else 0.0


def make_example_5_1(d, phi, lmin=3000, lmax=5000, noise=None, schedule=None):
    """Benchmark with ``2d - 1`` arms and ``2d - 2`` equally likely contexts.

    Arms: ``e_1``, ``e_i`` and ``e_1 cos(phi) + e_i sin(phi)`` for ``i = 2..d``.
    Contexts: ``e_1 cos(phi) +/- e_{i} sin(phi)`` for ``i = 2..d``.
    """
    if d < 2 or not 0 <= phi < math.pi / 4:
        raise ValueError("need d >= 2 and phi in [0, pi/4)")
    eye = np.eye(d)
    c, s = math.cos(phi), math.sin(phi)
    arms = [eye[0]] + [eye[i] for i in range(1, d)] + [c * eye[0] + s * eye[i] for i in range(1, d)]
    thetas = []
    for i in range(1, d):
        thetas.append(c * eye[0] + s * eye[i])
        thetas.append(c * eye[0] - s * eye[i])
    N = len(thetas)
    inst = Instance(
        arms=np.array(arms),
        thetas=np.array(thetas).T,
        probs=np.full(N, 1.0 / N),
        lmin=lmin,
        lmax=lmax,
        schedule=schedule or {"kind": "two_point", "p_min": 0.8},
        noise=noise or NoiseModel(),
        name=f"example_5_1(d={d}, phi={phi:.6g})",
    )
    if delta_c(inst) == 0.0:
        warnings.warn("contexts are indistinguishable (Delta_c = 0)", stacklevel=2)
    return inst


def make_example_I_2(d, a, b, p, lmin=3000, lmax=5000, noise=None, schedule=None, eps=None):
    """Benchmark with arms ``e_1..e_d`` and ``N = d`` contexts.

    ``theta_1 = a e_1``; for ``j >= 2``, ``theta_j = (a, b, ..., b) - b e_j``.
    Context 1 has probability ``1 - (N - 1) p`` and the others ``p`` each.
    """
    N = d
    if not (0 < a < b <= 1 and 0 < p and (N - 1) * p < 1):
        raise ValueError("need 0 < a < b <= 1 and 0 < (N - 1) p < 1")
    if eps is not None:
        if not (a > eps and b - a > eps):
            raise ValueError("need a > eps and b - a > eps")
        if N > 2 and not p < (a - eps) / ((N - 2) * b):
            raise ValueError("p too large for this eps")
    thetas = np.zeros((d, N))
    thetas[0, 0] = a
    for j in range(1, N):
        thetas[:, j] = b
        thetas[0, j] = a
        thetas[j, j] = 0.0
    probs = np.full(N, p)
    probs[0] = 1.0 - (N - 1) * p
    return Instance(
        arms=np.eye(d),
        thetas=thetas,
        probs=probs,
        lmin=lmin,
        lmax=lmax,
        schedule=schedule or {"kind": "two_point", "p_min": 0.8},
        noise=noise or NoiseModel(),
        name=f"example_I_2(d={d}, a={a}, b={b}, p={p})",
    )


@dataclass(frozen=True)
class Observation:
    reward: float
    context: int = None
    theta: np.ndarray = None
    changepoint: bool = None


class Schedule:
    """Lazily generated segment starts and contexts (0-based context ids)."""

    _CHUNK = 1024

    def __init__(self, instance, seed):
        self.instance = instance
        self._seg = Stream(seed, "segments")
        self._ctx = Stream(seed, "contexts")
        cum = np.cumsum(instance.probs)
        cum[np.flatnonzero(instance.probs > 0)[-1]:] = 1.0
        self._cum = cum
        self._fixed_pos = 0
        self.starts = np.array([1], dtype=np.int64)
        self.contexts = self._draw_contexts(1)
        self._end = 1 + self._draw_lengths(1)[0]

    def _draw_lengths(self, n):
        sched = self.instance.schedule
        kind = sched["kind"]
        if kind == "stationary":
            return np.full(n, np.iinfo(np.int64).max // 4, dtype=np.int64)
        if kind == "fixed":
            lengths = np.asarray(sched["lengths"], dtype=np.int64)
            idx = (self._fixed_pos + np.arange(n)) % lengths.size
            self._fixed_pos += n
            return lengths[idx]
        u = self._seg.take(n)
        p_min = float(sched.get("p_min", 0.8))
        return np.where(u < p_min, self.instance.lmin, self.instance.lmax).astype(np.int64)

    def _draw_contexts(self, n):
        u = self._ctx.take(n)
        return np.searchsorted(self._cum, u, side="right").astype(np.int64)

    def ensure(self, t):
        """Generate segments until time ``t`` is covered."""
        while self._end <= t:
            lengths = self._draw_lengths(self._CHUNK)
            new_starts = self._end + np.concatenate([[0], np.cumsum(lengths[:-1])])
            self.starts = np.concatenate([self.starts, new_starts])
            self.contexts = np.concatenate([self.contexts, self._draw_contexts(self._CHUNK)])
            self._end = int(new_starts[-1] + lengths[-1])

    def segment_index(self, times):
        """0-based segment index of each (1-based) time."""
        times = np.asarray(times, dtype=np.int64)
        self.ensure(int(times.max()) if times.size else 1)
        return np.searchsorted(self.starts, times, side="right") - 1

    def context_at(self, times):
        seg = self.segment_index(times)  # may extend self.contexts
        return self.contexts[seg]

    def segments_seen(self, t):
        """Number of segments that started at or before time ``t``."""
        return int(self.segment_index(np.array([t]))[0]) + 1


class EnvState:
    """Single-owner environment cursor.

    ``seed`` keys the arm and noise streams; ``schedule_seed`` (defaults to
    ``seed``) keys segment lengths and context draws.
    """

    def __init__(self, instance, seed, schedule_seed=None):
        self.instance = instance
        self.seed = int(seed)
        self.schedule = Schedule(instance, self.seed if schedule_seed is None else schedule_seed)
        self.arm_stream = Stream(self.seed, "arms")
        self.noise_stream = Stream(self.seed, "noise")
        self.t = 0
        self._means = instance.means

    @property
    def current_context(self):
        return int(self.schedule.context_at([max(self.t, 1)])[0])

    @property
    def segment_index(self):
        return self.schedule.segments_seen(max(self.t, 1))

    @property
    def next_changepoint(self):
        """Start time of the first segment beginning after ``t``."""
        l = self.schedule.segments_seen(max(self.t, 1)) if self.t else 0
        self.schedule.ensure(self.t + 1)
        if self.schedule.starts.size > l:
            return int(self.schedule.starts[l])
        return int(self.schedule._end)

    def block(self, n):
        """Inputs for the next ``n`` steps without consuming them.

        Returns (arm uniforms, noise values, context ids, segment ids).
        """
        sch = self.schedule
        first, last = self.t + 1, self.t + n
        sch.ensure(last)
        lo = int(np.searchsorted(sch.starts, first, side="right")) - 1
        hi = int(np.searchsorted(sch.starts, last, side="right"))
        edges = np.clip(sch.starts[lo + 1:hi], first, last + 1)
        counts = np.diff(np.concatenate([[first], edges, [last + 1]]))
        seg = np.repeat(np.arange(lo, hi, dtype=np.int64), counts)
        return (
            self.arm_stream.peek(n),
            self.instance.noise.transform(self.noise_stream.peek(n)),
            self.schedule.contexts[seg],
            seg,
        )

    def advance(self, k):
        self.arm_stream.advance(k)
        self.noise_stream.advance(k)
        self.t += k

    def step(self, arm_index, dynamics="hidden"):
        """Serve one pull of ``arm_index`` (the arm stream is not touched)."""
        if dynamics not in DYNAMICS:
            raise DynamicsError(f"unknown dynamics {dynamics!r}")
        if not 0 <= arm_index < self.instance.K:
            raise IndexError(f"arm index {arm_index} out of range")
        self.t += 1
        seg = int(self.schedule.segment_index(np.array([self.t]))[0])
        j = int(self.schedule.contexts[seg])
        eta = float(self.instance.noise.transform(self.noise_stream.take(1))[0])
        reward = float(self._means[arm_index, j]) + eta
        if dynamics == "hidden":
            return Observation(reward)
        if dynamics == "index_revealed":
            return Observation(reward, context=j)
        is_cp = bool(self.schedule.starts[seg] == self.t)
        return Observation(reward, context=j, theta=self.instance.thetas[:, j].copy(), changepoint=is_cp)
