"""Seeded experiment sweeps, result files and plot data.

A sweep runs every (algorithm, eps, trial) cell of a configuration.  Each trial
is independent and fully determined by its key, so the output files are
byte-identical however many worker processes are used.

Configuration files are JSON objects; every key is optional::

    {
      "instance": {"example": "5.1", "d": 2, "phi": 0.39269908, "lmin": 3000,
                   "lmax": 5000, "p_min": 0.8},
      "algorithms": ["psebai_plus", "nebai"],
      "eps": [0.1, 0.2, 0.4],
      "delta": 0.05, "gamma": 6, "w": null, "b": null, "nu": 1.0,
      "trials": 20, "seed": 0, "radius": "tight", "zeta": "mean",
      "lcd_mult": 1, "allow_violation": false, "max_steps": 1000000000,
      "fixed_schedule": false
    }

``instance`` is either ``{"example": "5.1" | "I.2", ...}`` with the
constructor's keyword arguments, ``{"file": "path.json"}`` or a full inline
instance.  ``eps`` defaults to ``0.03 * 1.35**k`` for ``k = 1..12``.  ``w`` and
``b`` default to the window rule ``L_min / (3 gamma)`` and the false-alarm
formula.  ``nu`` scales the ``L_min``/``L_max`` given to the algorithms (the
environment keeps the true values).  With ``fixed_schedule`` every trial sees
the same changepoint and context sequence.
"""

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .algos import ALGORITHMS, ConfigError, PSParams, resolve, run_debai, run_debai_beta, run_nebai, \
    run_psebai, run_psebai_plus
from .env import Instance, delta_min, eps_best_set, make_example_5_1, make_example_I_2
from .rng import derive_seed

PLOT_KINDS = ("complexity_vs_eps", "context_samples_vs_invgap")

RESULT_FIELDS = ("algorithm", "eps_index", "eps", "trial", "seed", "tau", "S", "l_tau", "arm", "correct",
                 "cap_hit", "status", "n_alarms", "log")
SUMMARY_FIELDS = ("algorithm", "eps_index", "eps", "trials", "mean_tau", "sd_tau", "mean_l_tau", "sd_l_tau",
                  "correct_rate", "cap_hits", "failures", "inv_gap")

# Pins of the desk-scale reproduction profile.  The detection constants are
# calibrated for the scaled segment lengths (see the README).
PROFILES = {
    "paper-scaled": {
        "instance": {"example": "5.1", "d": 2, "phi": math.pi / 8, "lmin": 3000, "lmax": 5000, "p_min": 0.8},
        "delta": 0.05,
        "gamma": 6,
        "w": None,
        "trials": 20,
        "radius": "tight",
        "lcd_mult": 3,
        "b": 0.5,
        "allow_violation": True,
        "max_steps": 10**8,
    },
}
PROFILE_DEFAULTS = {"paper-scaled": {"algorithms": ["psebai_plus", "nebai", "debai", "debai_beta"]}}


def default_eps_grid():
    return [0.03 * 1.35**k for k in range(1, 13)]


def fmt(v):
    """Nine significant digits for floats, plain text otherwise."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".9g")
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if v is None:
        return ""
    return str(v)


@dataclass
class ExperimentConfig:
    instance: dict = field(default_factory=lambda: dict(PROFILES["paper-scaled"]["instance"]))
    algorithms: list = field(default_factory=lambda: ["psebai_plus", "nebai"])
    eps: list = field(default_factory=default_eps_grid)
    delta: float = 0.05
    gamma: int = 6
    w: int = None
    b: float = None
    nu: float = 1.0
    trials: int = 20
    seed: int = 0
    radius: str = "tight"
    zeta: str = "mean"
    lcd_mult: int = 1
    allow_violation: bool = False
    max_steps: int = 10**9
    fixed_schedule: bool = False
    base_dir: str = "."

    def __post_init__(self):
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if not self.algorithms or unknown:
            raise ConfigError(f"algorithms must be a nonempty subset of {', '.join(ALGORITHMS)}; got {unknown}")
        if not self.eps or any(float(e) <= 0 for e in self.eps):
            raise ConfigError("eps grid must be nonempty and positive")
        self.eps = [float(e) for e in self.eps]
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.nu <= 0:
            raise ConfigError("nu must be positive")
        self.max_steps = int(self.max_steps)
        self.seed = int(self.seed)
        inst = self.build_instance()
        if any(a.startswith("psebai") for a in self.algorithms):
            for eps in self.eps:
                resolve(inst, self.ps_params(inst, eps))

    @classmethod
    def from_dict(cls, d, profile=None, base_dir="."):
        data = dict(d)
        if profile is not None:
            if profile not in PROFILES:
                raise ConfigError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
            data = {**PROFILE_DEFAULTS.get(profile, {}), **data, **PROFILES[profile]}
        names = {f.name for f in fields(cls)}
        extra = sorted(set(data) - names)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        data.setdefault("base_dir", str(base_dir))
        return cls(**data)

    @classmethod
    def load(cls, path, profile=None):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data, profile=profile, base_dir=path.parent)

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        return d

    def build_instance(self):
        spec = dict(self.instance)
        if "file" in spec:
            p = Path(spec["file"])
            return Instance.load(p if p.is_absolute() else Path(self.base_dir) / p)
        if "example" in spec:
            kind = str(spec.pop("example"))
            p_min = spec.pop("p_min", None)
            if p_min is not None:
                spec["schedule"] = {"kind": "two_point", "p_min": float(p_min)}
            try:
                if kind == "5.1":
                    return make_example_5_1(**spec)
                if kind == "I.2":
                    return make_example_I_2(**spec)
            except TypeError as exc:
                raise ConfigError(f"bad instance arguments: {exc}") from None
            raise ConfigError(f"unknown example {kind!r}; choose 5.1 or I.2")
        try:
            return Instance.from_dict(spec)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad inline instance: {exc}") from None

    def assumed_lengths(self, inst):
        return max(1, int(round(self.nu * inst.lmin))), max(1, int(round(self.nu * inst.lmax)))

    def ps_params(self, inst, eps):
        l_min, l_max = self.assumed_lengths(inst)
        return PSParams(eps=eps, delta=self.delta, gamma=self.gamma, w=self.w, lcd_mult=self.lcd_mult,
                        b=self.b, radius=self.radius, zeta=self.zeta, l_min=l_min, l_max=l_max,
                        allow_violation=self.allow_violation)


@dataclass
class TrialRecord:
    algorithm: str
    eps_index: int
    eps: float
    trial: int
    seed: int
    tau: int
    S: int
    l_tau: int
    arm: object
    correct: bool
    cap_hit: bool
    status: str
    n_alarms: int
    log: str
    wall_ms: float = 0.0


def trial_seeds(base, algorithm, eps_index, trial, fixed_schedule=False):
    """``(stream seed, schedule seed)``; the schedule is shared across algorithms."""
    seed = derive_seed(base, algorithm, eps_index, trial)
    sched = derive_seed(base, "schedule") if fixed_schedule else derive_seed(base, "schedule", trial)
    return seed, sched


def _run_algorithm(cfg, inst, algorithm, eps, seed, sched):
    kw = {"schedule_seed": sched, "max_steps": cfg.max_steps}
    if algorithm == "nebai":
        return run_nebai(inst, eps, cfg.delta, seed, l_max=cfg.assumed_lengths(inst)[1], **kw)
    if algorithm == "debai":
        return run_debai(inst, eps, cfg.delta, seed, **kw)
    if algorithm == "debai_beta":
        return run_debai_beta(inst, eps, cfg.delta, seed, l_max=cfg.assumed_lengths(inst)[1], **kw)
    runner = run_psebai if algorithm == "psebai" else run_psebai_plus
    return runner(inst, cfg.ps_params(inst, eps), seed, **kw)


def run_trial(cfg, algorithm, eps_index, trial, inst=None):
    """Run one cell and return ``(TrialRecord, event lines)``.  Never raises."""
    inst = inst or cfg.build_instance()
    eps = cfg.eps[eps_index]
    seed, sched = trial_seeds(cfg.seed, algorithm, eps_index, trial, cfg.fixed_schedule)
    log = f"logs/{algorithm}_e{eps_index:02d}_t{trial:04d}.log"
    start = time.perf_counter()
    try:
        r = _run_algorithm(cfg, inst, algorithm, eps, seed, sched)
    except Exception as exc:  # crash isolation: the sweep records the failure
        wall = (time.perf_counter() - start) * 1e3
        rec = TrialRecord(algorithm, eps_index, eps, trial, seed, 0, 0, 0, None, False, False,
                          f"error:{type(exc).__name__}", 0, log, wall)
        return rec, [f"error {type(exc).__name__}: {exc}"]
    wall = (time.perf_counter() - start) * 1e3
    correct = r.arm is not None and r.arm in eps_best_set(inst, eps)
    rec = TrialRecord(algorithm, eps_index, eps, trial, seed, r.tau, r.S, r.segments, r.arm, correct,
                      r.cap_hit, r.status, r.n_alarms, log, wall)
    lines = [f"{t} {kind} {v}" for kind, t, v in r.events]
    return rec, lines


def _worker(args):
    cfg_dict, base_dir, key = args
    cfg = ExperimentConfig.from_dict(cfg_dict, base_dir=base_dir)
    return key, run_trial(cfg, *key)


def cell_keys(cfg):
    return [(a, i, t) for a in cfg.algorithms for i in range(len(cfg.eps)) for t in range(cfg.trials)]


def run_experiment(cfg, out_dir=None, jobs=1, progress=None):
    """Run the sweep; write result files to ``out_dir`` when given.

    Returns the list of :class:`TrialRecord` in (algorithm, eps index, trial)
    order.
    """
    keys = cell_keys(cfg)
    inst = cfg.build_instance()
    results = {}
    if jobs <= 1:
        for key in keys:
            results[key] = run_trial(cfg, *key, inst=inst)
            if progress:
                progress(results[key][0])
    else:
        payload = [(cfg.to_dict(), cfg.base_dir, k) for k in keys]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, res in pool.map(_worker, payload, chunksize=1):
                results[key] = res
                if progress:
                    progress(res[0])
    records = [results[k][0] for k in keys]
    if out_dir is not None:
        write_outputs(out_dir, cfg, inst, records, {k: results[k][1] for k in keys})
    return records


def summarize(records, inst):
    """Per-cell statistics ordered by (algorithm, eps index)."""
    dmin = delta_min(inst)
    cells = {}
    for r in records:
        cells.setdefault((r.algorithm, r.eps_index), []).append(r)
    rows = []
    for (algo, i), rs in cells.items():
        tau = np.array([r.tau for r in rs], dtype=float)
        l = np.array([r.l_tau for r in rs], dtype=float)
        sd = (lambda v: float(v.std(ddof=1)) if v.size > 1 else 0.0)
        eps = rs[0].eps
        rows.append({
            "algorithm": algo, "eps_index": i, "eps": eps, "trials": len(rs),
            "mean_tau": float(tau.mean()), "sd_tau": sd(tau), "mean_l_tau": float(l.mean()), "sd_l_tau": sd(l),
            "correct_rate": float(np.mean([r.correct for r in rs])),
            "cap_hits": sum(r.cap_hit for r in rs),
            "failures": sum(r.arm is None for r in rs),
            "inv_gap": 1.0 / (dmin + eps) ** 2 if math.isfinite(dmin) else 1.0 / eps**2,
        })
    return rows


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(row[h]) for h in header])
    return buf.getvalue()


def results_csv(records):
    return _csv_text(RESULT_FIELDS, [asdict(r) for r in records])


def write_outputs(out_dir, cfg, inst, records, logs):
    out = Path(out_dir)
    (out / "logs").mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(records))
    (out / "summary.csv").write_text(_csv_text(SUMMARY_FIELDS, summarize(records, inst)))
    (out / "timings.csv").write_text(_csv_text(
        ("algorithm", "eps_index", "trial", "wall_ms"), [asdict(r) for r in records]))
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    inst.save(out / "instance.json")
    for r in records:
        lines = logs.get((r.algorithm, r.eps_index, r.trial), [])
        header = f"# {r.algorithm} eps={fmt(r.eps)} trial={r.trial} seed={r.seed} status={r.status}\n"
        (out / r.log).write_text(header + "".join(line + "\n" for line in lines))


def read_results(in_dir):
    """Load ``results.csv`` back into :class:`TrialRecord` objects."""
    path = Path(in_dir) / "results.csv"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found")
    recs = []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            recs.append(TrialRecord(
                algorithm=row["algorithm"], eps_index=int(row["eps_index"]), eps=float(row["eps"]),
                trial=int(row["trial"]), seed=int(row["seed"]), tau=int(row["tau"]), S=int(row["S"]),
                l_tau=int(row["l_tau"]), arm=int(row["arm"]) if row["arm"] else None,
                correct=row["correct"] == "1", cap_hit=row["cap_hit"] == "1", status=row["status"],
                n_alarms=int(row["n_alarms"]), log=row["log"],
            ))
    return recs


def emit_plot_data(records, kind, out_dir, inst, algorithms=None):
    """Write ``series_<kind>_<algorithm>.dat`` files of ``x mean stddev``.

    ``complexity_vs_eps`` plots mean tau against eps;
    ``context_samples_vs_invgap`` plots mean l_tau against
    ``1 / (Delta_min + eps)^2`` of the true instance.  Returns the paths.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown kind {kind!r}; choose from {', '.join(PLOT_KINDS)}")
    if not records:
        raise ValueError("result table is empty")
    present = list(dict.fromkeys(r.algorithm for r in records))
    algorithms = present if algorithms is None else list(algorithms)
    if not algorithms or any(a not in ALGORITHMS for a in algorithms):
        raise ValueError(f"algorithms must be a nonempty subset of {', '.join(ALGORITHMS)}")
    rows = summarize([r for r in records if r.algorithm in algorithms], inst)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for algo in algorithms:
        mine = sorted((r for r in rows if r["algorithm"] == algo), key=lambda r: r["eps_index"])
        if not mine:
            continue
        if kind == "complexity_vs_eps":
            head, pts = "eps mean_tau sd_tau", [(r["eps"], r["mean_tau"], r["sd_tau"]) for r in mine]
        else:
            head = "inv_gap mean_l_tau sd_l_tau"
            pts = [(r["inv_gap"], r["mean_l_tau"], r["sd_l_tau"]) for r in mine]
        path = out / f"series_{kind}_{algo}.dat"
        path.write_text(f"# {head}\n" + "".join(" ".join(fmt(float(v)) for v in p) + "\n" for p in pts))
        paths.append(path)
    return paths


def default_jobs():
    return max(1, min(os.cpu_count() or 1, 8))
