"""Monte Carlo convergence and interface studies.

Every realization draws one Brownian path at ``tau_ref`` and drives the
reference run and all ladder rungs with (coarsened) increments of that path.
Per-realization squared errors are reduced in realization order, so reports do
not depend on how realizations were scheduled.
"""
import csv
import hashlib
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import __version__
from .assembly import DEFAULT_QUAD_ORDER, assemble_operators
from .discrete import InverseLaplacian
from .mesh import build_uniform_mesh, prolongate
from .noise import GENERATOR_ID, NORMAL_METHOD, coarsen, generate_path, n_steps, step_ratio
from .postproc import extract_zero_level_set, mean_field, signed_distance_initializer, smooth_initializer
from .stepper import (
    LinearSolveFailure,
    MeshConstraintWarning,
    NewtonDiverged,
    SchemeParams,
    Stepper,
    mesh_constraint_indicator,
    project_initial,
    run_path,
)

REPORT_SCHEMA = "stochch-error-report v1"
STUDY_SCHEMA = "stochch-interface-study v1"
PRESETS = ("test1_temporal", "test1_spatial", "test2", "test3", "custom")
STUDIES = ("temporal", "spatial", "interface")
INITIAL_DATA = ("smooth", "test2", "test3", "constant")
REFERENCE_POLICIES = ("fine_tau_same_h", "fine_h_same_tau")
FAILURE_POLICIES = ("abort", "skip")
MAX_SKIP_FRACTION = 0.01


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class SolverFailure(RuntimeError):
    """A realization failed under the abort policy, or too many were skipped."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration of one study.

    Mesh sizes are side lengths ``h = 2 / n`` of the uniform mesh family.
    ``h`` and ``tau`` are the fixed resolutions of studies that do not refine
    them; ``h_list``/``tau_list`` are halving ladders, coarsest first.
    """

    preset: str = "custom"
    study: str = "temporal"
    initial: str = "smooth"
    epsilon: float = 0.1
    delta: float = 5.0
    T: float = 0.016
    h: float = 2 / 32
    tau: float = 2e-4
    h_list: tuple = ()
    tau_list: tuple = ()
    h_ref: float = None
    tau_ref: float = 5e-5
    M: int = 100
    master_seed: int = 20240601
    reference_policy: str = "fine_tau_same_h"
    failure_policy: str = "skip"
    snapshots: tuple = ()
    quad_order: int = DEFAULT_QUAD_ORDER
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    constraint_threshold: float = 1.0
    linear_solver: str = "krylov"
    jobs: int = 1

    def __post_init__(self):
        for name in ("h_list", "tau_list", "snapshots"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

    # derived quantities
    @property
    def n(self):
        return mesh_divisions(self.h, "h")

    @property
    def n_list(self):
        return tuple(mesh_divisions(h, "h_list") for h in self.h_list)

    @property
    def n_ref(self):
        return mesh_divisions(self.h_ref, "h_ref")

    def scheme_params(self, tau):
        return SchemeParams(
            epsilon=self.epsilon, delta=self.delta, tau=tau, T=self.T,
            newton_tol=self.newton_tol, newton_max_iter=self.newton_max_iter,
            constraint_threshold=self.constraint_threshold,
        )

    def step_sizes(self):
        """Every time step run by the study, reference first."""
        if self.study == "temporal":
            return (self.tau_ref,) + self.tau_list
        return (self.tau,)

    def constraint_indicators(self):
        return {tau: mesh_constraint_indicator(tau, self.epsilon, self.delta)
                for tau in self.step_sizes()}

    def to_dict(self):
        d = asdict(self)
        for k in ("h_list", "tau_list", "snapshots"):
            d[k] = list(d[k])
        return d

    def config_hash(self):
        """SHA-256 of every field that influences results (``jobs`` excluded)."""
        d = self.to_dict()
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def validate(self):
        """Raise :class:`ConfigError` naming the first offending field."""
        _check(self.preset in PRESETS, "preset", f"unknown preset {self.preset!r}")
        _check(self.study in STUDIES, "study", f"must be one of {STUDIES}")
        _check(self.initial in INITIAL_DATA, "initial", f"must be one of {INITIAL_DATA}")
        _check(self.reference_policy in REFERENCE_POLICIES, "reference_policy",
               f"must be one of {REFERENCE_POLICIES}")
        _check(self.failure_policy in FAILURE_POLICIES, "failure_policy",
               f"must be one of {FAILURE_POLICIES}")
        _check(self.linear_solver in ("krylov", "direct"), "linear_solver", "must be krylov or direct")
        _positive(self, "epsilon", "T", "tau_ref", "newton_tol", "constraint_threshold")
        _check(_finite(self.delta) and self.delta >= 0, "delta", "must be nonnegative")
        for name in ("M", "jobs", "newton_max_iter"):
            v = getattr(self, name)
            _check(isinstance(v, (int, np.integer)) and v >= 1, name, "must be a positive integer")
        _check(self.quad_order in range(4, 13), "quad_order", "must be between 4 and 12")
        _divides(self.T, self.tau_ref, "tau_ref")

        if self.study == "temporal":
            _check(self.reference_policy == "fine_tau_same_h", "reference_policy",
                   "temporal studies use fine_tau_same_h")
            _check(len(self.tau_list) >= 1, "tau_list", "needs at least one rung")
            _halving(self.tau_list, "tau_list")
            for tau in self.tau_list:
                _positive_value(tau, "tau_list")
                _multiple(tau, self.tau_ref, "tau_list")
                _divides(self.T, tau, "tau_list")
            _check(self.tau_list[-1] > self.tau_ref * (1 + 1e-9), "tau_ref",
                   "must be finer than every ladder rung")
            self.n
        elif self.study == "spatial":
            _check(self.reference_policy == "fine_h_same_tau", "reference_policy",
                   "spatial studies use fine_h_same_tau")
            _check(len(self.h_list) >= 1, "h_list", "needs at least one rung")
            _halving(self.h_list, "h_list")
            ns = self.n_list
            _check(self.h_ref is not None, "h_ref", "spatial studies need a reference mesh")
            nr = self.n_ref
            _check(nr > ns[-1] and all(nr % k == 0 for k in ns), "h_ref",
                   "reference mesh must be a strict refinement nested with every rung")
            _positive_value(self.tau, "tau")
            _multiple(self.tau, self.tau_ref, "tau")
            _divides(self.T, self.tau, "tau")
        else:
            _positive_value(self.tau, "tau")
            _multiple(self.tau, self.tau_ref, "tau")
            _divides(self.T, self.tau, "tau")
            self.n
            for t in self.snapshots:
                k = round(t / self.tau)
                _check(0 <= k <= round(self.T / self.tau)
                       and abs(k * self.tau - t) <= 1e-9 * self.T,
                       "snapshots", f"time {t} is not a multiple of tau={self.tau} in [0, T]")
        return self


def _finite(v):
    return isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v)


def _check(ok, name, message):
    if not ok:
        raise ConfigError(name, message)


def _positive_value(v, name):
    _check(_finite(v) and v > 0, name, f"must be positive, got {v}")


def _positive(cfg, *names):
    for name in names:
        _positive_value(getattr(cfg, name), name)


def _divides(T, tau, name):
    try:
        n_steps(T, tau)
    except ValueError:
        raise ConfigError(name, f"step {tau} does not divide T={T}") from None


def _multiple(tau, tau_ref, name):
    try:
        step_ratio(tau, tau_ref)
    except ValueError:
        raise ConfigError(name, f"step {tau} is not a multiple of tau_ref={tau_ref}") from None


def _halving(ladder, name):
    for a, b in zip(ladder[:-1], ladder[1:]):
        _check(abs(a / b - 2.0) < 1e-9, name, f"ladder must halve at every rung ({a} -> {b})")


def mesh_divisions(h, name="h"):
    """Cells per side for mesh size ``h`` on [-1, 1]^2."""
    if h is None or not _finite(h) or h <= 0:
        raise ConfigError(name, f"mesh size must be positive, got {h}")
    n = round(2.0 / h)
    if n < 1 or abs(n * h - 2.0) > 1e-9:
        raise ConfigError(name, f"2/h must be an integer, got h={h}")
    return int(n)


def preset_config(name, **overrides):
    """Desk-scale defaults for a named preset, with keyword overrides."""
    key = name.replace("-", "_")
    base = {
        "test1_temporal": dict(
            study="temporal", initial="smooth", epsilon=0.1, delta=5.0, T=0.016, h=2 / 32,
            tau_list=(3.2e-3, 1.6e-3, 8e-4, 4e-4, 2e-4, 1e-4), tau_ref=1.25e-5, M=100,
            reference_policy="fine_tau_same_h",
        ),
        "test1_spatial": dict(
            study="spatial", initial="smooth", epsilon=0.1, delta=25.0, T=0.016, tau=2e-4,
            h_list=(2 / 4, 2 / 8, 2 / 16), h_ref=2 / 32, tau_ref=2e-4, M=200,
            reference_policy="fine_h_same_tau",
        ),
        "test2": dict(
            study="interface", initial="test2", epsilon=0.02, delta=1.0, T=0.01, h=2 / 32,
            tau=5e-5, tau_ref=5e-5, M=50, snapshots=(0.0, 0.0025, 0.005, 0.01),
        ),
        "test3": dict(
            study="interface", initial="test3", epsilon=0.02, delta=1.0, T=0.01, h=2 / 32,
            tau=5e-5, tau_ref=5e-5, M=50, snapshots=(0.0, 0.0025, 0.005, 0.01),
        ),
        "custom": {},
    }
    if key not in base:
        raise ConfigError("preset", f"unknown preset {name!r}; expected one of {PRESETS}")
    kw = dict(base[key], preset=key)
    kw.update(overrides)
    return ExperimentConfig(**kw)


def quick_config(cfg):
    """Shrink a configuration to a smoke-test size (keeps M and physics)."""
    if cfg.study == "temporal":
        return replace(cfg, h=2 / 8, T=0.0032, tau_list=(8e-4, 4e-4), tau_ref=2e-4)
    if cfg.study == "spatial":
        return replace(cfg, h_list=(2 / 4, 2 / 8), h_ref=2 / 16, T=0.0032, tau=8e-4, tau_ref=8e-4)
    snaps = tuple(t for t in (0.0, 0.0005, 0.001) if t <= 0.001)
    return replace(cfg, h=2 / 16, T=0.001, tau=1e-4, tau_ref=1e-4, snapshots=snaps)


def fit_orders(errors, resolutions=None):
    """Observed orders between adjacent rungs.

    ``order_k = log(e_k / e_{k+1}) / log(r_k / r_{k+1})``; with the default
    halving ladder this is ``log2(e_k / e_{k+1})``.
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 1 or len(e) < 2:
        raise ValueError("fit_orders needs at least two rungs")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise ValueError("errors must be positive and finite")
    if resolutions is None:
        ratio = np.full(len(e) - 1, 2.0)
    else:
        r = np.asarray(resolutions, dtype=float)
        if r.shape != e.shape or np.any(r <= 0):
            raise ValueError("resolutions must be positive and match errors")
        ratio = r[:-1] / r[1:]
    return list(np.log(e[:-1] / e[1:]) / np.log(ratio))


# -- per-process study state ---------------------------------------------

def initial_function(cfg):
    if cfg.initial == "smooth":
        return smooth_initializer
    if cfg.initial == "constant":
        return lambda x: np.ones(x.shape[:-1])
    return signed_distance_initializer(cfg.initial, cfg.epsilon)


class StudyContext:
    """Meshes, operators, projected initial data and steppers of one study.

    Built once per worker process and read-only afterwards, apart from the
    steppers' preconditioner cache, which every run resets.
    """

    def __init__(self, cfg):
        self.cfg = cfg
        self.ops = {}
        self.u0 = {}
        self._steppers = {}
        f0 = initial_function(cfg)
        for n in self.mesh_sizes():
            ops = assemble_operators(build_uniform_mesh(n), quad_order=cfg.quad_order)
            self.ops[n] = ops
            self.u0[n] = project_initial(ops, f0)
        self.invlap = InverseLaplacian(self.ops[self.norm_mesh])

    def mesh_sizes(self):
        cfg = self.cfg
        if cfg.study == "spatial":
            return cfg.n_list + (cfg.n_ref,)
        return (cfg.n,)

    @property
    def norm_mesh(self):
        return self.cfg.n_ref if self.cfg.study == "spatial" else self.cfg.n

    def stepper(self, n, tau):
        key = (n, tau)
        if key not in self._steppers:
            self._steppers[key] = Stepper(self.ops[n], self.cfg.scheme_params(tau),
                                          linear_solver=self.cfg.linear_solver)
        return self._steppers[key]

    def run(self, n, tau, increments, **kw):
        p = self.cfg.scheme_params(tau)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", MeshConstraintWarning)
            return run_path(self.u0[n], increments, p, self.ops[n],
                            stepper=self.stepper(n, tau), **kw)

    def squared_errors(self, E):
        """``(||E||^2, ||grad E||^2, ||E||_{-1,h}^2)`` on the norm mesh."""
        ops = self.ops[self.norm_mesh]
        return (float(E @ (ops.M @ E)), float(E @ (ops.A @ E)), self.invlap.norm(E) ** 2)


@dataclass
class RealizationErrors:
    index: int
    # rung -> (N_k + 1, 3) squared errors at the rung's time points
    sq: list = None
    wall: list = None
    failure: str = None


def _path(cfg, m):
    return generate_path(cfg.master_seed, cfg.T, cfg.tau_ref, realization=m)


def temporal_realization(ctx, m):
    cfg = ctx.cfg
    n = cfg.n
    path = _path(cfg, m)
    ratios = [step_ratio(tau, cfg.tau_ref) for tau in cfg.tau_list]
    stride = math.gcd(*ratios)
    t0 = time.perf_counter()
    ref = ctx.run(n, cfg.tau_ref, path.increments, store_every=stride)
    wall = [time.perf_counter() - t0]
    out = []
    for tau, r in zip(cfg.tau_list, ratios):
        t0 = time.perf_counter()
        run = ctx.run(n, tau, coarsen(path, tau), store_every=1)
        sq = np.array([ctx.squared_errors(run.snapshots[k] - ref.snapshots[k * r])
                       for k in range(len(run.snapshots))])
        out.append(sq)
        wall.append(time.perf_counter() - t0)
    return RealizationErrors(m, out, wall)


def spatial_realization(ctx, m):
    cfg = ctx.cfg
    path = _path(cfg, m)
    inc = coarsen(path, cfg.tau)
    fine = ctx.ops[cfg.n_ref].mesh
    t0 = time.perf_counter()
    ref = ctx.run(cfg.n_ref, cfg.tau, inc, store_every=1)
    wall = [time.perf_counter() - t0]
    out = []
    for n in cfg.n_list:
        t0 = time.perf_counter()
        run = ctx.run(n, cfg.tau, inc, store_every=1)
        coarse = ctx.ops[n].mesh
        sq = np.array([ctx.squared_errors(prolongate(coarse, fine, run.snapshots[k]) - ref.snapshots[k])
                       for k in range(len(run.snapshots))])
        out.append(sq)
        wall.append(time.perf_counter() - t0)
    return RealizationErrors(m, out, wall)


def _guarded(fn, ctx, m):
    try:
        return fn(ctx, m)
    except (NewtonDiverged, LinearSolveFailure) as exc:
        if ctx.cfg.failure_policy == "abort":
            raise SolverFailure(f"realization {m} failed at step {exc.step}: {exc}") from exc
        return RealizationErrors(m, failure=f"step {exc.step}: {exc}")


_WORKER = {}


def _init_worker(cfg):
    _WORKER["ctx"] = StudyContext(cfg)


def _work(job):
    fn, m = job
    return _guarded(fn, _WORKER["ctx"], m)


def map_realizations(cfg, fn, indices, ctx=None):
    """Run ``fn(ctx, m)`` for each index and return results in index order."""
    indices = list(indices)
    if cfg.jobs == 1 or len(indices) <= 1:
        ctx = ctx or StudyContext(cfg)
        return [_guarded(fn, ctx, m) for m in indices]
    with ProcessPoolExecutor(max_workers=cfg.jobs, initializer=_init_worker, initargs=(cfg,)) as ex:
        return list(ex.map(_work, [(fn, m) for m in indices]))


# -- reports --------------------------------------------------------------

@dataclass
class RungResult:
    resolution: float
    linf_l2: float
    linf_l2_stderr: float
    l2_h1: float
    l2_h1_stderr: float
    hm1: float
    hm1_stderr: float
    order_linf_l2: float = None
    order_l2_h1: float = None
    order_hm1: float = None
    wall_time: float = 0.0


CSV_COLUMNS = ["resolution", "linf_l2", "linf_l2_stderr", "order_linf_l2", "l2_h1", "l2_h1_stderr",
               "order_l2_h1", "hm1", "hm1_stderr", "order_hm1"]


@dataclass
class ErrorReport:
    """Strong error functionals per ladder rung.

    ``linf_l2 = sqrt(max_n mean ||E^n||^2)``,
    ``l2_h1 = sqrt(mean sum_{n>=1} tau ||grad E^n||^2)`` and
    ``hm1 = sqrt(max_n mean ||E^n||_{-1,h}^2)``. Standard errors are those of
    the squared-error means, propagated through the square root.
    """

    study: str
    rungs: list
    config: dict
    config_hash: str
    M: int
    skipped: int = 0
    failures: list = field(default_factory=list)
    reference: str = ""
    wall_time: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def valid(self):
        return self.skipped <= MAX_SKIP_FRACTION * self.M

    @property
    def resolutions(self):
        return [r.resolution for r in self.rungs]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rungs])

    def to_dict(self):
        d = dict(schema=REPORT_SCHEMA, study=self.study, valid=self.valid, M=self.M,
                 skipped=self.skipped, failures=self.failures, reference=self.reference,
                 config=self.config, config_hash=self.config_hash, wall_time=self.wall_time,
                 metadata=self.metadata, rungs=[asdict(r) for r in self.rungs])
        return _jsonable(d)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self):
        """Deterministic table: one row per rung, no timing columns."""
        buf = io.StringIO()
        buf.write(f"# {REPORT_SCHEMA}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rungs:
            w.writerow(["" if getattr(r, c) is None else repr(float(getattr(r, c))) for c in CSV_COLUMNS])
        return buf.getvalue()

    def write(self, json_path=None, csv_path=None):
        if json_path:
            with open(json_path, "w") as fh:
                fh.write(self.to_json() + "\n")
        if csv_path:
            with open(csv_path, "w", newline="") as fh:
                fh.write(self.to_csv())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _mean_stderr(samples):
    """Mean over realizations (index order) and its standard error."""
    s = np.asarray(samples, dtype=float)
    mean = s.sum(axis=0) / len(s)
    if len(s) < 2:
        return mean, np.full_like(mean, np.nan)
    return mean, s.std(axis=0, ddof=1) / np.sqrt(len(s))


def _root(mean, se):
    """``sqrt`` of a mean with its delta-method standard error."""
    r = math.sqrt(max(mean, 0.0))
    return r, (se / (2.0 * r) if r > 0 else 0.0)


def reduce_errors(cfg, results, resolutions, taus):
    """Combine per-realization squared errors into :class:`RungResult` rows."""
    ok = [r for r in results if r.failure is None]
    if not ok:
        raise SolverFailure("every realization failed")
    rungs = []
    for k, (res, tau) in enumerate(zip(resolutions, taus)):
        sq = np.stack([r.sq[k] for r in ok])  # (M, N+1, 3)
        mean, se = _mean_stderr(sq)
        i2 = int(np.argmax(mean[:, 0]))
        im = int(np.argmax(mean[:, 2]))
        integ_mean, integ_se = _mean_stderr(tau * sq[:, 1:, 1].sum(axis=1))
        l2 = _root(mean[i2, 0], se[i2, 0])
        h1 = _root(float(integ_mean), float(integ_se))
        hm = _root(mean[im, 2], se[im, 2])
        wall = sum(r.wall[k + 1] for r in ok)
        rungs.append(RungResult(res, *l2, *h1, *hm, wall_time=wall))
    for name in ("linf_l2", "l2_h1", "hm1"):
        vals = [getattr(r, name) for r in rungs]
        if len(vals) >= 2 and all(v > 0 for v in vals):
            for r, o in zip(rungs[1:], fit_orders(vals, resolutions)):
                setattr(r, "order_" + name, float(o))
    return rungs


def estimate_errors(cfg, ctx=None):
    """Run the convergence study described by ``cfg`` and return an :class:`ErrorReport`."""
    cfg.validate()
    if cfg.study not in ("temporal", "spatial"):
        raise ConfigError("study", "estimate_errors needs a temporal or spatial study")
    t_start = time.perf_counter()
    if cfg.study == "temporal":
        fn, resolutions, taus = temporal_realization, list(cfg.tau_list), list(cfg.tau_list)
        reference = (f"same Brownian path at tau_ref={cfg.tau_ref!r} on the same mesh "
                     f"(h={cfg.h!r}); compared at every time point of each rung")
    else:
        fn, resolutions, taus = spatial_realization, list(cfg.h_list), [cfg.tau] * len(cfg.h_list)
        reference = (f"same Brownian path and tau={cfg.tau!r} on the nested mesh h_ref={cfg.h_ref!r}; "
                     "coarse fields are interpolated onto the reference mesh")
    results = map_realizations(cfg, fn, range(cfg.M), ctx)
    failures = [dict(realization=r.index, reason=r.failure) for r in results if r.failure]
    rungs = reduce_errors(cfg, results, resolutions, taus)
    report = ErrorReport(
        study=cfg.study, rungs=rungs, config=cfg.to_dict(), config_hash=cfg.config_hash(),
        M=cfg.M, skipped=len(failures), failures=failures, reference=reference,
        wall_time=time.perf_counter() - t_start, metadata=run_metadata(cfg),
    )
    if not report.valid:
        raise SolverFailure(f"{report.skipped} of {cfg.M} realizations failed "
                            f"(limit {MAX_SKIP_FRACTION:.0%}); report invalid")
    return report


def run_metadata(cfg):
    return dict(
        version=__version__, master_seed=cfg.master_seed,
        seeds=f"realization m uses key ({cfg.master_seed}, m) for m < {cfg.M}",
        generator=GENERATOR_ID, normal_method=NORMAL_METHOD,
        constraint_indicators={repr(k): v for k, v in cfg.constraint_indicators().items()},
    )


# -- interface / energy study --------------------------------------------

@dataclass
class RealizationSeries:
    index: int
    energy: np.ndarray = None
    mass: np.ndarray = None
    snapshots: dict = None
    failure: str = None


def interface_realization(ctx, m):
    cfg = ctx.cfg
    path = _path(cfg, m)
    run = ctx.run(cfg.n, cfg.tau, coarsen(path, cfg.tau), snapshot_times=cfg.snapshots,
                  track_energy=True)
    return RealizationSeries(m, run.energy, run.mass, run.snapshots)


@dataclass
class InterfaceStudy:
    """Expected energy, mean mass and zero-level sets of the mean field."""

    times: np.ndarray
    energy: np.ndarray
    energy_stderr: np.ndarray
    mass: np.ndarray
    mean_fields: dict
    level_sets: dict
    config: dict
    config_hash: str
    M: int
    skipped: int = 0
    failures: list = field(default_factory=list)
    wall_time: float = 0.0
    metadata: dict = field(default_factory=dict)
    mesh: object = None

    @property
    def valid(self):
        return self.skipped <= MAX_SKIP_FRACTION * self.M

    def to_dict(self):
        return _jsonable(dict(
            schema=STUDY_SCHEMA, valid=self.valid, M=self.M, skipped=self.skipped,
            failures=self.failures, config=self.config, config_hash=self.config_hash,
            wall_time=self.wall_time, metadata=self.metadata,
            snapshot_times=sorted(self.level_sets),
            level_set_segments={repr(t): len(ls) for t, ls in sorted(self.level_sets.items())},
        ))


def energy_decay_study(cfg, ctx=None):
    """Monte Carlo averages of ``J(u^n)`` and ``(u^n, 1)`` plus mean-field level sets.

    With ``delta == 0`` every realization is the same deterministic run, so it
    is computed once and counted ``M`` times.
    """
    cfg.validate()
    t_start = time.perf_counter()
    indices = [0] if cfg.delta == 0 else range(cfg.M)
    results = map_realizations(cfg, interface_realization, indices, ctx)
    if cfg.delta == 0 and results[0].failure is None:
        results = results * cfg.M
    failures = [dict(realization=r.index, reason=r.failure) for r in results if r.failure]
    ok = [r for r in results if r.failure is None]
    if len(failures) > MAX_SKIP_FRACTION * cfg.M or not ok:
        raise SolverFailure(f"{len(failures)} of {cfg.M} realizations failed; study invalid")
    energy, se = _mean_stderr([r.energy for r in ok])
    mass_mean = _mean_stderr([r.mass for r in ok])[0]
    mesh = build_uniform_mesh(cfg.n)
    steps = sorted(ok[0].snapshots)
    mean_fields, level_sets = {}, {}
    for k in steps:
        t = k * cfg.tau
        mean_fields[t] = mean_field([r.snapshots[k] for r in ok])
        level_sets[t] = extract_zero_level_set(mean_fields[t], mesh, time=t)
    times = np.arange(len(energy)) * cfg.tau
    return InterfaceStudy(
        times=times, energy=energy, energy_stderr=se, mass=mass_mean, mean_fields=mean_fields,
        level_sets=level_sets, config=cfg.to_dict(), config_hash=cfg.config_hash(), M=cfg.M,
        skipped=len(failures), failures=failures, wall_time=time.perf_counter() - t_start,
        metadata=run_metadata(cfg), mesh=mesh,
    )


def config_fields():
    """Names and types of every configuration field."""
    return {f.name: f.type for f in fields(ExperimentConfig)}
