"""Command line entry point: ``stochch run`` and ``stochch validate``.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure beyond the
failure policy, 4 I/O error.
"""
import argparse
import configparser
import dataclasses
import hashlib
import json
import os
import platform
import sys
import time
from datetime import datetime, timezone

import numpy as np
import scipy

from . import __version__
from .experiment import (
    ConfigError,
    SolverFailure,
    energy_decay_study,
    estimate_errors,
    preset_config,
    quick_config,
)
from .noise import GENERATOR_ID, NORMAL_METHOD
from .postproc import write_energy_csv, write_level_sets_csv, write_mass_csv

EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 2, 3, 4
MANIFEST_SCHEMA = "stochch-manifest v1"

# config file layout: section -> keys
SECTIONS = {
    "experiment": ("preset", "study", "initial", "M", "master_seed", "reference_policy",
                   "failure_policy", "jobs"),
    "scheme": ("epsilon", "delta", "T", "tau", "tau_list", "tau_ref"),
    "mesh": ("h", "h_list", "h_ref"),
    "solver": ("quad_order", "newton_tol", "newton_max_iter", "constraint_threshold",
               "linear_solver"),
    "output": ("snapshots",),
}
_INT_FIELDS = {"M", "master_seed", "jobs", "quad_order", "newton_max_iter"}
_LIST_FIELDS = {"tau_list", "h_list", "snapshots"}
_STR_FIELDS = {"preset", "study", "initial", "reference_policy", "failure_policy", "linear_solver"}


def _number(text, name, kind=float):
    try:
        if kind is int:
            v = float(text)
            if not v.is_integer():
                raise ValueError
            return int(v)
        return kind(text)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot parse {text!r} as {kind.__name__}") from None


def _parse_value(name, text):
    text = text.strip()
    if name in _STR_FIELDS:
        return text.replace("-", "_")
    if name in _LIST_FIELDS:
        return tuple(_number(t, name) for t in text.replace(" ", "").split(",") if t)
    if name == "h_ref" and text.lower() in ("", "none"):
        return None
    return _number(text, name, int if name in _INT_FIELDS else float)


def read_config_file(path):
    """Parse a key-value config file into a flat dict of config fields."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("config", f"malformed file {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    out = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, f"unknown section [{section}]")
        for key, text in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")
            out[key] = _parse_value(key, text)
    return out


def resolve_config(args):
    """Preset defaults, then the config file, then command-line flags."""
    file_values = read_config_file(args.config) if args.config else {}
    preset = args.preset_pos or args.preset or file_values.get("preset") or "custom"
    cfg = preset_config(preset)
    values = {k: v for k, v in file_values.items() if k != "preset"}
    study = values.get("study", cfg.study)

    over = {}
    for flag, name in (("M", "M"), ("epsilon", "epsilon"), ("delta", "delta"), ("T", "T"),
                       ("seed", "master_seed"), ("jobs", "jobs")):
        v = getattr(args, flag)
        if v is not None:
            over[name] = _parse_value(name, v)
    if args.tau is not None:
        taus = _parse_value("tau_list", args.tau)
        if study == "temporal":
            over["tau_list"] = taus
        else:
            if len(taus) != 1:
                raise ConfigError("tau", "this study takes a single time step")
            over["tau"] = taus[0]
            if "tau_ref" not in values:
                over["tau_ref"] = taus[0]
    if args.h is not None:
        hs = _parse_value("h_list", args.h)
        if study == "spatial":
            over["h_list"] = hs
            if "h_ref" not in values:
                over["h_ref"] = hs[-1] / 2
        else:
            if len(hs) != 1:
                raise ConfigError("h", "this study takes a single mesh size")
            over["h"] = hs[0]
    if args.snapshots is not None:
        over["snapshots"] = _parse_value("snapshots", args.snapshots)
    values.update(over)
    try:
        cfg = dataclasses.replace(cfg, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError("config", str(exc)) from None
    if args.quick:
        cfg = quick_config(cfg)
        if "snapshots" in over:
            cfg = dataclasses.replace(cfg, snapshots=over["snapshots"])
    return cfg.validate()


def estimate_cost(cfg):
    """Rough memory (bytes) and single-core wall time (seconds) of a run."""
    def nv(n):
        return (n + 1) ** 2

    def steps(tau):
        return round(cfg.T / tau)

    per_vertex_step = 1.8e-5
    assembly_per_triangle = 8e-4
    if cfg.study == "temporal":
        meshes = [cfg.n]
        runs = [(cfg.n, cfg.tau_ref)] + [(cfg.n, t) for t in cfg.tau_list]
        stored = (steps(cfg.tau_ref) + sum(steps(t) for t in cfg.tau_list)) * nv(cfg.n)
    elif cfg.study == "spatial":
        meshes = list(cfg.n_list) + [cfg.n_ref]
        runs = [(n, cfg.tau) for n in meshes]
        stored = steps(cfg.tau) * sum(nv(n) for n in meshes)
    else:
        meshes = [cfg.n]
        runs = [(cfg.n, cfg.tau)]
        stored = len(cfg.snapshots) * nv(cfg.n) * cfg.M
    seconds = sum(assembly_per_triangle * 2 * n * n for n in meshes)
    seconds += cfg.M * sum(per_vertex_step * nv(n) * steps(t) for n, t in runs) / cfg.jobs
    operators = sum(60 * nv(n) * 8 * 4 for n in meshes)
    return 8 * stored * cfg.jobs + operators, seconds


def validate_report(cfg):
    mem, secs = estimate_cost(cfg)
    return dict(
        config=cfg.to_dict(),
        config_hash=cfg.config_hash(),
        mesh_constraint_indicator={repr(t): v for t, v in cfg.constraint_indicators().items()},
        constraint_threshold=cfg.constraint_threshold,
        estimated_memory_mb=round(mem / 2**20, 1),
        estimated_wall_time_s=round(secs, 1),
    )


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# files whose bytes depend on wall-clock timings
TIMED_OUTPUTS = {"errors.json", "study.json"}


def write_manifest(out_dir, cfg, outputs, started, finished, argv, extra=None):
    """Write ``manifest.json``; outputs flagged ``reproducible`` are byte-stable."""
    files = []
    for p in outputs:
        name = os.path.basename(p)
        files.append(dict(path=name, sha256=_sha256(p), bytes=os.path.getsize(p),
                          reproducible=name not in TIMED_OUTPUTS))
    manifest = dict(
        schema=MANIFEST_SCHEMA,
        tool=dict(name="stochch", version=__version__, python=platform.python_version(),
                  numpy=np.__version__, scipy=scipy.__version__),
        generator=GENERATOR_ID,
        normal_method=NORMAL_METHOD,
        config=cfg.to_dict(),
        config_hash=cfg.config_hash(),
        command=list(argv),
        started=started,
        finished=finished,
        outputs=files,
    )
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_experiment(cfg, out_dir, argv=(), log=print):
    """Execute the study and write its outputs; returns the list of output paths."""
    os.makedirs(out_dir, exist_ok=True)
    started = _now()
    for tau, ind in cfg.constraint_indicators().items():
        if ind > cfg.constraint_threshold:
            print(f"warning: tau={tau!r}: tau (eps^-3 + eps^-1 delta^4) = {ind:.3g} exceeds "
                  f"{cfg.constraint_threshold}", file=sys.stderr)
    t0 = time.perf_counter()
    outputs = []
    if cfg.study in ("temporal", "spatial"):
        report = estimate_errors(cfg)
        csv_path = os.path.join(out_dir, "errors.csv")
        json_path = os.path.join(out_dir, "errors.json")
        report.write(json_path=json_path, csv_path=csv_path)
        outputs += [csv_path, json_path]
        log(report.to_csv().rstrip())
    else:
        study = energy_decay_study(cfg)
        paths = [os.path.join(out_dir, f) for f in
                 ("energy.csv", "mass.csv", "levelsets.csv", "study.json")]
        write_energy_csv(paths[0], study.times, study.energy, study.energy_stderr)
        write_mass_csv(paths[1], study.times, study.mass)
        write_level_sets_csv(paths[2], [study.level_sets[t] for t in sorted(study.level_sets)])
        with open(paths[3], "w") as fh:
            json.dump(study.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs += paths
        for t in sorted(study.level_sets):
            log(f"t={t:.6g}: {len(study.level_sets[t])} level-set segments")
    elapsed = time.perf_counter() - t0
    manifest = write_manifest(out_dir, cfg, outputs, started, _now(), argv,
                              extra=dict(wall_time_s=elapsed))
    log(f"wrote {len(outputs)} files and {manifest} in {elapsed:.1f} s")
    return outputs + [manifest]


def build_parser():
    parser = argparse.ArgumentParser(prog="stochch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"stochch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "run a preset or configured study"),
                            ("validate", "print the resolved config and cost estimates")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("preset_pos", nargs="?", metavar="PRESET",
                       help="test1-temporal, test1-spatial, test2, test3 or custom")
        p.add_argument("--preset")
        p.add_argument("--config", help="key-value config file")
        p.add_argument("--M", help="number of realizations")
        p.add_argument("--epsilon")
        p.add_argument("--delta")
        p.add_argument("--tau", help="time step, or comma-separated ladder for temporal studies")
        p.add_argument("--h", help="mesh size, or comma-separated ladder for spatial studies")
        p.add_argument("--T")
        p.add_argument("--seed", help="master seed")
        p.add_argument("--jobs", help="worker processes (1 = bitwise reproducible)")
        p.add_argument("--out-dir", default="stochch-out")
        p.add_argument("--snapshots", help="comma-separated snapshot times")
        p.add_argument("--quick", action="store_true", help="shrink to a smoke-test size")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(json.dumps(validate_report(cfg), indent=2, sort_keys=True))
        return 0
    try:
        run_experiment(cfg, args.out_dir, argv)
    except SolverFailure as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
