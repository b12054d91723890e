"""Command-line front end: config parsing, experiment orchestration,
deterministic seeding, and table emission.

Exit codes: 0 success, 2 bad flags or guard violations, 3 any replica
abort (box escape is recorded, never silent), 4 I/O failure.  This module
contains no experiment logic; every numerical value in the outputs is
produced by the experiments module.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional

import numpy as np

from . import __version__
from .capacity import equilibrium_measure
from .experiments import (
    GuardError,
    run_approach,
    run_capacity_equivalence,
    run_moments,
    run_sausage_counts,
    run_strong_law,
    run_zero_set,
)
from .kernels import KernelError, parse_kernel_spec
from .paths import sample_brownian
from .records import ExperimentResult, write_records
from .seeding import mix_seed


class CliError(Exception):
    """Invalid invocation; maps to exit code 2."""


def parse_grid(spec: str) -> list[float]:
    """Grid syntax: a bare number, `start:stop:halving`, or
    `start:stop:linear:k`."""
    parts = spec.split(":")
    if len(parts) == 1:
        try:
            return [float(parts[0])]
        except ValueError:
            raise CliError(f"bad grid value {spec!r}") from None
    if len(parts) < 3:
        raise CliError(f"bad grid {spec!r}: expected start:stop:halving or start:stop:linear:k")
    try:
        start, stop = float(parts[0]), float(parts[1])
    except ValueError:
        raise CliError(f"bad grid endpoints in {spec!r}") from None
    mode = parts[2]
    if mode == "halving":
        if len(parts) != 3:
            raise CliError(f"bad grid {spec!r}: halving takes no extra arguments")
        if not (start > stop > 0):
            raise CliError(f"bad grid {spec!r}: need start > stop > 0 for halving")
        out = []
        x = start
        while x >= stop * (1.0 - 1e-12):
            out.append(x)
            x /= 2.0
        return out
    if mode == "linear":
        if len(parts) != 4:
            raise CliError(f"bad grid {spec!r}: linear needs a point count, start:stop:linear:k")
        try:
            k = int(parts[3])
        except ValueError:
            raise CliError(f"bad point count {parts[3]!r} in grid {spec!r}") from None
        if k < 1:
            raise CliError(f"bad grid {spec!r}: point count must be >= 1")
        return [float(v) for v in np.linspace(start, stop, k)]
    raise CliError(f"unknown grid mode {mode!r} in {spec!r}")


def parse_level_range(spec: str) -> tuple[int, int]:
    parts = spec.split(":")
    if len(parts) != 2:
        raise CliError(f"bad level range {spec!r}: expected lo:hi")
    try:
        lo, hi = int(parts[0]), int(parts[1])
    except ValueError:
        raise CliError(f"bad level range {spec!r}: levels must be integers") from None
    return lo, hi


def parse_floats(spec: str) -> list[float]:
    try:
        return [float(x) for x in spec.split(",")]
    except ValueError:
        raise CliError(f"bad comma-separated float list {spec!r}") from None


_COMMON_DEFAULTS = {
    "seed": 0,
    "format": "csv",
    "workers": None,  # resolved from CAPMC_WORKERS, default 1
    "config": None,
    "dump_path": None,
}

_EXPERIMENT_DEFAULTS = {
    "strong-law": {
        "dim": None, "steps": None, "sigma": None, "replicas": None,
        "out": None, "eval_factor": 16, "cutoff": 6,
    },
    "moments": {
        "dim": None, "sigma": None, "steps": 0, "replicas": 0,
        "out": None, "eval_factor": 16, "cutoff": 6,
    },
    "cap-equiv": {
        "dim": None, "steps": None, "replicas": None, "out": None,
        "alphas": "0.25,0.5,0.75,1.0,1.25,1.5,1.75", "n_max": 12, "plain": False,
    },
    "sausage": {
        "dim": None, "steps": None, "levels": None, "replicas": None, "out": None,
    },
    "zero-set": {
        "steps": None, "delta": None, "levels": None, "replicas": None,
        "out": None, "energy_alphas": "0.25",
    },
    "approach": {
        "dim": None, "alpha": None, "steps": None, "eps": None, "start": None,
        "mc_paths": None, "out": None, "dt": None, "t_max": None,
        "escape_factor": 20.0,
    },
    "equilibrium": {
        "points": None, "kernel": None, "out": None, "dim": None,
        "tol": 1e-6, "max_iters": 50_000,
    },
}

_REQUIRED = {
    "strong-law": ["dim", "steps", "sigma", "replicas", "out"],
    "moments": ["dim", "sigma", "out"],
    "cap-equiv": ["dim", "steps", "replicas", "out"],
    "sausage": ["dim", "steps", "levels", "replicas", "out"],
    "zero-set": ["steps", "delta", "levels", "replicas", "out"],
    "approach": ["dim", "alpha", "steps", "eps", "start", "mc_paths", "out"],
    "equilibrium": ["points", "kernel", "out"],
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="capmc",
        description="Kernel energies and capacities of simulated random fractal sets",
    )
    parser.add_argument("--version", action="version", version=f"capmc {__version__}")
    subs = parser.add_subparsers(dest="experiment", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                       help="master seed (default 0)")
        p.add_argument("--out", default=argparse.SUPPRESS, help="output table path")
        p.add_argument("--format", choices=["csv", "jsonl"], default=argparse.SUPPRESS)
        p.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                       help="replica worker count (default $CAPMC_WORKERS or 1)")
        p.add_argument("--config", default=argparse.SUPPRESS,
                       help="flat JSON config file; flags override file values")

    p = subs.add_parser("strong-law", help="self-intersection strong law")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--sigma", default=argparse.SUPPRESS,
                   help="sigma grid, e.g. 0.25:0.001953125:halving")
    p.add_argument("--replicas", type=int, default=argparse.SUPPRESS)
    p.add_argument("--eval-factor", dest="eval_factor", type=int, default=argparse.SUPPRESS)
    p.add_argument("--cutoff", type=int, default=argparse.SUPPRESS)
    p.add_argument("--dump-path", dest="dump_path", default=argparse.SUPPRESS,
                   help="write replica 0's path as CSV (debugging)")
    add_common(p)

    p = subs.add_parser("moments", help="moment quadratures, optional MC mean")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--sigma", default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--replicas", type=int, default=argparse.SUPPRESS)
    p.add_argument("--eval-factor", dest="eval_factor", type=int, default=argparse.SUPPRESS)
    p.add_argument("--cutoff", type=int, default=argparse.SUPPRESS)
    p.add_argument("--dump-path", dest="dump_path", default=argparse.SUPPRESS)
    add_common(p)

    p = subs.add_parser("cap-equiv", help="capacity equivalence across kernels")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--replicas", type=int, default=argparse.SUPPRESS)
    p.add_argument("--alphas", default=argparse.SUPPRESS, help="comma-separated kernel exponents")
    p.add_argument("--n-max", dest="n_max", type=int, default=argparse.SUPPRESS)
    p.add_argument("--plain", action="store_true", default=argparse.SUPPRESS,
                   help="d=2 negative control: drop the log adjustment")
    p.add_argument("--dump-path", dest="dump_path", default=argparse.SUPPRESS)
    add_common(p)

    p = subs.add_parser("sausage", help="Wiener-sausage box counts")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--levels", default=argparse.SUPPRESS, help="level range lo:hi")
    p.add_argument("--replicas", type=int, default=argparse.SUPPRESS)
    p.add_argument("--dump-path", dest="dump_path", default=argparse.SUPPRESS)
    add_common(p)

    p = subs.add_parser("zero-set", help="Brownian zero-set laws")
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--delta", default=argparse.SUPPRESS, help="delta grid")
    p.add_argument("--levels", default=argparse.SUPPRESS, help="level range lo:hi")
    p.add_argument("--replicas", type=int, default=argparse.SUPPRESS)
    p.add_argument("--energy-alphas", dest="energy_alphas", default=argparse.SUPPRESS)
    p.add_argument("--dump-path", dest="dump_path", default=argparse.SUPPRESS)
    add_common(p)

    p = subs.add_parser("approach", help="stable-process epsilon-approach probabilities")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS)
    p.add_argument("--alpha", type=float, default=argparse.SUPPRESS)
    p.add_argument("--steps", type=int, default=argparse.SUPPRESS)
    p.add_argument("--eps", default=argparse.SUPPRESS, help="epsilon grid")
    p.add_argument("--start", default=argparse.SUPPRESS, help="comma-separated start point")
    p.add_argument("--mc-paths", dest="mc_paths", type=int, default=argparse.SUPPRESS)
    p.add_argument("--dt", type=float, default=argparse.SUPPRESS)
    p.add_argument("--t-max", dest="t_max", type=float, default=argparse.SUPPRESS)
    p.add_argument("--escape-factor", dest="escape_factor", type=float, default=argparse.SUPPRESS)
    p.add_argument("--dump-path", dest="dump_path", default=argparse.SUPPRESS)
    add_common(p)

    p = subs.add_parser("equilibrium", help="equilibrium-measure solver on a points file")
    p.add_argument("--points", default=argparse.SUPPRESS, help="CSV of point coordinates")
    p.add_argument("--kernel", default=argparse.SUPPRESS,
                   help="kernel spec, e.g. smooth:eps=0.01:riesz:alpha=1")
    p.add_argument("--dim", type=int, default=argparse.SUPPRESS,
                   help="ambient dimension for smoothing (default: point dimension)")
    p.add_argument("--tol", type=float, default=argparse.SUPPRESS)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=argparse.SUPPRESS)
    add_common(p)
    return parser


def _resolve_config(experiment: str, cli_args: dict) -> dict:
    """defaults < config file < explicit flags; unknown config keys are errors."""
    resolved = dict(_COMMON_DEFAULTS)
    resolved.update(_EXPERIMENT_DEFAULTS[experiment])
    config_path = cli_args.get("config", None)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                file_conf = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config file {config_path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {config_path} is not valid JSON: {exc}") from None
        if not isinstance(file_conf, dict):
            raise CliError(f"config file {config_path} must hold a flat JSON object")
        for key, value in file_conf.items():
            attr = key.replace("-", "_")
            if attr not in resolved:
                raise CliError(f"unknown config key {key!r} for experiment {experiment!r}")
            resolved[attr] = value
    for key, value in cli_args.items():
        if key in ("experiment", "config"):
            continue
        resolved[key] = value
    missing = [k for k in _REQUIRED[experiment] if resolved.get(k) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise CliError(f"missing required flag(s): {flags}")
    if resolved["workers"] is None:
        resolved["workers"] = int(os.environ.get("CAPMC_WORKERS", "1"))
    return resolved


def _dump_first_path(conf: dict, experiment: str) -> None:
    """Regenerate the first path of the run and dump it as CSV."""
    target = conf.get("dump_path")
    if not target:
        return
    if experiment == "approach":
        seed = mix_seed(conf["seed"], 0)
        path = sample_brownian(conf["dim"], conf["steps"], 1.0, seed)
    elif experiment == "zero-set":
        path = sample_brownian(1, conf["steps"], 1.0, mix_seed(conf["seed"], 0))
    else:
        path = sample_brownian(conf["dim"], conf["steps"], 1.0, mix_seed(conf["seed"], 0))
    path.dump_csv(target)


def _run_equilibrium(conf: dict) -> ExperimentResult:
    import csv

    from .records import ExperimentRecord

    try:
        rows = []
        with open(conf["points"]) as fh:
            for line_no, line in enumerate(csv.reader(fh)):
                if not line:
                    continue
                try:
                    rows.append([float(x) for x in line])
                except ValueError:
                    if line_no == 0:
                        continue  # header row
                    raise CliError(
                        f"non-numeric row {line_no} in points file {conf['points']}"
                    ) from None
    except OSError as exc:
        raise CliError(f"cannot read points file {conf['points']}: {exc}") from None
    if not rows:
        raise CliError(f"points file {conf['points']} holds no points")
    points = np.asarray(rows, dtype=float)
    dim = conf["dim"] if conf["dim"] is not None else points.shape[1]
    try:
        kernel = parse_kernel_spec(conf["kernel"], dim=dim)
    except KernelError as exc:
        raise CliError(str(exc)) from None
    try:
        res = equilibrium_measure(points, kernel, tol=conf["tol"], max_iters=conf["max_iters"])
    except ValueError as exc:
        raise CliError(str(exc)) from None
    records = [
        ExperimentRecord(
            "equilibrium", 0, i, float(w), "n/a", {}, conf["seed"]
        )
        for i, w in enumerate(res.weights)
    ]
    records.append(
        ExperimentRecord(
            "equilibrium-energy", -1, 0, res.energy,
            "n/a",
            {
                "capacity": math.inf if res.energy == 0 else 1.0 / res.energy,
                "gap": res.gap,
                "iterations": res.iterations,
                "converged": res.converged,
                "min_rayleigh": res.min_rayleigh,
            },
            conf["seed"],
        )
    )
    metadata = {
        "experiment": "equilibrium",
        "points": conf["points"],
        "kernel": conf["kernel"],
        "tol": conf["tol"],
        "max_iters": conf["max_iters"],
        "master_seed": conf["seed"],
        "version": __version__,
    }
    return ExperimentResult(records, metadata, [])


def _dispatch(experiment: str, conf: dict) -> ExperimentResult:
    if experiment == "strong-law":
        return run_strong_law(
            conf["dim"], conf["steps"], parse_grid(conf["sigma"]), conf["replicas"],
            conf["seed"], eval_factor=conf["eval_factor"], cutoff=conf["cutoff"],
            workers=conf["workers"],
        )
    if experiment == "moments":
        return run_moments(
            conf["dim"], parse_grid(conf["sigma"]), conf["seed"],
            n_steps=conf["steps"], replicas=conf["replicas"],
            eval_factor=conf["eval_factor"], cutoff=conf["cutoff"],
            workers=conf["workers"],
        )
    if experiment == "cap-equiv":
        alphas = conf["alphas"]
        if isinstance(alphas, str):
            alphas = parse_floats(alphas)
        return run_capacity_equivalence(
            conf["dim"], conf["steps"], conf["replicas"], conf["seed"],
            alphas=alphas, n_max=conf["n_max"], plain=bool(conf["plain"]),
            workers=conf["workers"],
        )
    if experiment == "sausage":
        return run_sausage_counts(
            conf["dim"], conf["steps"], parse_level_range(conf["levels"]),
            conf["replicas"], conf["seed"], workers=conf["workers"],
        )
    if experiment == "zero-set":
        alphas = conf["energy_alphas"]
        if isinstance(alphas, str):
            alphas = parse_floats(alphas)
        return run_zero_set(
            conf["steps"], parse_grid(conf["delta"]), parse_level_range(conf["levels"]),
            conf["replicas"], conf["seed"], energy_alphas=alphas,
            workers=conf["workers"],
        )
    if experiment == "approach":
        return run_approach(
            conf["dim"], conf["alpha"], conf["steps"], parse_grid(conf["eps"]),
            parse_floats(conf["start"]) if isinstance(conf["start"], str) else conf["start"],
            conf["mc_paths"], conf["seed"], dt=conf["dt"], t_max=conf["t_max"],
            escape_factor=conf["escape_factor"], workers=conf["workers"],
        )
    if experiment == "equilibrium":
        return _run_equilibrium(conf)
    raise CliError(f"unknown experiment {experiment!r}")


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = vars(parser.parse_args(argv))
    experiment = args["experiment"]
    try:
        conf = _resolve_config(experiment, args)
        result = _dispatch(experiment, conf)
    except (CliError, GuardError, KernelError) as exc:
        print(f"capmc: error: {exc}", file=sys.stderr)
        return 2
    try:
        write_records(result, conf["out"], conf["format"])
        _dump_first_path(conf, experiment)
    except OSError as exc:
        print(f"capmc: I/O error: {exc}", file=sys.stderr)
        return 4
    if result.aborts:
        for replica, reason in result.aborts:
            print(f"capmc: replica {replica} aborted: {reason}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
