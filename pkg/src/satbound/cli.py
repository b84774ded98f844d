"""Command-line entry point: ``satbound <command> [options]``.

Exit codes: 0 pass, 1 a checked assertion failed, 2 bad configuration,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import mpmath as mp
import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SUITES = {
    "concentration": ["degree-concentration", "core-degree", "clause-type-concentration", "peel-trace-vs-ode"],
    "simplicity": ["simplicity-rate"],
    "sat": ["sat-rate"],
    "tiny-exact": ["tiny-exact"],
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    gamma: str = "4.4898"
    M: int = 23
    digits: int = 50
    seeds: list = field(default_factory=lambda: list(range(10)))
    grid_per_dim: int = 20
    multistarts: int = 32
    n: int | None = None
    out: str | None = None
    trace: str | None = None
    experiments: list = field(default_factory=list)
    suite: list = field(default_factory=list)
    lo: str = "4.2"
    hi: str = "4.6"
    tol_gamma: str = "1e-4"
    jobs: int = 0
    dimacs: str | None = None
    stride: int | None = None

    def validate(self) -> "RunConfig":
        try:
            g = Fraction(str(self.gamma))
        except ValueError as exc:
            raise ConfigError(f"gamma {self.gamma!r} is not a number") from exc
        if g <= 0:
            raise ConfigError("gamma must be positive")
        if self.digits < 30:
            raise ConfigError("digits must be at least 30")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.grid_per_dim < 2:
            raise ConfigError("grid_per_dim must be at least 2")
        if self.multistarts < 0:
            raise ConfigError("multistarts must be non-negative")
        if self.n is not None and self.n < 3:
            raise ConfigError("n must be at least 3")
        if self.jobs < 0:
            raise ConfigError("jobs must be non-negative")
        return self

    @property
    def workers(self) -> int:
        return self.jobs or os.cpu_count() or 1


def _jsonable(obj, digits: int):
    if isinstance(obj, mp.mpf):
        return mp.nstr(obj, digits)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, float):
        return repr(obj)
    if isinstance(obj, (np.floating,)):
        return repr(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v, digits) for v in obj]
    return obj


_UNHASHED = {"out", "trace", "dimacs", "jobs"}


def _emit(command: str, config: RunConfig, result: dict, passed: bool) -> dict:
    body = {"command": command, "config": dataclasses.asdict(config), "passed": passed,
            "result": _jsonable(result, config.digits)}
    # the hash covers content only: output locations and worker count are left out
    hashed = dict(body, config={k: v for k, v in body["config"].items() if k not in _UNHASHED})
    text = json.dumps(hashed, sort_keys=True)
    body["sha256"] = hashlib.sha256(text.encode()).hexdigest()
    out = json.dumps(body, indent=2, sort_keys=True)
    if config.out:
        Path(config.out).write_text(out + "\n")
    print(out)
    return body


# --- commands ---------------------------------------------------------------

def cmd_bound(config: RunConfig) -> int:
    from .optimize import upper_bound_rate

    rep = upper_bound_rate(config.gamma, config.M, config.digits, config.multistarts, seed=config.seeds[0]
                           if config.seeds else 0)
    passed = bool(rep.rate < 1)
    _emit("bound", config, rep.to_dict(), passed)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_sweep(config: RunConfig) -> int:
    from .optimize import bisect_threshold

    res = bisect_threshold(config.lo, config.hi, config.tol_gamma, config.M, config.digits)
    if config.trace:
        with open(config.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "lo", "hi", "mid", "rate_mid"])
            for step, lo, hi, mid, r in res.trace:
                w.writerow([step] + [mp.nstr(v, config.digits) for v in (lo, hi, mid, r)])
    result = {"gamma_star": res.gamma_star, "lo": res.lo, "hi": res.hi, "rate_lo": res.rate_lo,
              "rate_hi": res.rate_hi, "steps": res.steps}
    _emit("sweep", config, result, True)
    return EXIT_OK


def cmd_experiments(config: RunConfig) -> int:
    from .verify import run_experiment, tiny_exact_suite

    names = list(config.experiments)
    for s in config.suite:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}; known: {sorted(SUITES)}")
        names += SUITES[s]
    if not names:
        raise ConfigError("no experiments selected (use --suite or --experiment)")
    reports = []
    for name in dict.fromkeys(names):
        if name == "tiny-exact":
            reports.append(tiny_exact_suite())
            continue
        params = {} if config.n is None else {"n": config.n}
        if name == "sat-rate":
            for g in ("3.5", "5.5"):
                reports.append(run_experiment(name, {"n": config.n or 150, "gamma": g}, config.seeds,
                                              config.workers))
            continue
        try:
            reports.append(run_experiment(name, params, config.seeds, config.workers))
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    passed = all(r.passed is not False for r in reports)
    _emit("experiments", config, {"reports": [r.to_dict() for r in reports]}, passed)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_grid(config: RunConfig) -> int:
    from .analytic import clause_type_ideals
    from .optimize import log_max_F, solve_lagrange
    from .polytope import build_constraints, grid_sweep

    with mp.workdps(config.digits):
        params = clause_type_ideals(config.gamma, config.M, config.digits)
        lmf = log_max_F(solve_lagrange(params), params)
    sysm = build_constraints(params)
    t0 = time.time()
    rep = grid_sweep(sysm, config.grid_per_dim, jobs=config.workers)
    elapsed = time.time() - t0
    if config.trace:
        rep.write_csv(config.trace)
    passed = rep.best is None or rep.best_value <= float(lmf) + 1e-12
    result = {"grid_per_dim": rep.grid, "box": rep.box, "best_ell": rep.best, "best_value": rep.best_value,
              "lagrange_log_max": lmf, "gap": rep.best_value - float(lmf) if rep.best else None,
              "feasible_slices": rep.feasible_count, "unconverged_slices": rep.unconverged_count}
    print(f"grid sweep took {elapsed:.1f} s", file=sys.stderr)
    _emit("grid", config, result, passed)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_lp_check(config: RunConfig) -> int:
    from .analytic import clause_type_ideals
    from .polytope import build_constraints, case2_point, lp_min_coordinate, strict_interior_point, \
        verify_case3_direction
    from .structure import LABELS

    params = clause_type_ideals(config.gamma, config.M, config.digits)
    sysm = build_constraints(params)
    mins = {s: lp_min_coordinate(sysm, ("ell", s)) for s in LABELS}
    interior = strict_interior_point(sysm)
    case2 = case2_point(sysm)
    case3 = verify_case3_direction(sysm)
    pattern = mins["nsr"].value == 0 and all(mins[s].value is not None and mins[s].value > 0
                                              for s in LABELS if s != "nsr")
    certified = all(r.certified for r in mins.values())
    passed = pattern and certified and case3 and interior.margin is not None and interior.margin > 0
    result = {
        "minima": {s: r.to_dict() for s, r in mins.items()},
        "only_nsr_can_vanish": pattern,
        "all_certified": certified,
        "case3_null_space": case3,
        "interior_margin": interior.margin,
        "case2_margin": case2.margin,
    }
    _emit("lp-check", config, result, passed)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_peel_stats(config: RunConfig) -> int:
    from .model import degree_sequence, sample_configuration, sample_uniform_formula
    from .peeling import has_pure_literal, peel

    n = config.n or 100_000
    rows = []
    for k, seed in enumerate(config.seeds):
        rng = np.random.default_rng(seed)
        f = sample_uniform_formula(n, config.gamma, rng)
        if k == 0 and config.dimacs:
            f.write(config.dimacs)
        conf = sample_configuration(degree_sequence(f), rng)
        stride = config.stride if (k == 0 and config.trace) else None
        tr = peel(conf, seed, record_stride=stride or (max(1, n // 1000) if k == 0 and config.trace else None))
        if k == 0 and config.trace:
            tr.write_csv(config.trace)
        rows.append({"seed": seed, "steps": tr.steps, "steps_per_n": tr.scaled_steps,
                     "core_clauses": tr.core.m, "core_pure_free": not has_pure_literal(tr.core)})
    passed = all(r["core_pure_free"] for r in rows)
    _emit("peel-stats", config, {"n": n, "runs": rows}, passed)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_selftest(config: RunConfig) -> int:
    from .optimize import naive_threshold, upper_bound_rate
    from .verify import tiny_exact_suite

    checks = {}
    checks["naive_threshold_5.191"] = mp.nstr(naive_threshold(), 4) == "5.191"
    checks["tiny_exact"] = bool(tiny_exact_suite().passed)
    rep = upper_bound_rate("4.4898", 23, 30, multistarts=2)
    checks["rate_below_one"] = bool(rep.rate < 1)
    passed = all(checks.values())
    _emit("selftest", config, {"checks": checks, "rate": rep.rate}, passed)
    return EXIT_OK if passed else EXIT_FAIL


COMMANDS = {
    "bound": cmd_bound,
    "sweep": cmd_sweep,
    "experiments": cmd_experiments,
    "grid": cmd_grid,
    "lp-check": cmd_lp_check,
    "peel-stats": cmd_peel_stats,
    "selftest": cmd_selftest,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="satbound", description="First-moment upper bound for random 3-SAT.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--gamma")
    p.add_argument("--M", type=int)
    p.add_argument("--digits", type=int)
    p.add_argument("--seeds", type=int, help="use seeds 0..SEEDS-1")
    p.add_argument("--grid", dest="grid_per_dim", type=int)
    p.add_argument("--multistarts", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--out", help="also write the JSON report here")
    p.add_argument("--trace", help="CSV trace path (sweep, grid, peel-stats)")
    p.add_argument("--experiment", dest="experiments", action="append")
    p.add_argument("--suite", action="append")
    p.add_argument("--lo")
    p.add_argument("--hi")
    p.add_argument("--tol-gamma", dest="tol_gamma")
    p.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")
    p.add_argument("--dimacs", help="write the first sampled formula here (peel-stats)")
    p.add_argument("--stride", type=int, help="snapshot stride for the peel trace")
    return p


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if isinstance(values.get("seeds"), int):
        values["seeds"] = list(range(values["seeds"]))
    if "gamma" in values:
        values["gamma"] = str(values["gamma"])
    unknown = set(values) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**values).validate()


def main(argv: list[str] | None = None) -> int:
    from .optimize import BracketError, NumericError

    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
