"""Command-line front end.

Every output file embeds a run manifest (command, config, seed,
replications, delta, version) so that re-running it reproduces the file
byte for byte. Wall-clock time and worker count do not affect results
and go to ``run_log.jsonl`` in the output directory instead.

Exit codes: 0 success, 2 user or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .accreditation import (
    METHODS,
    AccreditationError,
    EstimatorSettings,
    accredit,
    factors_to_csv,
    rebase_reference,
    report_to_csv,
    report_to_dict,
    sum_of_members,
)
from .data import bundled_path
from .demand import (
    CurveError,
    curve_from_csv,
    curve_to_csv,
    native_demand_curve,
    system_demand_rmri,
    to_mric_curve,
)
from .engine import (
    CalibrationError,
    calibration_search,
    estimate_metrics,
    simulate_scenario,
    trace_to_csv,
)
from .exact import EnumerationTooLarge, enumerate_exact
from .market import (
    clear_auction,
    clearing_to_dict,
    level_curves,
    levels_to_csv,
    offers_from_json,
    rebase_curve,
    rebase_offers,
    schedule_to_csv,
)
from .sampling import BLOCK_SIZE, sample_profile_indices, sample_thermal_states
from .system import ConfigError, ThermalSpec, dump_system, parse_system_config

log = logging.getLogger("mricap")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 2, 3


class UserError(Exception):
    pass


# --------------------------------------------------------------------------
# helpers


def parse_range(text: str) -> list[float]:
    """``a:b:n`` -> n evenly spaced values from a to b; ``x,y,z`` -> a list."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise ValueError
            return [float(v) for v in np.linspace(float(a), float(b), n)]
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise UserError(f"bad range {text!r}; expected start:stop:count or a comma list") from None


def resolve_config(path: str) -> Path:
    p = Path(path)
    if p.is_file():
        return p
    bundled = bundled_path(p.name) if p.parent == Path(".") else None
    if bundled is not None:
        return Path(str(bundled))
    raise UserError(f"config not found: {path}")


def load_config(path: str):
    resolved = resolve_config(path)
    return parse_system_config(resolved.read_text(encoding="utf-8"))


# settings that cannot change results stay out of the manifest
_NOT_IN_MANIFEST = {"argv", "command", "config", "seed", "reps", "delta", "workers", "out", "verbose"}


def manifest(args, command: str, outputs: list[str]) -> dict:
    options = {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_IN_MANIFEST}
    return {
        "command": command,
        "config": getattr(args, "config", None),
        "options": options,
        "seed": args.seed,
        "replications": args.reps,
        "delta": args.delta,
        "outputs": outputs,
        "version": __version__,
    }


def settings_from(args, **extra) -> EstimatorSettings:
    return EstimatorSettings(
        delta=args.delta, replications=args.reps, seed=args.seed,
        two_sided=getattr(args, "two_sided", False),
        lole_delta=getattr(args, "lole_delta", 10.0),
        workers=args.workers, exact=getattr(args, "exact", False),
        detect_zero_margin=not getattr(args, "no_zero_margin", False), **extra)


class Writer:
    """Writes outputs to ``--out`` (or stdout when no directory is given)."""

    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.out = None if args.out is None else Path(args.out)
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[str] = []

    def manifest(self, names: list[str]) -> dict:
        return manifest(self.args, self.command, names)

    def _emit(self, name: str, text: str):
        if self.out is None:
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
        else:
            (self.out / name).write_text(text, encoding="utf-8")
        self.written.append(name)

    def json(self, name: str, result, names: list[str]):
        doc = {"manifest": self.manifest(names), "result": result}
        self._emit(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, body: str, names: list[str]):
        head = "# manifest: " + json.dumps(self.manifest(names), sort_keys=True) + "\n"
        self._emit(name, head + body)

    def text(self, name: str, body: str):
        self._emit(name, body)

    def log_run(self, started: float):
        if self.out is None:
            return
        entry = {"argv": self.args.argv, "workers": self.args.workers,
                 "wall_clock_s": round(time.time() - started, 3), "outputs": self.written}
        with open(self.out / "run_log.jsonl", "a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args, w: Writer):
    base = load_config(args.config)
    if args.exact:
        metrics = enumerate_exact(base)
    else:
        metrics = estimate_metrics(base, args.reps, args.seed, args.workers,
                                   detect_zero_margin=not args.no_zero_margin)
    outputs = ["metrics.json"]
    if args.trace is not None:
        outputs.append("trace.csv")
    if args.format == "csv":
        outputs[0] = "metrics.csv"
        d = metrics.to_dict()
        body = ",".join(d) + "\n" + ",".join("" if v is None else repr(v) for v in d.values()) + "\n"
        w.csv("metrics.csv", body, outputs)
    else:
        w.json("metrics.json", metrics.to_dict(), outputs)
    if args.trace is not None:
        outcome = _trace_scenario(base, args.seed, args.trace)
        w.csv("trace.csv", trace_to_csv(outcome), outputs)


def _trace_scenario(base, seed: int, replication: int):
    """Replay one Monte Carlo replication of the bank's draws."""
    if replication < 0:
        raise UserError("--trace replication index must be >= 0")
    block, row = divmod(replication, BLOCK_SIZE)
    k = int(sample_profile_indices(base.load, seed, block)[row])
    draws = {name: sample_thermal_states(name, spec, seed, block, base.horizon_hours)[row]
             for name, spec in base.resources.items() if isinstance(spec, ThermalSpec)}
    return simulate_scenario(base, k, draws)


def _groups(specs: list[str]) -> dict[str, list[str]]:
    groups = {}
    for spec in specs or []:
        if "=" not in spec:
            raise UserError(f"bad --group {spec!r}; expected NAME=a,b,...")
        name, members = spec.split("=", 1)
        groups[name] = [m for m in members.split(",") if m]
    return groups


def cmd_accredit(args, w: Writer):
    base = load_config(args.config)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UserError(f"unknown method(s): {unknown}; choose from {list(METHODS)}")
    groups = _groups(args.group)
    for g, members in groups.items():
        for m in members:
            if m not in base.resources:
                raise UserError(f"unknown resource {m!r} in group {g!r}")
    if args.reference is not None and args.reference not in base.resources:
        raise UserError(f"unknown reference resource {args.reference!r}")
    settings = settings_from(args)
    rebase_methods = list(methods)
    if args.reference is not None and "mric" not in rebase_methods:
        rebase_methods.append("mric")
    report = accredit(base, settings, rebase_methods, groups=groups)
    extra = [sum_of_members(report, members, f"{g} (sum of members)") for g, members in groups.items()]
    name = "accreditation." + args.format
    outputs = [name]
    if args.reference is not None:
        outputs.append("contribution_factors." + args.format)
    if args.format == "csv":
        w.csv(name, report_to_csv(report, extra), outputs)
    else:
        doc = report_to_dict(report)
        doc["group_sums"] = report_to_dict(replace(report, entries=extra))["entries"]
        w.json(name, doc, outputs)
    if args.reference is not None:
        rebased = rebase_reference(report, base, args.reference, settings)
        if args.format == "csv":
            w.csv(outputs[1], factors_to_csv(rebased), outputs)
        else:
            w.json(outputs[1], {
                "reference": rebased.reference, "beta": rebased.beta, "melcc_beta": rebased.melcc_beta,
                "perfect": [f.__dict__ for f in rebased.factors_perfect],
                "rebased": [f.__dict__ for f in rebased.factors_reference]}, outputs)


def cmd_curves(args, w: Writer):
    base = load_config(args.config)
    settings = settings_from(args)
    sweep = parse_range(args.sweep)
    native = native_demand_curve(base, sweep, settings, voll=args.voll)
    report = accredit(base, settings, methods=("mric",))
    rmri_sys = system_demand_rmri(report.entries)
    mric = to_mric_curve(native, rmri_sys)
    outputs = ["native_curve.csv", "mric_curve.csv"]
    w.csv(outputs[0], curve_to_csv(native), outputs)
    w.csv(outputs[1], curve_to_csv(mric), outputs)


def cmd_clear(args, w: Writer):
    try:
        offers = offers_from_json(Path(args.offers).read_text(encoding="utf-8"))
        curve = curve_from_csv(Path(args.curve).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UserError(f"file not found: {exc.filename}") from None
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise UserError(f"malformed offers file: {exc}") from None
    if args.rebase is not None:
        if not args.rebase > 0:
            raise UserError("--rebase must be > 0")
        offers = rebase_offers(offers, args.rebase)
        curve = rebase_curve(curve, args.rebase)
    result = clear_auction(offers, curve)
    outputs = ["clearing.json", "schedule.csv"]
    w.json(outputs[0], clearing_to_dict(result), outputs)
    w.csv(outputs[1], schedule_to_csv(result), outputs)


def cmd_levels(args, w: Writer):
    base = load_config(args.config)
    names = list(base.resources)
    if args.resources:
        pair = [r for r in args.resources.split(",") if r]
    else:
        pair = names[:2]
    if len(pair) != 2 or any(r not in base.resources for r in pair):
        raise UserError(f"--resources must name two resources of the config, got {pair}")
    grid = [g * base.native_capacity(pair[0]) for g in parse_range(args.grid)]
    curves = level_curves(base, (pair[0], pair[1]), grid, settings_from(args))
    for p in curves.points:
        if p.flag:
            log.warning("C1=%g omitted: %s", p.c1, p.flag)
    w.csv("levels.csv", levels_to_csv(curves), ["levels.csv"])


def cmd_calibrate(args, w: Writer):
    base = load_config(args.config)
    res = calibration_search(base, args.slack, args.target_lole, args.tol, args.reps, args.seed,
                             args.workers)
    m = w.manifest(["calibrated.json"])
    m["calibration"] = {"slack": args.slack, "slack_capacity": res.slack_capacity, "lole": res.lole,
                        "se_lole": res.se_lole, "iterations": res.iterations,
                        "target_lole": args.target_lole, "tol": args.tol}
    w.text("calibrated.json", dump_system(res.base, m) + "\n")


def read_manifest(path: str) -> dict:
    """Manifest embedded in a JSON or CSV output file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise UserError(f"file not found: {path}") from None
    if text.startswith("# manifest: "):
        return json.loads(text.splitlines()[0][len("# manifest: "):])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if not isinstance(doc, dict) or "manifest" not in doc:
        raise UserError(f"no run manifest in {path}")
    return doc["manifest"]


def manifest_argv(m: dict) -> list[str]:
    """Rebuild the command line that produced a manifest."""
    options = dict(m.get("options", {}))
    argv = [m["command"]]
    if m.get("config") is not None:
        argv.append(m["config"])
    if "offers" in options:
        argv.append(options.pop("offers"))
    for key, value in options.items():
        flag = "--" + key.replace("_", "-")
        if value is None or value is False:
            continue
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            for v in value:
                argv += [flag, str(v)]
        else:
            argv += [flag, str(value)]
    argv += ["--seed", str(m["seed"]), "--reps", str(m["replications"]), "--delta", repr(m["delta"])]
    return argv


def cmd_replay(args, w: Writer):
    m = read_manifest(args.file)
    if m.get("version") != __version__:
        log.warning("manifest written by version %s, running %s", m.get("version"), __version__)
    argv = manifest_argv(m) + ["--workers", str(args.workers)]
    if args.out is not None:
        argv += ["--out", args.out]
    log.info("replaying: %s", " ".join(argv))
    code = main(argv)
    if code != EXIT_OK:
        raise ReplayFailed(code)


class ReplayFailed(Exception):
    def __init__(self, code: int):
        super().__init__(f"replayed command exited with {code}")
        self.code = code


COMMANDS = {
    "simulate": cmd_simulate,
    "accredit": cmd_accredit,
    "curves": cmd_curves,
    "clear": cmd_clear,
    "levels": cmd_levels,
    "calibrate": cmd_calibrate,
    "replay": cmd_replay,
}


# --------------------------------------------------------------------------
# argument parsing


def _common(parser: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(42), help="random seed (default 42)")
    parser.add_argument("--reps", type=int, default=d(10_000), help="Monte Carlo replications (default 10000)")
    parser.add_argument("--delta", type=float, default=d(1.0), help="perturbation size in MW (default 1.0)")
    parser.add_argument("--out", default=d(None), help="output directory (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default=d("csv"), help="table format")
    parser.add_argument("--workers", type=int, default=d(1), help="worker threads (results do not depend on it)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mricap", description="Resource adequacy and capacity accreditation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _common(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        _common(p, suppress=True)
        return p

    p = add("simulate", "estimate EUE/LOLE/LOLH")
    p.add_argument("config")
    p.add_argument("--exact", action="store_true", help="exact enumeration instead of Monte Carlo")
    p.add_argument("--no-zero-margin", action="store_true", help="skip zero-margin MRI-hour detection")
    p.add_argument("--trace", type=int, metavar="REP", help="also write the hourly trace of one replication")

    p = add("accredit", "accredit every resource")
    p.add_argument("config")
    p.add_argument("--methods", default="ucap,mric,aelcc,melcc")
    p.add_argument("--group", action="append", metavar="NAME=a,b,...")
    p.add_argument("--reference", help="also report contribution factors against this resource")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--two-sided", action="store_true", help="central instead of forward differences")
    p.add_argument("--lole-delta", type=float, default=10.0, help="MW step for LOLE derivatives")
    p.add_argument("--no-zero-margin", action="store_true")

    p = add("curves", "native and MRIC demand curves")
    p.add_argument("config")
    p.add_argument("--voll", type=float, help="value of lost load, $/MWh (default: from config)")
    p.add_argument("--sweep", default="0.9:1.1:21", help="system scale factors start:stop:count")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--two-sided", action="store_true")

    p = add("clear", "clear an auction against a demand curve")
    p.add_argument("offers", help="JSON offers file")
    p.add_argument("--curve", required=True, help="demand curve CSV")
    p.add_argument("--rebase", type=float, help="express offers and curve in units of a reference with this beta")

    p = add("levels", "iso-EUE level curve of two resources")
    p.add_argument("config")
    p.add_argument("--grid", default="0.9:1.1:11", help="multiples of the first resource's capacity")
    p.add_argument("--resources", help="R1,R2 (default: first two resources)")
    p.add_argument("--exact", action="store_true")

    p = add("calibrate", "bisect a perfect slack resource to a LOLE target")
    p.add_argument("config")
    p.add_argument("--target-lole", type=float, required=True)
    p.add_argument("--slack", required=True)
    p.add_argument("--tol", type=float, default=0.005)

    p = add("replay", "re-run the command recorded in an output file's manifest")
    p.add_argument("file", help="any CSV or JSON output written by mricap")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USER if exc.code not in (0, None) else EXIT_OK
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.reps < 1:
        print("error: --reps must be >= 1", file=sys.stderr)
        return EXIT_USER
    if not args.delta > 0:
        print("error: --delta must be > 0", file=sys.stderr)
        return EXIT_USER
    started = time.time()
    try:
        w = Writer(args, args.command)
        COMMANDS[args.command](args, w)
        if args.command != "replay":
            w.log_run(started)
    except ReplayFailed as exc:
        return exc.code
    except (CurveError, CalibrationError, AccreditationError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UserError, ConfigError, EnumerationTooLarge, KeyError, FileNotFoundError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USER
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
