"""Command-line front end: ``fleetems run | sweep | verify``.

Exit codes: 0 ok, 1 configuration error, 2 runtime error, 3 failed verification.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .engine import EngineError, run
from .metrics import sweep as sweeps
from .model import GeometryError
from .protocol import ProtocolError
from .scenario import (
    ConfigError, Mode, ScenarioConfig, config_to_text, instantiate, load_config, parse_assignments,
)

OUT_ENV = "FLEETEMS_OUT"
DEFAULT_OUT = "fleetems-out"

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    # bad flags are configuration mistakes, not runtime failures
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="fleetems", description="Leader-based drone fleet energy simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def common(sp):
        sp.add_argument("config", nargs="?", help="key = value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a setting after the file is read (repeatable)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")

    r = sub.add_parser("run", help="run one scenario")
    common(r)

    s = sub.add_parser("sweep", help="sweep threshold or fleet size")
    common(s)
    s.add_argument("--axis", required=True, choices=sorted(sweeps.AXES))
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--modes", default="both", choices=["leader", "baseline", "both"])
    s.add_argument("--workers", type=int, default=1)

    v = sub.add_parser("verify", help="run the acceptance checks")
    v.add_argument("--only", help="comma-separated subset of: " + ",".join(_check_names()))
    return p


def _check_names():
    from .checks import CHECKS
    return CHECKS


def resolve_config(path: str | None, sets: list[str]) -> ScenarioConfig:
    try:
        base = load_config(path) if path else ScenarioConfig()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", "config") from None
    pairs = []
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", item)
        pairs.append((key.strip(), value.strip()))
    return parse_assignments(pairs, base)


def out_dir(arg: str | None) -> Path:
    path = Path(arg or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_manifest(out: Path, command: str, config_path, config: ScenarioConfig, **extra) -> None:
    manifest = {
        "tool": "fleetems",
        "version": __version__,
        "command": command,
        "config_path": str(config_path) if config_path else None,
        "config": config_to_text(config),
        "seed": config.seed,
        "output_dir": str(out),
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_run(args) -> int:
    config = resolve_config(args.config, args.set)
    out = out_dir(args.out)
    trace = run(instantiate(config))
    with open(out / "trace.csv", "w", newline="") as fh:
        trace.write_csv(fh)
    with open(out / "ledger.csv", "w", newline="") as fh:
        trace.ledger.write_csv(fh)
    summary = {k: _clean(v) for k, v in trace.summary.items()}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_manifest(out, "run", args.config, config)
    print(f"{config.mode.value} run: {trace.stopped_by} at t={trace.end_time}, "
          f"mean cluster lifetime {trace.report.mean_cluster_lifetime}, "
          f"{trace.report.election_count} elections")
    print(f"wrote {out}")
    return EXIT_OK


def _parse_values(axis: str, text: str) -> list:
    items = [v.strip() for v in text.split(",") if v.strip()]
    if not items:
        raise ConfigError("--values is empty", "values")
    try:
        return [int(v) if axis == "fleet_size" else float(v) for v in items]
    except ValueError:
        raise ConfigError(f"bad --values for {axis}: {text!r}", "values") from None


def cmd_sweep(args) -> int:
    config = resolve_config(args.config, args.set)
    values = _parse_values(args.axis, args.values)
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1", "reps")
    modes = [Mode.LEADER, Mode.BASELINE] if args.modes == "both" else [Mode(args.modes)]
    # reject bad axis values before any run starts
    for v in values:
        try:
            sweeps.apply_axis(config, args.axis, v)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc), args.axis) from None
    out = out_dir(args.out)
    rows, _ = sweeps.sweep(config, args.axis, values, args.reps, modes, workers=args.workers)
    with open(out / "sweep.csv", "w", newline="") as fh:
        sweeps.write_csv(rows, fh)
    write_manifest(out, "sweep", args.config, config, axis=args.axis, values=values,
                   reps=args.reps, modes=[m.value for m in modes])
    for row in rows:
        print(f"{row.axis}={row.value:g} {row.mode:8s} lifetime {row.mean_cluster_lifetime:10.1f} "
              f"± {row.std_cluster_lifetime:8.1f}  elections {row.election_count_mean:6.1f}")
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from . import checks

    only = [s.strip() for s in args.only.split(",") if s.strip()] if args.only else None
    unknown = [name for name in only or () if name not in checks.CHECKS]
    if unknown:
        raise ConfigError(f"unknown check(s): {', '.join(unknown)}", "only")
    results = checks.run_checks(only)
    for res in results:
        print(res.line(), flush=True)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"config error: {exc}{key}", file=sys.stderr)
        return EXIT_CONFIG
    except (EngineError, ProtocolError, GeometryError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
