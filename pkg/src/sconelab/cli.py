"""Command-line entry point.

Subcommands:
  run            execute one method over the configured seeds
  compare        execute every configured method over every seed
  verify-theory  run the divergence/inequality sweep and emit its table

Common flags: --config PATH, --out DIR, --seeds LIST, --method NAME.
`--verify-theory` is also accepted as a top-level flag. All outputs are
deterministic functions of the config: metrics.csv (one row per
method/seed/timestep), summary.csv (per-timestep seed means), a config
echo, and one JSON-lines record stream per run.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile

import numpy as np

from .config import ConfigError, ExperimentSpec, default_spec, parse_config, serialize_spec
from .metrics import CSV_COLUMNS, MetricsRecord
from .theory import SWEEP_COLUMNS, run_verification_sweep
from .trainer import METHODS, run_stream

METRICS_HEADER = ("method", "seed") + CSV_COLUMNS
SUMMARY_HEADER = ("method", "t") + CSV_COLUMNS[1:]


def _fmt_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt_cell(cell) for cell in row) for row in rows)
    return "\n".join(lines) + "\n"


def _execute(spec: ExperimentSpec, methods) -> dict:
    """Run the (method, seed) grid; returns {(method, seed): [records]}."""
    results = {}
    for method in methods:
        for seed in spec.seeds:
            results[(method, seed)] = run_stream(spec.run_config(method, seed))
    return results


def _emit_outputs(spec: ExperimentSpec, methods, results: dict):
    out = spec.out_dir
    rows = []
    for method in methods:
        for seed in spec.seeds:
            for record in results[(method, seed)]:
                rows.append([method, seed] + record.to_row())
    if spec.emit in ("csv", "both"):
        _write_atomic(os.path.join(out, "metrics.csv"), _csv_text(METRICS_HEADER, rows))
        summary_rows = []
        num_t = spec.base_run.stream.num_timesteps
        for method in methods:
            per_t: list[list[MetricsRecord]] = [[] for _ in range(num_t)]
            for seed in spec.seeds:
                for record in results[(method, seed)]:
                    per_t[record.t].append(record)
            for t, bucket in enumerate(per_t):
                values = np.array([r.to_row()[1:] for r in bucket], dtype=float)
                summary_rows.append([method, t] + list(values.mean(axis=0)))
        _write_atomic(os.path.join(out, "summary.csv"), _csv_text(SUMMARY_HEADER, summary_rows))
    if spec.emit in ("json", "both"):
        for method in methods:
            for seed in spec.seeds:
                lines = [r.to_json() for r in results[(method, seed)]]
                _write_atomic(
                    os.path.join(out, f"run-{method}-seed{seed}.jsonl"),
                    "\n".join(lines) + "\n",
                )
    _write_atomic(os.path.join(out, "config_echo.ini"), serialize_spec(spec))


def _load_spec(args) -> ExperimentSpec:
    spec = parse_config(args.config) if args.config else default_spec()
    updates = {}
    if args.out:
        updates["out_dir"] = args.out
    if args.seeds:
        try:
            updates["seeds"] = tuple(int(s) for s in args.seeds.split(",") if s.strip())
        except ValueError:
            raise ConfigError(f"--seeds: not an integer list: {args.seeds!r}") from None
        if not updates["seeds"]:
            raise ConfigError("--seeds: empty list")
    if updates:
        from dataclasses import replace

        spec = replace(spec, **updates)
    return spec


def cmd_run(args) -> int:
    spec = _load_spec(args)
    method = args.method or spec.methods[0]
    if method not in METHODS:
        raise ConfigError(f"--method: unknown method {method!r}; choose from {METHODS}")
    results = _execute(spec, (method,))
    _emit_outputs(spec, (method,), results)
    print(f"run complete: method={method} seeds={list(spec.seeds)} -> {spec.out_dir}")
    return 0


def cmd_compare(args) -> int:
    spec = _load_spec(args)
    results = _execute(spec, spec.methods)
    _emit_outputs(spec, spec.methods, results)
    print(
        f"compare complete: methods={list(spec.methods)} seeds={list(spec.seeds)} "
        f"-> {spec.out_dir}"
    )
    return 0


def cmd_verify_theory(args) -> int:
    checks = run_verification_sweep()
    rows = [check.to_row() for check in checks]
    text = _csv_text(SWEEP_COLUMNS, rows)
    out_dir = getattr(args, "out", None)
    if out_dir:
        _write_atomic(os.path.join(out_dir, "theory_checks.csv"), text)
    for check in checks:
        status = "ok" if check.passed else "FAIL"
        print(
            f"{status:4s} {check.name:32s} trials={check.trials:<7d} "
            f"violations={check.violations:<4d} max_violation={check.max_violation:.3e}"
        )
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} properties hold")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sconelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to an INI experiment config")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--seeds", help="comma-separated seed list (overrides the config)")

    p_run = sub.add_parser("run", parents=[common], help="run a single method")
    p_run.add_argument("--method", help=f"method override, one of {METHODS}")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", parents=[common], help="run all configured methods")
    p_cmp.set_defaults(func=cmd_compare)

    p_thy = sub.add_parser("verify-theory", help="run the inequality sweep")
    p_thy.add_argument("--out", help="directory for theory_checks.csv")
    p_thy.set_defaults(func=cmd_verify_theory)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--verify-theory" in argv:
        argv.remove("--verify-theory")
        argv = ["verify-theory"] + argv
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
