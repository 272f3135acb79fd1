"""stab: verification suites for shrinking Ricci solitons.

Usage:
    stab run --config run.ini       Run the configured suites, write a report
    stab fixtures                   List registered fixtures
    stab diff old.json new.json --rtol 1e-8
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import SchemaError, UnknownFixtureError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _apply_threads() -> None:
    threads = os.environ.get("STAB_THREADS")
    if not threads:
        return
    n = int(threads)
    flags = os.environ.get("XLA_FLAGS", "")
    os.environ["XLA_FLAGS"] = f"{flags} --xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={n}".strip()
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def cmd_run(args) -> int:
    from .config import SUITE_ORDER, load_config
    from .report import build_report, checks_csv, dumps, write_atomic
    from .suites import run_suite

    try:
        cfg = load_config(args.config)
    except (SchemaError, UnknownFixtureError, ValueError) as exc:
        print(f"stab: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    results = []
    for name in sorted(cfg.suites, key=SUITE_ORDER.get):
        res = run_suite(name, cfg)
        results.append(res)
        print(f"[{res.status:>7}] {name} ({len(res.checks)} checks)")
    report = build_report(cfg, results)
    out = cfg.output_path
    if cfg.format == "json":
        write_atomic(out, dumps(report))
    else:
        write_atomic(out, checks_csv(report))
    for res in results:
        if "_csv" in res.data:
            stem = os.path.splitext(out)[0]
            write_atomic(f"{stem}.{res.name}.csv", res.data["_csv"])
    if not report["passed"]:
        ff = report["first_failure"]
        print(f"stab: FAILED {ff['suite']}/{ff['name']}: value {ff['value']} "
              f"tolerance {ff['tolerance']} {ff['detail']}".rstrip(), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_fixtures(args) -> int:
    from .fixtures import FIXTURE_NAMES
    from .soliton import SOLITON_FIXTURES

    for name in FIXTURE_NAMES:
        print(name)
    print("shrinking solitons:", ", ".join(SOLITON_FIXTURES))
    return EXIT_OK


def cmd_diff(args) -> int:
    from .report import report_diff

    try:
        with open(args.old) as fh:
            old = json.load(fh)
        with open(args.new) as fh:
            new = json.load(fh)
        drift = report_diff(old, new, args.rtol, args.atol)
    except (OSError, ValueError, SchemaError) as exc:
        print(f"stab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for d in drift:
        rel = "n/a" if d["rel"] is None else f"{d['rel']:.3e}"
        print(f"{d['field']}: {d['old']!r} -> {d['new']!r} (rel {rel})")
    print(f"{len(drift)} field(s) drift beyond rtol {args.rtol}")
    return EXIT_OK if not drift else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run suites from a config file")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)
    f = sub.add_parser("fixtures", help="list registered fixtures")
    f.set_defaults(func=cmd_fixtures)
    d = sub.add_parser("diff", help="compare two reports")
    d.add_argument("old")
    d.add_argument("new")
    d.add_argument("--rtol", type=float, default=1e-8)
    d.add_argument("--atol", type=float, default=0.0)
    d.set_defaults(func=cmd_diff)
    return p


def main(argv=None) -> int:
    _apply_threads()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
