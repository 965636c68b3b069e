"""Command-line front end.

Subcommands::

    vflshot gen-data --task xor_cross --n 2000 --out data.csv
    vflshot run [CONFIG] [key=value ...]
    vflshot compare REPORT REPORT [...] [--out table.csv]

Reports go to ``--report-dir``, else ``$VFLSHOT_REPORT_DIR``, else
``./reports``. Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""
import argparse
import os
import sys
from importlib import resources
from pathlib import Path

from . import kernels
from .config import ConfigError, load_config
from .data import DataError, gen_credit_like, gen_synthetic, generation_check, save_csv, write_manifest
from .experiment import build_split
from .metrics import compare_runs, format_table, read_report, write_compare_csv, write_report
from .protocol import run_method

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
REPORT_DIR_ENV = "VFLSHOT_REPORT_DIR"


def bundled_config(name):
    """Path of a config shipped with the package (``synthetic_xor`` or ``credit``)."""
    ref = resources.files("vflshot") / "configs" / f"{name}.cfg"
    if not ref.is_file():
        raise ConfigError([f"no bundled config named {name!r}"])
    return Path(str(ref))


def _fail(code, msg):
    print(f"error: {msg}", file=sys.stderr)
    return code


def cmd_gen_data(args):
    out = Path(args.out)
    manifest = Path(args.manifest) if args.manifest else out.with_suffix(".manifest.json")
    if args.kind == "credit_like":
        ds = gen_credit_like(args.n, seed=args.seed)
        params = {"kind": "credit_like", "n": args.n, "seed": args.seed}
        check = None
    else:
        ds = gen_synthetic(args.n, args.d_per_client, args.classes, args.task, args.noise, args.seed)
        params = {"kind": "synthetic", "task": args.task, "n": args.n,
                  "d_per_client": args.d_per_client, "classes": args.classes,
                  "noise": args.noise, "seed": args.seed}
        check = None if args.skip_check else generation_check(ds, args.d_per_client, seed=args.seed)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, out)
    write_manifest(manifest, params, check)
    print(out)
    return EXIT_OK


def cmd_run(args):
    path = args.config
    if args.preset:
        path = bundled_config(args.preset)
    cfg = load_config(path, args.overrides)
    report_dir = Path(args.report_dir or os.environ.get(REPORT_DIR_ENV) or "reports")
    split = build_split(cfg)
    report, session = run_method(split, cfg)
    target = Path(cfg.output) if cfg.output else report_dir / f"{report.run_id}.json"
    report.notes.insert(0, f"kernel backend: {kernels.BACKEND}; mask semantics: {cfg.mask_semantics}")
    write_report(report, target)
    session.ledger.to_csv(target.with_suffix(".ledger.csv"))
    print(target)
    return EXIT_OK


def cmd_compare(args):
    if len(args.reports) < 2:
        raise ConfigError(["compare needs at least two reports"])
    missing = [p for p in args.reports if not Path(p).is_file()]
    if missing:
        raise FileNotFoundError(f"report not found: {', '.join(missing)}")
    rows = compare_runs([read_report(p) for p in args.reports])
    print(format_table(rows))
    if args.out:
        write_compare_csv(rows, args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="vflshot", description="Communication-light vertical federated learning runs.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset CSV and its manifest")
    g.add_argument("--kind", choices=["synthetic", "credit_like"], default="synthetic")
    g.add_argument("--task", choices=["linear", "xor_cross"], default="xor_cross")
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--d-per-client", type=int, default=8)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--noise", type=float, default=0.5)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="CSV path")
    g.add_argument("--manifest", help="manifest path (default: next to the CSV)")
    g.add_argument("--skip-check", action="store_true", help="skip the holdout classifier check")
    g.set_defaults(func=cmd_gen_data)

    r = sub.add_parser("run", help="run one experiment and write its report")
    r.add_argument("config", nargs="?", help="key = value config file")
    r.add_argument("overrides", nargs="*", help="key=value overrides")
    r.add_argument("--preset", help="use a bundled config (synthetic_xor, credit)")
    r.add_argument("--report-dir", help=f"report directory (default ${REPORT_DIR_ENV} or ./reports)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="tabulate accuracy/AUC and communication of saved reports")
    c.add_argument("reports", nargs="+")
    c.add_argument("--out", help="write the table as CSV")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    # A lone "key=value" lands in the config slot when no file is given.
    if getattr(args, "config", None) and "=" in args.config and not Path(args.config).exists():
        args.overrides.insert(0, args.config)
        args.config = None
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, ValueError, NotImplementedError, OSError) as exc:
        return _fail(EXIT_RUNTIME, exc)


if __name__ == "__main__":
    sys.exit(main())
