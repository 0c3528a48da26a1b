"""Command-line front end: ``cagat {train,sweep,selftest,print-config}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .attention import DENSE_LIMIT
from .config import ConfigError, ExperimentConfig, coerce, dump_config, parse_config
from .io import BundleError, export_curves, export_results, load_bundle
from .selftest import format_report, run_selftest
from .training import SWEEP_AXES, TrainingError, run_repeated, sweep

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override it")
    group = p.add_argument_group("hyperparameters")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        extra = ["--lambda"] if f.name == "lam" else []
        group.add_argument(flag, *extra, dest=f"cfg_{f.name}", metavar=f.name.upper())
    group.add_argument("--no-dropout", action="store_true", help="set dropout to 0")
    group.add_argument("--no-weight-decay", action="store_true", help="set weight decay to 0")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True,
                   help="bundle directory, or a name resolved under $CAGAT_DATA_DIR")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel seed jobs")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--print-config", action="store_true", help="print the effective configuration and exit")
    _add_config_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cagat", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _add_run_flags(sub.add_parser("train", help="repeated-seed training and evaluation"))

    sw = sub.add_parser("sweep", help="one repeated run per value of a hyperparameter")
    sw.add_argument("--axis", required=True, help="alpha, lam (or lambda), or xi")
    sw.add_argument("--values", required=True, help="comma-separated values")
    _add_run_flags(sw)

    st = sub.add_parser("selftest", help="oracle and gradient checks on random instances")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)

    pc = sub.add_parser("print-config", help="print the effective configuration")
    _add_config_flags(pc)
    return parser


def resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        try:
            cfg = parse_config(Path(args.config).read_text(), cfg)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
    overrides = {}
    for f in fields(ExperimentConfig):
        raw = getattr(args, f"cfg_{f.name}")
        if raw is not None:
            key, value = coerce(f.name, raw)
            overrides[key] = value
    if args.no_dropout:
        overrides["dropout"] = 0.0
    if args.no_weight_decay:
        overrides["weight_decay"] = 0.0
    return cfg.replace(**overrides)


def resolve_data(name: str) -> Path:
    path = Path(name)
    if path.is_dir():
        return path
    root = os.environ.get("CAGAT_DATA_DIR")
    if root and (Path(root) / name).is_dir():
        return Path(root) / name
    raise BundleError(f"bundle {name!r} not found (checked ./{name} and $CAGAT_DATA_DIR)")


def _effective_mode(cfg: ExperimentConfig, n: int) -> str:
    if cfg.mode != "auto":
        return cfg.mode
    return "dense" if n <= DENSE_LIMIT else "masked"


def _write_outputs(out: Path, results, runs) -> None:
    out.mkdir(parents=True, exist_ok=True)
    export_results(results, out / "results.json", "json")
    export_results(results, out / "aggregate.csv", "csv")
    export_curves(runs, out / "curves.csv")


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if args.print_config:
        return _print(cfg)
    bundle = load_bundle(resolve_data(args.data))
    print(f"dataset {bundle.name}: n={bundle.n} edges={bundle.graph.num_edges} "
          f"d={bundle.num_features} c={bundle.num_classes}; mode={_effective_mode(cfg, bundle.n)}")
    agg = run_repeated(bundle, cfg, jobs=args.jobs)
    _write_outputs(Path(args.out), agg, agg.runs)
    print(f"test accuracy over {len(agg.runs)} seed(s): {100 * agg.mean:.2f} ± {100 * agg.std:.2f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    if args.print_config:
        return _print(cfg)
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"invalid axis {args.axis!r}; choose alpha, lam or xi")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"invalid --values {args.values!r}") from None
    if not values:
        raise ConfigError("--values is empty")
    bundle = load_bundle(resolve_data(args.data))
    print(f"dataset {bundle.name}: n={bundle.n}; mode={_effective_mode(cfg, bundle.n)}; axis={args.axis}")
    rows = sweep(bundle, args.axis, values, cfg, jobs=args.jobs)
    _write_outputs(Path(args.out), rows, [r for row in rows for r in row.result.runs])
    for row in rows:
        print(f"{row.axis}={row.value:g}: {100 * row.result.mean:.2f} ± {100 * row.result.std:.2f}")
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest(args.seed, corrupt=args.corrupt_backward)
    print(format_report(results, args.seed))
    return 0 if all(r.passed for r in results) else EXIT_NUMERIC


def _print(cfg: ExperimentConfig) -> int:
    sys.stdout.write(dump_config(cfg))
    return 0


def cmd_print_config(args) -> int:
    return _print(resolve_config(args))


COMMANDS = {"train": cmd_train, "sweep": cmd_sweep, "selftest": cmd_selftest, "print-config": cmd_print_config}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BundleError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
