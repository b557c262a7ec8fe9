"""Command line entry point.

Exit codes: 0 success, 1 property or acceptance failure, 2 usage or config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ._io import write_csv, write_text_atomic
from .bounds import CERTIFICATE_HEADER
from .config import RunConfig, load_config
from .data import dataset_to_csv
from .errors import ClosureNotCertified, ConfigError, DatasetFormatError, NotIdempotent, NotInDomain
from .risk import RISK_HEADER, check_canonical
from . import pipeline

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
COMMANDS = ("kl-demo", "axioms-check", "gen-data", "certify", "compare", "sweep")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(parser, default):
    parser.add_argument("--config", type=Path, default=default, help="flat key=value run config")
    parser.add_argument("--seed", type=int, default=default, help="overrides run.seed")
    parser.add_argument("--out", type=Path, default=default, help="output directory (overrides run.out_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqpac", description="PAC-Bayes certificates for equivariant models.")
    _global_flags(parser, None)
    # the same flags after the subcommand; SUPPRESS keeps values given before it
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    demo = sub.add_parser("kl-demo", parents=[common], help="Gaussian KL split on the swap-symmetric linear example")
    demo.add_argument("--projection", choices=("average", "identity", "corrupt"), default="average")
    sub.add_parser("axioms-check", parents=[common], help="run the property battery on the configured scenario")
    sub.add_parser("gen-data", parents=[common], help="write prior/train/val/representative splits")
    sub.add_parser("certify", parents=[common], help="fit baseline and equivariant posteriors and emit all certificates")
    sub.add_parser("compare", parents=[common], help="test-error histograms and bound values for both models")
    sub.add_parser("sweep", parents=[common], help="one certificate per point of the sweep.* grid")
    return parser


def _resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.set("run.seed", args.seed)
    if args.out is not None:
        cfg.set("run.out_dir", str(args.out))
    return cfg, Path(cfg["run.out_dir"])


def _emit_config(cfg: RunConfig, out: Path) -> None:
    write_text_atomic(out / "resolved_config.txt", cfg.resolved_text())


def cmd_kl_demo(args, cfg: RunConfig, out: Path) -> int:
    rows, match = pipeline.kl_demo(args.projection)
    write_csv(out / "kl_demo.csv", pipeline.KL_DEMO_HEADER, rows)
    _, total, push, residual = rows[0][:4]
    print(f"total={total!r} pushforward={push!r} residual={residual!r} match={match}")
    return EXIT_OK if match else EXIT_FAILURE


def cmd_axioms_check(args, cfg: RunConfig, out: Path, group_override=None) -> int:
    results = pipeline.run_axioms(cfg, group_override)
    write_csv(out / "axioms.csv", pipeline.AXIOMS_HEADER, [r.row() for r in results])
    _emit_config(cfg, out)
    for r in results:
        print(f"{r.suite:22s} {r.status}{'  ' + r.detail if r.detail else ''}")
    failed = [r.suite for r in results if r.status == "fail"]
    if failed:
        print(f"first failing suite: {failed[0]}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def cmd_gen_data(args, cfg: RunConfig, out: Path) -> int:
    seed = cfg.require_seed()
    spec = pipeline.scenario_from_config(cfg)
    splits = pipeline.generate_splits(spec, cfg, seed)
    check_canonical(splits["representatives"].X, spec.resolver)
    manifest = []
    for name, ds in splits.items():
        write_text_atomic(out / f"{name}.csv", dataset_to_csv(ds))
        manifest.append([name, len(ds), seed, spec.name, f"{name}.csv"])
    write_csv(out / "manifest.csv", ["split", "n", "seed", "scenario", "path"], manifest)
    _emit_config(cfg, out)
    print(", ".join(f"{name}={len(ds)}" for name, ds in splits.items()))
    return EXIT_OK


def cmd_certify(args, cfg: RunConfig, out: Path) -> int:
    result = pipeline.run_certify(cfg)
    write_csv(out / "certificates.csv", CERTIFICATE_HEADER, result["rows"])
    write_csv(out / "risks.csv", RISK_HEADER, result["risk_rows"])
    _emit_config(cfg, out)
    for row in result["rows"]:
        print(f"{row[0]:12s} {row[1]:15s} {row[2]:8s} rhs={row[3]}")
    return EXIT_OK


def cmd_compare(args, cfg: RunConfig, out: Path) -> int:
    result = pipeline.run_compare(cfg)
    write_csv(out / "histogram.csv", pipeline.HISTOGRAM_HEADER, result["histogram"])
    write_csv(out / "summary.csv", pipeline.SUMMARY_HEADER, result["summary"])
    _emit_config(cfg, out)
    for row in result["summary"]:
        print(f"{row[0]:12s} rhs={row[2]:.6f} mean_test_error={row[4]:.6f}")
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig, out: Path) -> int:
    rows = pipeline.run_sweep(cfg)
    write_csv(out / "sweep.csv", pipeline.SWEEP_HEADER, rows)
    _emit_config(cfg, out)
    print(f"{len(rows)} grid points")
    return EXIT_OK


HANDLERS = {
    "kl-demo": cmd_kl_demo, "axioms-check": cmd_axioms_check, "gen-data": cmd_gen_data,
    "certify": cmd_certify, "compare": cmd_compare, "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, out = _resolve(args)
        return HANDLERS[args.command](args, cfg, out)
    except (ConfigError, NotIdempotent, ClosureNotCertified) as exc:
        print(f"eqpac: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetFormatError, NotInDomain) as exc:
        print(f"eqpac: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
