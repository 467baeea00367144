"""Command-line entry point.

Only standard-library modules are imported at module load so that the
--threads flag can pin the BLAS/OpenMP thread count through environment
variables before any numerical library initializes. The heavy modules
are imported inside the command handlers.

Exit codes: 0 success, 2 invalid configuration or missing series,
3 numerical blowup (message carries the iteration), 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import ConfigError, NumericalBlowupError, SchemaError

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _pin_threads(threads: int | None) -> None:
    if threads is None:
        return
    if threads < 1:
        raise ConfigError(f"--threads must be >= 1, got {threads}")
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


def _load_config(args) -> dict:
    if args.config is None and args.experiment is None:
        raise ConfigError("provide --config <path> or --experiment <name>")
    raw: dict = {}
    if args.config is not None:
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if args.experiment is not None:
        raw["experiment"] = args.experiment
    if args.seed is not None:
        raw["seed"] = args.seed
    return raw


def _cmd_run(args) -> int:
    raw = _load_config(args)
    from .runner import ExperimentConfig, run

    out = run(ExperimentConfig.from_dict(raw), out_dir=args.out)
    print(out)
    return 0


def _cmd_compare(args) -> int:
    raw = _load_config(args)
    raw.setdefault("experiment", "reduction-equivalence")
    from .runner import ExperimentConfig, run

    cfg = ExperimentConfig.from_dict(raw)
    if cfg.experiment != "reduction-equivalence":
        raise ConfigError(
            f"compare-reduction needs a reduction-equivalence config, got {cfg.experiment!r}"
        )
    out = run(cfg, out_dir=args.out)
    print(out)
    return 0


def _cmd_emit(args) -> int:
    from .runner import emit_figure_data

    for path in emit_figure_data(args.run, args.figure):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfflow",
        description="Particle simulators for mean-field training flows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", help="path to a JSON config file")
        p.add_argument("--experiment", help="experiment name (defaults-only run)")
        p.add_argument("--out", help="output directory (default $MFFLOW_OUT/<name>-seed<seed>)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="cap BLAS/OpenMP workers (1 = reproducible)")

    p_run = sub.add_parser("run", help="execute one experiment and write its run directory")
    add_run_flags(p_run)
    p_run.set_defaults(handler=_cmd_run)

    p_cmp = sub.add_parser(
        "compare-reduction", help="full-flow vs reduced-flow loss comparison over a width sweep"
    )
    add_run_flags(p_cmp)
    p_cmp.set_defaults(handler=_cmd_compare)

    p_emit = sub.add_parser(
        "emit-figure-data", help="write tidy per-figure CSVs from a run directory"
    )
    p_emit.add_argument("--run", required=True, help="run directory to read")
    p_emit.add_argument("--figure", required=True, type=int, choices=(1, 2, 3))
    p_emit.add_argument("--threads", type=int, help="cap BLAS/OpenMP workers")
    p_emit.set_defaults(handler=_cmd_emit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _pin_threads(args.threads)
        return args.handler(args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
