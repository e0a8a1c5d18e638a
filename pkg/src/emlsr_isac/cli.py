"""Command-line entry point: run a seed sweep and write the result table.

Exit codes: 0 on success, 1 for configuration errors, 2 when
``--check-trends`` finds a failing trend.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, NetworkConfig, TimingConfig, load_config
from .experiments import SweepSpec, compare_schemes, format_csv, load_sweep, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_TRENDS = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emlsr-isac",
        description="Simulate time-based ISAC over an EMLSR AP MLD and sweep its parameters.")
    parser.add_argument("--config", type=Path, help="TOML network/timing config")
    parser.add_argument("--sweep", help="TOML sweep file, or 'default' for the bundled sweep")
    parser.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    parser.add_argument("--seeds", type=int, help="seeds per sweep point (overrides the sweep)")
    parser.add_argument("--trace", action="store_true",
                        help="write one event trace per run next to the CSV")
    parser.add_argument("--check-trends", action="store_true",
                        help="evaluate the trend report; exit 2 if any trend fails")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: CPU count)")
    return parser


def _spec(args) -> SweepSpec:
    if args.sweep is not None:
        spec = load_sweep(args.sweep)
        if args.config is not None:
            base, timing = load_config(args.config)
            spec = dataclasses.replace(spec, base=base, timing=timing)
    else:
        if args.config is not None:
            base, timing = load_config(args.config)
        else:
            base, timing = NetworkConfig(), TimingConfig()
        spec = SweepSpec(base=base, timing=timing, alpha=(base.alpha,), k=(base.k,),
                         M=(base.n_stas,), scheme=(base.scheme.value,),
                         mode=(base.mode.value,), seeds=1, base_seed=base.seed)
    if args.seeds is not None:
        spec = dataclasses.replace(spec, seeds=args.seeds)
    return spec


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec(args)
        spec.validate()
    except (ConfigError, OSError) as exc:
        violations = exc.violations if isinstance(exc, ConfigError) else [str(exc)]
        print("configuration error:", file=sys.stderr)
        for v in violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out if args.out is not None else spec.out
    trace_dir = None
    if args.trace:
        stem = out.with_suffix("") if out is not None else Path("emlsr_traces")
        trace_dir = Path(f"{stem}_traces")
    rows = run_sweep(spec, out=out, workers=args.workers, trace_dir=trace_dir)
    if out is None:
        sys.stdout.write(format_csv(rows))
    if args.check_trends:
        lines = compare_schemes(rows)
        for line in lines:
            print(line, file=sys.stderr if out is None else sys.stdout)
        if not all(line.passed for line in lines):
            return EXIT_TRENDS
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
