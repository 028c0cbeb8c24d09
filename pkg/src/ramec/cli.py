"""Command line entry point: ``ramec run | sweep | validate``.

Exit codes: 0 success, 1 configuration or usage error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .driver import SCHEMES, SWEEP_PARAMS, SweepSpec, draw_trial, run_benchmark, sweep, write_csv
from .scenario import ConfigError, Scenario, load_config

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty value list")
    return values


def _scheme_list(text: str) -> list[str]:
    schemes = [s for s in text.split(",") if s]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise argparse.ArgumentTypeError(f"schemes must come from {', '.join(SCHEMES)}")
    return schemes


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ramec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="one trial of one scheme")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="default: base_seed from the config")
    run.add_argument("--scheme", choices=SCHEMES, default="ra")
    run.add_argument("--out", required=True)
    run.add_argument("--no-timing", action="store_true", help="leave wall_ms empty (byte-stable output)")

    sw = sub.add_parser("sweep", help="Monte-Carlo sweep over one parameter")
    sw.add_argument("--config", required=True)
    sw.add_argument("--param", choices=sorted(SWEEP_PARAMS), required=True)
    sw.add_argument("--values", type=_float_list, required=True, help="comma separated, e.g. -3,0,3")
    sw.add_argument("--trials", type=int, default=50)
    sw.add_argument("--schemes", type=_scheme_list, default=list(SCHEMES))
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.add_argument("--no-timing", action="store_true", help="leave wall_ms empty (byte-stable output)")

    val = sub.add_parser("validate", help="run the oracle checks")
    val.add_argument("--config", default=None)
    return parser


def _scenario(path) -> Scenario:
    return load_config(path) if path else Scenario()


def _glue_values(argv: list[str]) -> list[str]:
    """Turn ``--values -3,0`` into ``--values=-3,0`` so a leading minus is not read as a flag."""
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--values" and i + 1 < len(argv):
            out.append(f"--values={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_glue_values(argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        scenario = _scenario(args.config)
        if args.command == "run":
            seed = scenario.base_seed if args.seed is None else args.seed
            real, rng = draw_trial(scenario, seed)
            record = run_benchmark(scenario, real, args.scheme, rng, seed=seed, trial=seed - scenario.base_seed)
            write_csv(args.out, [record], with_aggregates=False, timing=not args.no_timing)
            print(f"{args.scheme} seed {seed}: tau = {record.tau:.6g} s after {record.iterations} iterations")
        elif args.command == "sweep":
            spec = SweepSpec(args.param, args.values, args.trials, args.schemes)
            records = sweep(spec, scenario, workers=args.workers)
            write_csv(args.out, records, timing=not args.no_timing)
            print(f"wrote {len(records)} runs to {args.out}")
        else:
            from .validate import run_validation

            checks = run_validation(scenario)
            for c in checks:
                print(c.line())
            failed = sum(not c.passed for c in checks)
            print(f"{len(checks) - failed}/{len(checks)} checks passed")
            if failed:
                return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
