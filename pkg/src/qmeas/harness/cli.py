"""``qmeas <experiment> --config FILE [--seed N] [--threads N] [--out PATH]``.

Exit status: 0 on success, 1 when a validation check fails, 2 on a
configuration error. The default thread count comes from ``QMEAS_THREADS``
and is overridden by ``--threads``.
"""
import argparse
import sys

from ..errors import ConfigError, QmeasError
from .config import EXPERIMENTS, build_config, load_config
from .experiments import run_experiment

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="qmeas", description="Continuous-measurement and feedback simulations.")
    parser.add_argument("experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", required=True, help="TOML configuration file")
    parser.add_argument("--seed", type=int, help="override master_seed")
    parser.add_argument("--threads", type=int, help="worker threads (default: $QMEAS_THREADS or 1)")
    parser.add_argument("--out", help="CSV output path; metadata goes to the same stem with .json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.experiment)
        if args.seed is not None:
            cfg = build_config(cfg.experiment, cfg.params, args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        table = run_experiment(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"qmeas: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QmeasError as exc:
        # invalid physical parameters are configuration problems from the CLI's view
        print(f"qmeas: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        table.write(args.out)
    else:
        sys.stdout.write(table.to_csv())
    if cfg.experiment == "validate":
        for line in table.metadata["summary"]:
            print(line, file=sys.stderr)
        return EXIT_OK if table.metadata["all_passed"] else EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
