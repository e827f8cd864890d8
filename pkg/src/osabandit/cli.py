"""Command-line entry point: ``osa-sim --config figs/fig5.cfg --runs 50``.

Exit codes: 0 success, 2 configuration error, 3 some runs failed.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .harness import ConfigError, load_config, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _k_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osa-sim", description="Regret simulations for spectrum access learning rules.")
    p.add_argument("--config", help="INI experiment file; flags below override its values")
    p.add_argument("--policy", choices=("alg1", "alg2", "alg3", "alg4"))
    p.add_argument("--k", type=_k_list, help="access width, or a comma list such as 1,3,5,7")
    p.add_argument("--m", type=int, help="sensing width (partial sensing)")
    p.add_argument("--slots", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, matching the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s: %(message)s")
    overrides = {key: getattr(args, key) for key in ("policy", "k", "m", "slots", "runs", "seed", "out_dir")}
    try:
        config = load_config(args.config, overrides)
        result = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        for k, trace in result.traces.items():
            last = trace.mean_regret[-1] if trace.slots.size else float("nan")
            print(f"k={k}: {trace.runs} runs, mean R({config.slots}) = {last:.6g}")
        for path in result.files:
            print(f"wrote {path}")
    return EXIT_PARTIAL if result.any_failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
