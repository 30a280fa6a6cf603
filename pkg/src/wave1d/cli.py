"""Command line entry point: ``wave1d <command> --config <path|builtin>``."""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .harness import BUILTINS, load_config_text, parse_config, run_experiment
from .model import ConfigError

COMMANDS = {
    "solve": "solve",
    "swr": "swr",
    "classical": "classical",
    "sweep": "sweep",
    "order": "order",
    "energy-check": "energy-check",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wave1d", description="1-D semilinear wave solver and Schwarz experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True,
                   help=f"INI config, run manifest (.json), or a built-in name: {', '.join(BUILTINS)}")
    p.add_argument("--out", default="wave1d_out", help="output directory (WAVE1D_OUT overrides)")
    p.add_argument("--threads", type=int, default=1, help="threads for per-iteration subdomain solves")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        spec = parse_config(load_config_text(args.config), COMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = os.environ.get("WAVE1D_OUT") or args.out
    out = os.path.join(out, spec.name)
    try:
        manifest = run_experiment(spec, out, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    code = manifest.exit_code()
    status = {0: "ok", 3: "blow-up", 4: "not converged"}[code]
    print(f"{spec.name}: {len(manifest.runs)} run(s), {status}; artifacts in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
