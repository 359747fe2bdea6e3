"""Command-line front door: run, list, and validate scenarios.

Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure.  The worker thread count comes from --threads or the
SLOWFAST_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys

from .builtins import list_builtins
from .errors import ConfigError, DomainError, IntegrationError
from .scenarios import ScenarioConfig, run_scenario


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slowfast",
                                description="slow-fast averaging experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario config")
    run.add_argument("config", help="path to a TOML scenario file")
    run.add_argument("--out-dir", default=None, help="override the output directory")
    run.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: SLOWFAST_THREADS or 1)")

    sub.add_parser("list", help="show the builtin system catalog")

    val = sub.add_parser("validate", help="check a scenario config and exit")
    val.add_argument("config", help="path to a TOML scenario file")
    return p


def _load(path: str, out_dir=None, threads=None) -> ScenarioConfig:
    cfg = ScenarioConfig.from_toml(path)
    if out_dir is not None:
        cfg.out_dir = out_dir
    if threads is None:
        threads = int(os.environ.get("SLOWFAST_THREADS", "1"))
    cfg.parallelism = max(1, threads)
    return cfg.validate()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            for name, desc in list_builtins().items():
                print(f"{name:16s} {desc}")
            return 0
        if args.command == "validate":
            cfg = _load(args.config)
            print(f"ok: {cfg.experiment} on {cfg.system} "
                  f"({len(cfg.eps_grid)} eps values, {cfg.n_paths} paths)")
            return 0
        cfg = _load(args.config, args.out_dir, args.threads)
        run_scenario(cfg)
        return 0
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
