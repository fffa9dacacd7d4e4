import argparse
import logging
import sys
import time
from typing import Dict, List, Optional

from elapsed import __version__
from elapsed.errors import ConfigError, ElapsedError
from elapsed.models import ExperimentConfig, RunManifest, load_config, parse_config
from elapsed.runners import basin, check, relax, spectrum, steady
from elapsed.store import OutputStore
from elapsed.utils import config_hash, configure_logging

logger = logging.getLogger("elapsed")

# Include runners
COMMANDS = {runner.name: runner for runner in (steady, relax, spectrum, basin, check)}

EXIT_OK = 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elapsed", description="Time elapsed neuron network experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for runner in COMMANDS.values():
        cmd = sub.add_parser(runner.name, help=runner.description)
        cmd.add_argument("--config", help="JSON experiment file")
        cmd.add_argument("--out", help="run directory (overrides the config)")
        cmd.add_argument("--workers", type=int, help="worker threads for sweep points")
        cmd.add_argument("--seed", type=int, help="seed for randomized checks")
        cmd.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    elif args.command == "check":
        config = parse_config({"eps": [0.0, 0.05]})
    else:
        raise ConfigError(f"'{args.command}' needs --config")
    overrides: Dict[str, object] = {}
    if args.out is not None:
        overrides["out"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        config = parse_config({**config.model_dump(mode="json"), **overrides})
    return config


def execute(config: ExperimentConfig, command: str) -> RunManifest:
    store = OutputStore(config.out)
    store.write_json("config.json", config.model_dump(mode="json"))
    started = time.perf_counter()
    checks = COMMANDS[command].run(config, store)
    manifest = RunManifest(
        command=command,
        config_hash=config_hash(config),
        version=__version__,
        wall_clock=time.perf_counter() - started,
        checks=checks,
        status="ok" if all(checks.values()) else "checks_failed",
    )
    store.write_manifest(manifest)
    return manifest


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = resolve_config(args)
        manifest = execute(config, args.command)
    except ElapsedError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        return exc.exit_code
    failed = [name for name, ok in manifest.checks.items() if not ok]
    if failed:
        logger.warning("failed checks: %s", ", ".join(failed))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
