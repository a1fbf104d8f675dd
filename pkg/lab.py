import os
import sys
import time
import signal
import logging
import argparse
import importlib
from typing import Dict, List, Optional

from bfbm import __version__
from bfbm.errors import LabError, UsageError
from utils.cache_manager import log_cache_stats
from utils.resources import process_memory_mb
from utils.run_config import OUTPUT_FORMATS, Cog, CommandSpec, load_config_file, resolve_config
from utils.workers import set_worker_count, shutdown_workers

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")

# Exit codes
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_USAGE = 2


class Lab:
    """Registry of subcommands; command modules add their cogs through setup(lab)"""

    def __init__(self):
        self.cogs: Dict[str, Cog] = {}
        self.commands: Dict[str, CommandSpec] = {}
        self.start_time = time.time()

    def add_cog(self, cog: Cog) -> None:
        name = type(cog).__name__
        if name in self.cogs:
            raise ValueError(f"cog {name} is already loaded")
        for spec in cog.get_commands():
            if spec.name in self.commands:
                raise ValueError(f"subcommand {spec.name} is registered twice")
            self.commands[spec.name] = spec
        self.cogs[name] = cog

    def load_extension(self, module_name: str) -> None:
        module = importlib.import_module(module_name)
        module.setup(self)

    def build_parser(self) -> argparse.ArgumentParser:
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", default=None, help="file of key = value lines; flags override it")
        common.add_argument("--out", default=None, help="output file (default stdout)")
        common.add_argument("--format", default=None, choices=OUTPUT_FORMATS, help="output format")
        common.add_argument("--log-level", default="INFO", choices=LOG_LEVELS, help="logging level (stderr)")
        common.add_argument("--workers", default=None, type=int, help="replica worker threads")

        parser = argparse.ArgumentParser(prog="lab.py", description="Branching fractional Brownian motion lab")
        parser.add_argument("--version", action="version", version=f"bfbm-lab {__version__}")
        subparsers = parser.add_subparsers(dest="command", metavar="command")
        for name in sorted(self.commands):
            spec = self.commands[name]
            sub = subparsers.add_parser(name, help=spec.description, description=spec.description,
                                        parents=[common], allow_abbrev=False)
            for opt in spec.options:
                if opt.flag:
                    sub.add_argument(f"--{opt.name}", dest=opt.dest, action="store_const", const=True,
                                     default=None, help=opt.help)
                else:
                    # converted later so config-file values go through the same checks
                    sub.add_argument(f"--{opt.name}", dest=opt.dest, default=None, help=opt.help)
        return parser

    def run(self, argv: Optional[List[str]] = None) -> int:
        parser = self.build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_USAGE if e.code else EXIT_OK
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE

        logging.getLogger().setLevel(getattr(logging, args.log_level))
        spec = self.commands[args.command]
        start_time = time.time()
        try:
            if args.workers is not None:
                if args.workers < 1:
                    raise UsageError(f"--workers must be positive, got {args.workers}")
                set_worker_count(args.workers)
            file_values = load_config_file(args.config) if args.config else {}
            config = resolve_config(spec.name, spec.options, vars(args), file_values,
                                    stochastic=spec.stochastic, fmt=spec.default_format, out=args.out)
            logging.info(f"Running {spec.name} with {config.params} (seed {config.seed})")
            code = spec.callback(config)
        except LabError as e:
            logging.error(f"{spec.name} failed: {e}")
            return EXIT_USAGE
        except Exception as e:
            logging.error(f"Unexpected error in {spec.name}: {e}")
            raise
        finally:
            log_cache_stats()
            logging.info(f"{spec.name} finished in {time.time() - start_time:.2f}s, "
                         f"memory {process_memory_mb():.1f} MB")
        return code


lab = Lab()


def load_commands() -> bool:
    """Load every command module"""
    commands_dir = os.path.join(os.path.dirname(os.path.abspath(__file__)), "commands")

    if not os.path.exists(commands_dir):
        logging.error(f"Commands directory not found at {commands_dir}")
        return False

    for filename in sorted(os.listdir(commands_dir)):
        if filename.endswith(".py") and not filename.startswith("_"):
            try:
                lab.load_extension(f"commands.{filename[:-3]}")
                logging.debug(f"Loaded extension: {filename[:-3]}")
            except Exception as e:
                logging.error(f"Failed to load extension {filename}: {e}")
                return False
    return True


def signal_handler(sig, frame):
    """Handle termination signals"""
    logging.info(f"Received signal {sig}, shutting down...")
    shutdown_workers()
    sys.exit(128 + sig)


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        stream=sys.stderr
    )
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    if not lab.commands and not load_commands():
        logging.error("Failed to load one or more command modules!")
        return EXIT_USAGE
    try:
        return lab.run(argv)
    finally:
        shutdown_workers()


if __name__ == "__main__":
    sys.exit(main())
