#!/usr/bin/env python3
"""
EG-OPO - Command Line Entry Point
Minimax mixture-regret policy learning from multi-source bandit feedback
"""

import argparse
import asyncio
import importlib
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from egopo.errors import ConfigError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2


def configure_logging():
    """Console plus log file; EGOPO_LOG_LEVEL and EGOPO_LOG_FILE override the defaults"""
    level = os.getenv('EGOPO_LOG_LEVEL', 'INFO').upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(os.getenv('EGOPO_LOG_FILE', 'egopo.log')),
            logging.StreamHandler(sys.stdout)
        ]
    )


class EgopoCLI:
    """Subcommand registry; each command module registers itself through setup(cli)"""

    COMMAND_MODULES = [
        'egopo.commands.simulate',
        'egopo.commands.score',
        'egopo.commands.solve',
        'egopo.commands.experiment',
        'egopo.commands.cover_check',
    ]

    def __init__(self):
        self.commands: Dict[str, object] = {}

    def add_command(self, command):
        self.commands[command.name] = command

    def load_commands(self) -> bool:
        """Load all command modules"""
        failed = []
        for module_name in self.COMMAND_MODULES:
            try:
                importlib.import_module(module_name).setup(self)
                logger.debug(f"Loaded command module: {module_name}")
            except Exception as e:
                failed.append(module_name)
                logger.error(f"❌ Failed to load command module {module_name}: {e}")

        if failed:
            logger.error(f"❌ Failed command modules: {failed}")
            return False
        return True

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog='egopo', description=__doc__.strip().splitlines()[-1])
        subparsers = parser.add_subparsers(dest='command', required=True)
        for name, command in self.commands.items():
            sub = subparsers.add_parser(name, help=command.help)
            sub.add_argument('--config', help='JSON config file (defaults apply when omitted)')
            sub.add_argument('--out', required=True, help='output directory')
        return parser

    async def dispatch(self, args: argparse.Namespace) -> int:
        command = self.commands[args.command]
        try:
            outcome = await command.execute(args.config, Path(args.out))
        except (ConfigError, ValidationError) as e:
            logger.error(f"❌ Invalid configuration for {args.command}: {e}")
            return EXIT_CONFIG_ERROR
        except Exception as e:
            logger.error(f"❌ {args.command} failed: {e}")
            return EXIT_RUNTIME_ERROR

        summary = ', '.join(f"{key}={value}" for key, value in outcome.items())
        logger.info(f"✅ {args.command} complete -> {args.out}")
        logger.info(f"📊 {summary}")
        return EXIT_OK


async def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    app = EgopoCLI()
    if not app.load_commands():
        return EXIT_RUNTIME_ERROR
    args = app.build_parser().parse_args(argv)
    return await app.dispatch(args)


def cli():
    load_dotenv()
    configure_logging()
    try:
        sys.exit(asyncio.run(main()))
    except KeyboardInterrupt:
        logger.info("Received keyboard interrupt, shutting down...")
        sys.exit(EXIT_RUNTIME_ERROR)


if __name__ == "__main__":
    cli()
