"""
EG-OPO - Command Base
Shared shape of every CLI subcommand
"""

import json
import logging
from pathlib import Path
from typing import Any, ClassVar, Dict, Optional, Type

import aiofiles
import pandas as pd
from pydantic import BaseModel

from ..parsers.config_parser import load_config, parse_config

logger = logging.getLogger(__name__)


class Command:
    """
    SUBCOMMAND
    - name: the CLI word (egopo <name> --config <json> --out <dir>)
    - config_model: pydantic model the --config file is validated against
    - run: does the work and writes its files under the output directory
    """

    name: ClassVar[str] = ''
    help: ClassVar[str] = ''
    config_model: ClassVar[Type[BaseModel]]

    async def load(self, path: Optional[str]) -> BaseModel:
        """Config from file, or all defaults when no file is given"""
        if path is None:
            return parse_config({}, self.config_model)
        return await load_config(path, self.config_model)

    async def run(self, config: BaseModel, out: Path) -> Dict[str, Any]:
        raise NotImplementedError

    async def execute(self, path: Optional[str], out: Path) -> Dict[str, Any]:
        config = await self.load(path)
        out.mkdir(parents=True, exist_ok=True)
        return await self.run(config, out)


async def write_text(path: Path, text: str):
    async with aiofiles.open(path, 'w', encoding='utf-8') as f:
        await f.write(text)
    logger.info(f"Wrote {path}")


async def write_json(path: Path, data: Any):
    await write_text(path, json.dumps(data, indent=2))


async def write_frame(path: Path, frame: pd.DataFrame):
    await write_text(path, frame.to_csv(index=False, lineterminator='\n'))
