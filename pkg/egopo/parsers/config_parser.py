"""
EG-OPO - Config Parser
Loads JSON configuration files into pydantic models
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

import aiofiles
from pydantic import BaseModel, ValidationError

from ..errors import ConfigError

logger = logging.getLogger(__name__)

ModelT = TypeVar('ModelT', bound=BaseModel)


def parse_config(data: Dict[str, Any], model: Type[ModelT]) -> ModelT:
    """Validate a mapping; pydantic errors become ConfigError"""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        details = "; ".join(
            f"{'.'.join(str(part) for part in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid {model.__name__}: {details}") from e


def parse_config_text(text: str, model: Type[ModelT]) -> ModelT:
    try:
        data = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("Config root must be a JSON object")
    return parse_config(data, model)


async def load_config(path: Union[str, Path], model: Type[ModelT]) -> ModelT:
    """Read a JSON config file asynchronously and validate it"""
    try:
        async with aiofiles.open(path, 'r', encoding='utf-8') as f:
            text = await f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e

    config = parse_config_text(text, model)
    logger.info(f"Loaded {model.__name__} from {path}")
    return config
