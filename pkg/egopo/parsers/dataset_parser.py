"""
EG-OPO - Dataset Parser
Reads and writes multi-source bandit-feedback CSV files
"""

import io
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Optional, Union

import aiofiles
import numpy as np
import pandas as pd

from ..errors import DatasetParseError
from ..models.dataset import ObservationalDataset, SourceData

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DatasetParser:
    """
    DATASET PARSER
    - header: source,x0,...,x{p-1},action,reward[,propensity]
    - rows grouped by source in first-appearance order
    - every error names the 1-based data row (header excluded)
    - floats are written with repr() so load(save(d)) is bit-exact
    """

    def __init__(self, action_count: Optional[int] = None):
        self.action_count = action_count

    # Reading

    def parse_text(self, text: str) -> ObservationalDataset:
        """Parse CSV text into a validated dataset"""
        try:
            frame = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False,
                                skipinitialspace=True)
        except pd.errors.EmptyDataError:
            raise DatasetParseError("file is empty; a header row is required")
        except pd.errors.ParserError as e:
            match = re.search(r'line (\d+)', str(e))
            row = int(match.group(1)) - 1 if match else None
            raise DatasetParseError(f"malformed row: {e}", row=row)

        context_dim, has_propensity = self._check_header(list(frame.columns))
        if frame.empty:
            raise DatasetParseError("no observations after the header")

        grouped: Dict[str, Dict[str, List]] = {}
        max_action = 0
        for position, record in enumerate(frame.itertuples(index=False, name=None)):
            row = position + 1
            if any(not isinstance(cell, str) or cell == '' for cell in record):
                raise DatasetParseError("missing field (inconsistent column count)", row=row)

            source_id = record[0].strip()
            context = [self._parse_float(record[1 + j], f"x{j}", row) for j in range(context_dim)]
            action = self._parse_action(record[1 + context_dim], row)
            reward = self._parse_float(record[2 + context_dim], "reward", row)
            propensity = None
            if has_propensity:
                propensity = self._parse_float(record[3 + context_dim], "propensity", row)
                if not 0.0 < propensity <= 1.0:
                    raise DatasetParseError(f"propensity {propensity!r} outside (0, 1]", row=row)

            max_action = max(max_action, action)
            columns = grouped.setdefault(source_id, {'contexts': [], 'actions': [], 'rewards': [],
                                                     'propensities': []})
            columns['contexts'].append(context)
            columns['actions'].append(action)
            columns['rewards'].append(reward)
            columns['propensities'].append(propensity)

        action_count = self.action_count if self.action_count is not None else max(2, max_action + 1)
        sources = []
        for source_id, columns in grouped.items():
            propensities = np.array(columns['propensities'], dtype=float) if has_propensity else None
            sources.append(SourceData(
                source_id=source_id,
                contexts=np.array(columns['contexts'], dtype=float).reshape(-1, context_dim),
                actions=np.array(columns['actions'], dtype=np.int64),
                rewards=np.array(columns['rewards'], dtype=float),
                logged_propensities=propensities,
            ))

        dataset = ObservationalDataset(tuple(sources), context_dim, action_count)
        logger.debug(f"Parsed {dataset.total_size} rows from {dataset.num_sources} sources (p={context_dim})")
        return dataset

    def _check_header(self, columns: List[str]):
        columns = [c.strip() for c in columns]
        if len(columns) < 4 or columns[0] != 'source':
            raise DatasetParseError(f"header must start with 'source' and hold at least one context column: {columns}")
        has_propensity = columns[-1] == 'propensity'
        tail = ['action', 'reward', 'propensity'] if has_propensity else ['action', 'reward']
        if columns[-len(tail):] != tail:
            raise DatasetParseError(f"header must end with {','.join(tail)}: {columns}")
        context_columns = columns[1:-len(tail)]
        expected = [f"x{j}" for j in range(len(context_columns))]
        if not context_columns or context_columns != expected:
            raise DatasetParseError(f"context columns must be x0..x{{p-1}}, got {context_columns}")
        return len(context_columns), has_propensity

    def _parse_float(self, cell: str, column: str, row: int) -> float:
        try:
            value = float(cell)
        except ValueError:
            raise DatasetParseError(f"column {column}: '{cell}' is not a number", row=row)
        if not math.isfinite(value):
            raise DatasetParseError(f"column {column}: value must be finite", row=row)
        return value

    def _parse_action(self, cell: str, row: int) -> int:
        try:
            action = int(cell)
        except ValueError:
            raise DatasetParseError(f"action '{cell}' is not an integer", row=row)
        if action < 0 or (self.action_count is not None and action >= self.action_count):
            upper = self.action_count if self.action_count is not None else 'd'
            raise DatasetParseError(f"action {action} out of range [0, {upper})", row=row)
        return action

    # Writing

    def to_frame(self, dataset: ObservationalDataset) -> pd.DataFrame:
        """Dataset as a string-valued frame in file column order"""
        with_propensity = dataset.has_propensities
        if not with_propensity and any(s.has_propensities for s in dataset.sources):
            raise DatasetParseError("cannot save a dataset where only some sources logged propensities")

        pooled = dataset.pooled()
        frame = pd.DataFrame({'source': [dataset.sources[i].source_id for i in pooled['source_index']]})
        for j in range(dataset.context_dim):
            frame[f"x{j}"] = [repr(float(v)) for v in pooled['contexts'][:, j]]
        frame['action'] = [str(int(a)) for a in pooled['actions']]
        frame['reward'] = [repr(float(v)) for v in pooled['rewards']]
        if with_propensity:
            propensities = np.concatenate([s.logged_propensities for s in dataset.sources])
            frame['propensity'] = [repr(float(v)) for v in propensities]
        return frame

    def format_text(self, dataset: ObservationalDataset) -> str:
        return self.to_frame(dataset).to_csv(index=False, lineterminator='\n')

    # File access

    async def load(self, path: PathLike) -> ObservationalDataset:
        async with aiofiles.open(path, 'r', encoding='utf-8') as f:
            content = await f.read()
        dataset = self.parse_text(content)
        logger.info(f"Loaded dataset {path}: n={dataset.total_size}, sources={dataset.source_ids}")
        return dataset

    async def save(self, dataset: ObservationalDataset, path: PathLike):
        text = self.format_text(dataset)
        async with aiofiles.open(path, 'w', encoding='utf-8') as f:
            await f.write(text)
        logger.info(f"Saved dataset {path}: n={dataset.total_size}")


def load_dataset(path: PathLike, action_count: Optional[int] = None) -> ObservationalDataset:
    """Read a dataset CSV; errors name the offending data row"""
    text = Path(path).read_text(encoding='utf-8')
    return DatasetParser(action_count).parse_text(text)


def save_dataset(dataset: ObservationalDataset, path: PathLike):
    Path(path).write_text(DatasetParser().format_text(dataset), encoding='utf-8')
