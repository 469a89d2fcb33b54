"""
EG-OPO - Experiment Command
Regret curves for EG-OPO against the pooled and single-source baselines
"""

import logging
from pathlib import Path
from typing import Any, Dict

from ..harness.experiment_runner import ExperimentConfig, run_experiment
from .base import Command

logger = logging.getLogger(__name__)


class ExperimentCommand(Command):
    name = 'experiment'
    help = 'Run the seed sweep (regret_curve.csv, summary.json, regret_<target>.svg)'
    config_model = ExperimentConfig

    async def run(self, config: ExperimentConfig, out: Path) -> Dict[str, Any]:
        curve = await run_experiment(config, out)
        return {'rows': len(curve.completed()), 'failures': len(curve.failures())}


def setup(cli):
    cli.add_command(ExperimentCommand())
