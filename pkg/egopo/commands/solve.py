"""
EG-OPO - Solve Command
Full pipeline on a dataset file: nuisances, scores, cover, EG-OPO
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field

from ..errors import ConfigError
from ..estimators.aipw import compute_aipw_scores
from ..estimators.nuisance import NuisanceConfig, fit_nuisance
from ..metrics.skewness import skewness_report
from ..parsers.dataset_parser import DatasetParser
from ..solvers.egopo import EgopoConfig, run_egopo
from ..solvers.simplex_cover import WeightSetSpec, build_cover
from ..utils.plot_factory import PlotFactory
from .base import Command, write_frame, write_json, write_text

logger = logging.getLogger(__name__)


class SolveConfig(BaseModel):
    """weight_set defaults to the full simplex over the dataset's sources"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    dataset: str
    action_count: Optional[int] = Field(None, ge=2)
    nuisance: NuisanceConfig = Field(default_factory=NuisanceConfig)
    egopo: EgopoConfig = Field(default_factory=EgopoConfig)
    weight_set: Optional[WeightSetSpec] = None
    export_scores: bool = False
    plots: bool = False


class SolveCommand(Command):
    name = 'solve'
    help = 'Learn the EG-OPO policy for a dataset (policy.json, result.json, trace.csv, cover.csv, skewness.json)'
    config_model = SolveConfig

    async def run(self, config: SolveConfig, out: Path) -> Dict[str, Any]:
        dataset = await DatasetParser(config.action_count).load(config.dataset)
        spec = config.weight_set or WeightSetSpec(kind='full_simplex', num_sources=dataset.num_sources)
        if spec.size != dataset.num_sources:
            raise ConfigError(f"weight_set covers {spec.size} sources, dataset has {dataset.num_sources}")

        fits = fit_nuisance(dataset, None, config.nuisance)
        scores = compute_aipw_scores(dataset, fits)
        cover = build_cover(spec, config.egopo.epsilon)
        result = run_egopo(scores, cover, config.egopo)
        report = skewness_report(list(cover.points), scores.n_bar)

        await write_text(out / 'policy.json', result.policy.to_json())
        await write_json(out / 'result.json', result.to_dict())
        await write_frame(out / 'trace.csv', result.trace_frame())
        await write_frame(out / 'cover.csv', cover.to_frame())
        await write_text(out / 'skewness.json', report.to_json())
        if config.export_scores:
            await write_frame(out / 'scores.csv', scores.to_frame())
        if config.plots:
            figure = PlotFactory.build('rho_trace', {'rho_trace': result.rho_trace, 'title': 'Adversary weights'})
            PlotFactory.save(figure, out / 'rho_trace.svg')

        return {'cover_points': len(cover), 'iterations': result.iterations,
                'worst_case_regret': round(float(result.worst_case_regrets[-1]), 6)}


def setup(cli):
    cli.add_command(SolveCommand())
