"""
EG-OPO - Experiment Runner
Seed sweeps over training sample sizes comparing EG-OPO with the pooled and single-source baselines
"""

from __future__ import annotations

import asyncio
import logging
import math
import os
from concurrent.futures import Executor, ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import aiofiles
import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..commands.base import write_json
from ..estimators.aipw import ScoreMatrix, compute_aipw_scores
from ..estimators.nuisance import NuisanceConfig, fit_nuisance
from ..metrics.evaluation import DEFAULT_MC_SAMPLES, MIN_MC_SAMPLES, true_regret
from ..models.policy import TreePolicy
from ..models.weights import MixtureWeights
from ..simulation.simulator import SourceGenParams, sample_mixture, sample_params, simulate_dataset
from ..solvers.egopo import EgopoConfig, mixture_examples, run_egopo
from ..solvers.simplex_cover import WeightSetSpec, build_cover
from ..solvers.tree_oracle import WeightedExamples, solve_opo
from ..utils.plot_factory import PlotFactory
from ..utils.rng import SeededRNG, derive_seed

logger = logging.getLogger(__name__)

POLICY_NAMES = ('egopo', 'aggregate', 'source')
ROW_COLUMNS = ['n', 'seed', 'policy_name', 'target_name', 'regret', 'se', 'status', 'error']


class DGPSettings(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    num_sources: int = Field(3, ge=1)
    actions: int = Field(2, ge=2)
    q: int = Field(4, ge=1)
    sigma_theta_sq: float = Field(5.0, ge=0.0)
    sigma_sq: float = Field(1.0, ge=0.0)


class TargetSpec(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    name: str
    weights: List[float]

    @field_validator('weights')
    @classmethod
    def _simplex(cls, value: List[float]) -> List[float]:
        MixtureWeights.from_iterable(value)
        return value

    def mixture(self) -> MixtureWeights:
        return MixtureWeights.from_iterable(self.weights)


def _default_targets() -> List[TargetSpec]:
    return [TargetSpec(name='source_1', weights=[1.0, 0.0, 0.0]),
            TargetSpec(name='mixture', weights=[0.9, 0.05, 0.05])]


def _known_propensity() -> NuisanceConfig:
    return NuisanceConfig(mode='known_propensity')


class ExperimentConfig(BaseModel):
    """
    EXPERIMENT
    - one environment (theta per source) per seed, shared by every sample size
    - each (n, seed) cell trains EG-OPO and both baselines, then measures true regret per target
    - source_baseline_mode: 'total' trains the source policy on n fresh source-1 samples,
      'share' on source 1's own n/k samples
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    dgp: DGPSettings = Field(default_factory=DGPSettings)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    sample_sizes: List[int] = Field(default_factory=lambda: list(range(50, 501, 50)), min_length=1)
    targets: List[TargetSpec] = Field(default_factory=_default_targets, min_length=1)
    egopo: EgopoConfig = Field(default_factory=EgopoConfig)
    nuisance: NuisanceConfig = Field(default_factory=_known_propensity)
    weight_set: Optional[WeightSetSpec] = None
    reference_training_n: int = Field(2000, ge=1)
    mc_samples: int = Field(DEFAULT_MC_SAMPLES, ge=MIN_MC_SAMPLES)
    source_baseline_mode: Literal['total', 'share'] = 'total'
    output_dir: str = 'results'
    plots: bool = True

    @model_validator(mode='after')
    def _check(self) -> ExperimentConfig:
        k = self.dgp.num_sources
        if any(n < k for n in self.sample_sizes):
            raise ValueError(f"Every sample size must be at least num_sources={k}")
        if any(seed < 0 for seed in self.seeds):
            raise ValueError("Seeds must be non-negative")
        for target in self.targets:
            if len(target.weights) != k:
                raise ValueError(f"Target {target.name} has {len(target.weights)} weights for {k} sources")
        if self.weight_set is not None and self.weight_set.size != k:
            raise ValueError(f"weight_set covers {self.weight_set.size} sources, dgp has {k}")
        return self

    def resolved_weight_set(self) -> WeightSetSpec:
        return self.weight_set or WeightSetSpec(kind='full_simplex', num_sources=self.dgp.num_sources)


@dataclass(frozen=True, eq=False)
class RegretCurve:
    """Rows of (n, seed, policy_name, target_name, regret, se) plus failure rows"""

    frame: pd.DataFrame

    @classmethod
    def from_rows(cls, rows: List[Dict[str, Any]]) -> RegretCurve:
        return cls(pd.DataFrame(rows, columns=ROW_COLUMNS))

    def completed(self) -> pd.DataFrame:
        return self.frame[self.frame['status'] == 'ok']

    def failures(self) -> pd.DataFrame:
        return self.frame[self.frame['status'] != 'ok']

    def summary(self) -> pd.DataFrame:
        """Mean and std of regret by n, policy and target"""
        return (self.completed()
                .groupby(['target_name', 'policy_name', 'n'])['regret']
                .agg(['mean', 'std', 'count'])
                .reset_index())


# Cell computations (module level so a process pool can pickle them)

def environment(config: ExperimentConfig, seed: int) -> List[SourceGenParams]:
    dgp = config.dgp
    return sample_params(dgp.num_sources, dgp.q, dgp.actions, dgp.sigma_theta_sq,
                         SeededRNG(seed).fork(0), dgp.sigma_sq)


def train_reference(config: ExperimentConfig, seed: int, target_index: int) -> TreePolicy:
    """Best tree on reference_training_n draws from D_lambda, scored by the true means"""
    params = environment(config, seed)
    target = config.targets[target_index].mixture()
    generator = SeededRNG(seed).fork(2, target_index).stream('mixture')
    sample = sample_mixture(params, target, config.reference_training_n, generator)
    examples = WeightedExamples(sample.contexts, sample.true_mu,
                                np.full(config.reference_training_n, 1.0 / config.reference_training_n))
    return solve_opo(examples, config.egopo.depth).policy


def _scores_for(dataset, config: ExperimentConfig, seed_key: int) -> ScoreMatrix:
    nuisance = config.nuisance.model_copy(update={'seed': derive_seed(config.nuisance.seed, seed_key)})
    fits = fit_nuisance(dataset, None, nuisance)
    return compute_aipw_scores(dataset, fits)


def train_baselines(scores: ScoreMatrix, depth: int,
                    source_scores: Optional[ScoreMatrix] = None) -> Dict[str, TreePolicy]:
    """
    aggregate: pooled examples weighted 1/n
    source: first-source examples only (source_scores when given, else source 1's share of scores)
    """
    aggregate = solve_opo(mixture_examples(scores, scores.n_bar.as_array()), depth).policy
    if source_scores is None:
        first = MixtureWeights.vertex(0, scores.num_sources).as_array()
        source = solve_opo(mixture_examples(scores, first), depth).policy
    else:
        source = solve_opo(mixture_examples(source_scores, source_scores.n_bar.as_array()), depth).policy
    return {'aggregate': aggregate, 'source': source}


def run_cell(config: ExperimentConfig, n: int, seed: int,
             references: Dict[int, TreePolicy]) -> List[Dict[str, Any]]:
    """One (n, seed) cell: 3 policy rows per target, or a single failure row"""
    try:
        params = environment(config, seed)
        rng = SeededRNG(seed).fork(1, n)
        dataset, _ = simulate_dataset(params, n, rng)
        scores = _scores_for(dataset, config, derive_seed(seed, n))

        cover = build_cover(config.resolved_weight_set(), config.egopo.epsilon)
        policies = {'egopo': run_egopo(scores, cover, config.egopo).policy}

        source_scores = None
        if config.source_baseline_mode == 'total':
            source_data, _ = simulate_dataset(params[:1], [n], rng.fork(1))
            source_scores = _scores_for(source_data, config, derive_seed(seed, n, 1))
        policies.update(train_baselines(scores, config.egopo.depth, source_scores))

        rows = []
        for target_index, target in enumerate(config.targets):
            eval_seed = derive_seed(seed, n, target_index, 7)
            for name in POLICY_NAMES:
                estimate = true_regret(policies[name], params, target.mixture(), references[target_index],
                                       config.mc_samples, eval_seed)
                rows.append({'n': n, 'seed': seed, 'policy_name': name, 'target_name': target.name,
                             'regret': estimate.value, 'se': estimate.se, 'status': 'ok', 'error': ''})
        return rows

    except Exception as e:
        logger.error(f"Experiment cell n={n}, seed={seed} failed: {e}")
        return [failure_row(n, seed, e)]


def failure_row(n: int, seed: int, error: Exception) -> Dict[str, Any]:
    return {'n': n, 'seed': seed, 'policy_name': '', 'target_name': '', 'regret': math.nan, 'se': math.nan,
            'status': 'failed', 'error': f"{type(error).__name__}: {error}"}


class ExperimentRunner:
    """
    EXPERIMENT RUNNER
    - phase 1: reference policies per (seed, target)
    - phase 2: (n, seed) cells on a worker pool (EGOPO_MAX_WORKERS)
    - rows stream to CSV in grid order; writes go through one lock
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[Path] = None,
                 max_workers: Optional[int] = None):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.max_workers = max_workers or int(os.getenv('EGOPO_MAX_WORKERS', '1'))
        self.write_lock = asyncio.Lock()
        self.csv_path = self.output_dir / 'regret_curve.csv'
        self._pending: Dict[int, List[Dict[str, Any]]] = {}
        self._next_cell = 0
        self._rows: List[Dict[str, Any]] = []

    def _executor(self) -> Executor:
        if self.max_workers > 1:
            return ProcessPoolExecutor(max_workers=self.max_workers)
        return ThreadPoolExecutor(max_workers=1)

    def cells(self) -> List[Tuple[int, int]]:
        return [(n, seed) for n in self.config.sample_sizes for seed in self.config.seeds]

    async def run(self) -> RegretCurve:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        async with aiofiles.open(self.csv_path, 'w') as f:
            await f.write(','.join(ROW_COLUMNS) + '\n')

        loop = asyncio.get_running_loop()
        cells = self.cells()
        logger.info(f"Starting experiment: {len(cells)} cells, {len(self.config.targets)} targets, "
                    f"{self.max_workers} workers")

        with self._executor() as executor:
            references = await self._train_references(loop, executor)
            tasks = [self._run_cell(loop, executor, index, n, seed, references[seed])
                     for index, (n, seed) in enumerate(cells)]
            await asyncio.gather(*tasks)

        curve = RegretCurve.from_rows(self._rows)
        if self.config.plots and not curve.completed().empty:
            self._write_plots(curve)
            await write_json(self.output_dir / 'summary.json', curve.summary().to_dict(orient='records'))
        logger.info(f"Experiment finished: {len(curve.completed())} regret rows, {len(curve.failures())} failures")
        return curve

    async def _train_references(self, loop, executor) -> Dict[int, Dict[int, TreePolicy]]:
        keys = [(seed, t) for seed in self.config.seeds for t in range(len(self.config.targets))]
        trained = await asyncio.gather(*[
            loop.run_in_executor(executor, train_reference, self.config, seed, t) for seed, t in keys])
        references: Dict[int, Dict[int, TreePolicy]] = {seed: {} for seed in self.config.seeds}
        for (seed, t), policy in zip(keys, trained):
            references[seed][t] = policy
        logger.info(f"Trained {len(keys)} reference policies on {self.config.reference_training_n} samples each")
        return references

    async def _run_cell(self, loop, executor, index: int, n: int, seed: int, references: Dict[int, TreePolicy]):
        try:
            rows = await loop.run_in_executor(executor, run_cell, self.config, n, seed, references)
        except Exception as e:
            logger.error(f"Worker for cell n={n}, seed={seed} failed: {e}")
            rows = [failure_row(n, seed, e)]
        logger.info(f"Cell n={n}, seed={seed} done ({rows[0]['status']})")
        await self._record(index, rows)

    async def _record(self, index: int, rows: List[Dict[str, Any]]):
        """Buffer out-of-order cells; append every cell that is next in grid order"""
        async with self.write_lock:
            self._pending[index] = rows
            while self._next_cell in self._pending:
                ready = self._pending.pop(self._next_cell)
                text = pd.DataFrame(ready, columns=ROW_COLUMNS).to_csv(index=False, header=False,
                                                                      lineterminator='\n')
                async with aiofiles.open(self.csv_path, 'a') as f:
                    await f.write(text)
                self._rows.extend(ready)
                self._next_cell += 1

    def _write_plots(self, curve: RegretCurve):
        frame = curve.completed()
        for target in self.config.targets:
            rows = frame[frame['target_name'] == target.name]
            figure = PlotFactory.build('regret_curve', {'frame': rows, 'title': f"Regret on target {target.name}"})
            PlotFactory.save(figure, self.output_dir / f"regret_{target.name}.svg")


async def run_experiment(config: ExperimentConfig, output_dir: Optional[Path] = None,
                         max_workers: Optional[int] = None) -> RegretCurve:
    """End-to-end sweep; CSV (and SVG figures) land in the output directory"""
    return await ExperimentRunner(config, output_dir, max_workers).run()
