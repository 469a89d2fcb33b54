"""
EG-OPO - Plot Factory
Centralized figure construction for experiment outputs (SVG)
"""

import logging
from pathlib import Path
from typing import Any, Dict, Union

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

logger = logging.getLogger(__name__)


class PlotFactory:
    """
    Centralized factory for the experiment figures with consistent styling
    - regret_curve: rolling mean regret vs sample size with +/- 1 std bands, one line per policy
    - rho_trace: adversary weight on every cover point over EG iterations
    """

    COLORS = {
        'egopo': '#7f5af0',
        'aggregate': '#ef4444',
        'source': '#22c55e',
    }

    ROLLING_WINDOW = 3

    @classmethod
    def build(cls, plot_type: str, data: Dict[str, Any]) -> plt.Figure:
        """
        Build a figure of the specified type

        Args:
            plot_type: 'regret_curve' or 'rho_trace'
            data: plot inputs (see the _build_* methods)
        """
        if plot_type == 'regret_curve':
            return cls._build_regret_curve(data)
        elif plot_type == 'rho_trace':
            return cls._build_rho_trace(data)
        else:
            raise ValueError(f"Unknown plot type: {plot_type}")

    @classmethod
    def _build_regret_curve(cls, data: Dict[str, Any]) -> plt.Figure:
        """data: {'frame': rows with n, seed, policy_name, regret; 'title': str}"""
        frame: pd.DataFrame = data['frame']
        figure, axis = plt.subplots(figsize=(6, 4))
        for policy_name, rows in frame.groupby('policy_name', sort=True):
            by_n = rows.groupby('n')['regret'].agg(['mean', 'std']).sort_index().fillna(0.0)
            mean = by_n['mean'].rolling(cls.ROLLING_WINDOW, min_periods=1).mean()
            spread = by_n['std'].rolling(cls.ROLLING_WINDOW, min_periods=1).mean()
            color = cls.COLORS.get(policy_name)
            axis.plot(by_n.index, mean, label=policy_name, color=color)
            axis.fill_between(by_n.index, mean - spread, mean + spread, alpha=0.2, color=color)
        axis.set_xlabel('Training sample size n')
        axis.set_ylabel('True regret')
        axis.set_title(data.get('title', 'Regret'))
        axis.legend()
        figure.tight_layout()
        return figure

    @classmethod
    def _build_rho_trace(cls, data: Dict[str, Any]) -> plt.Figure:
        """data: {'rho_trace': T x |Lambda| array, 'title': str}"""
        trace = np.asarray(data['rho_trace'])
        figure, axis = plt.subplots(figsize=(6, 4))
        axis.plot(np.arange(trace.shape[0]), trace, linewidth=0.8)
        axis.set_xlabel('Iteration t')
        axis.set_ylabel('rho')
        axis.set_title(data.get('title', 'Adversary weights'))
        figure.tight_layout()
        return figure

    @staticmethod
    def save(figure: plt.Figure, path: Union[str, Path]):
        figure.savefig(path, format='svg')
        plt.close(figure)
        logger.info(f"Saved figure {path}")
