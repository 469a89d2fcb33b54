"""
EG-OPO - Simplex Covers
Finite l1 epsilon-covers of the valid mixture-weight set
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.spatial import cKDTree

from ..errors import CoverError
from ..models.weights import MixtureWeights
from ..utils.rng import SeededRNG

logger = logging.getLogger(__name__)


class WeightSetSpec(BaseModel):
    """
    VALID WEIGHT SET
    - full_simplex: all of Delta(S), needs num_sources
    - finite_list: exactly the given vertices
    - vertex_hull: convex hull of the given vertices
    """

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: Literal['full_simplex', 'finite_list', 'vertex_hull'] = 'full_simplex'
    num_sources: Optional[int] = None
    vertices: Optional[List[List[float]]] = None

    @model_validator(mode='after')
    def _check(self) -> WeightSetSpec:
        if self.kind == 'full_simplex':
            if self.num_sources is None or self.num_sources < 1:
                raise ValueError("full_simplex needs num_sources >= 1")
            return self
        if not self.vertices:
            raise ValueError(f"{self.kind} needs at least one vertex")
        lengths = {len(v) for v in self.vertices}
        if len(lengths) != 1:
            raise ValueError("vertices must all have the same length")
        for vertex in self.vertices:
            MixtureWeights.from_iterable(vertex)
        if self.num_sources is not None and self.num_sources != lengths.pop():
            raise ValueError("num_sources does not match the vertex length")
        return self

    @property
    def size(self) -> int:
        """Number of sources |S|"""
        return self.num_sources if self.num_sources is not None else len(self.vertices[0])

    def vertex_weights(self) -> List[MixtureWeights]:
        return [MixtureWeights.from_iterable(v) for v in (self.vertices or [])]


@dataclass(frozen=True)
class CoverSet:
    """Deduplicated cover points; certified_radius is set once measured"""

    points: tuple
    epsilon: float
    certified_radius: Optional[float] = None

    def __post_init__(self):
        if not self.points:
            raise CoverError("A cover needs at least one point")
        unique, seen = [], set()
        for point in self.points:
            if not isinstance(point, MixtureWeights):
                point = MixtureWeights.from_iterable(point)
            if point.weights not in seen:
                seen.add(point.weights)
                unique.append(point)
        object.__setattr__(self, 'points', tuple(unique))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def num_sources(self) -> int:
        return len(self.points[0])

    def as_array(self) -> np.ndarray:
        return np.array([p.weights for p in self.points], dtype=float)

    def with_certified_radius(self, radius: float) -> CoverSet:
        return replace(self, certified_radius=float(radius))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.as_array(), columns=[f"w{s}" for s in range(self.num_sources)])


def grid_resolution(dimension: int, epsilon: float) -> int:
    """m = ceil(2 (dimension - 1) / epsilon)"""
    return max(1, math.ceil(2.0 * (dimension - 1) / epsilon - 1e-9))


def simplex_grid(dimension: int, resolution: int) -> np.ndarray:
    """Every (k_1/m, ..., k_S/m) with non-negative integers summing to m (stars and bars)"""
    if dimension == 1:
        return np.ones((1, 1))
    bars = np.array(list(itertools.combinations(range(resolution + dimension - 1), dimension - 1)), dtype=np.int64)
    padded = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), resolution + dimension - 1)])
    counts = np.diff(padded, axis=1) - 1
    return counts / resolution


def build_cover(spec: WeightSetSpec, epsilon: float) -> CoverSet:
    """Canonical grid cover of the weight set within l1 distance epsilon"""
    if not epsilon > 0:
        raise CoverError(f"epsilon must be positive, got {epsilon}")

    if spec.kind == 'finite_list':
        cover = CoverSet(tuple(spec.vertex_weights()), epsilon, certified_radius=0.0)
    elif spec.kind == 'full_simplex':
        dimension = spec.size
        if dimension == 1:
            logger.warning("Single source: the cover is the degenerate point (1)")
        grid = simplex_grid(dimension, grid_resolution(dimension, epsilon))
        cover = CoverSet(tuple(MixtureWeights.from_iterable(row) for row in grid), epsilon)
    else:
        vertices = np.array([v.weights for v in spec.vertex_weights()])
        barycentric = simplex_grid(len(vertices), grid_resolution(len(vertices), epsilon))
        mapped = np.round(barycentric @ vertices, 12)
        cover = CoverSet(tuple(MixtureWeights.from_iterable(row) for row in mapped), epsilon)

    logger.info(f"Built {spec.kind} cover: |S|={spec.size}, epsilon={epsilon}, points={len(cover)}")
    return cover


def sample_weight_set(spec: WeightSetSpec, samples: int, generator: np.random.Generator) -> np.ndarray:
    """Uniform draws from the weight set (exponential spacings on the simplex)"""
    if spec.kind == 'finite_list':
        vertices = np.array([v.weights for v in spec.vertex_weights()])
        return vertices[generator.integers(0, len(vertices), size=samples)]
    dimension = spec.size if spec.kind == 'full_simplex' else len(spec.vertices)
    spacings = generator.exponential(size=(samples, dimension))
    points = spacings / spacings.sum(axis=1, keepdims=True)
    if spec.kind == 'vertex_hull':
        points = points @ np.array([v.weights for v in spec.vertex_weights()])
    return points


def certify_radius(cover: CoverSet, spec: WeightSetSpec, samples: int = 10_000, seed: int = 0) -> float:
    """Largest l1 distance from a sampled point of the weight set to its nearest cover point"""
    if samples < 1:
        raise CoverError(f"samples must be positive, got {samples}")
    if cover.num_sources != spec.size:
        raise CoverError(f"Cover has {cover.num_sources} sources, weight set has {spec.size}")
    points = sample_weight_set(spec, samples, SeededRNG(seed).stream('certify'))
    distances, _ = cKDTree(cover.as_array()).query(points, k=1, p=1)
    radius = float(np.max(distances))
    logger.info(f"Certified cover radius {radius:.4f} over {samples} samples (epsilon={cover.epsilon})")
    return radius
