"""
EG-OPO - Tree Policy Oracle
Exact exhaustive search for the fixed-depth tree maximizing a weighted score sum
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import BudgetExceededError, OracleError
from ..models.policy import LeafNode, SplitNode, TreePolicy

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_BUDGET = 1_000_000
# above this many rows the per-node-size bound costs more than it saves
REFINED_ESTIMATE_ROWS = 128

Solved = Tuple[float, TreePolicy]


@dataclass(frozen=True, eq=False)
class WeightedExamples:
    """
    ORACLE INPUT
    - contexts: N x p
    - score_rows: N x d
    - weights: N non-negative reals; the objective is sum_i weights_i * score_rows_i[pi(x_i)]
    """

    contexts: np.ndarray
    score_rows: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        contexts = np.asarray(self.contexts, dtype=float)
        scores = np.asarray(self.score_rows, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if contexts.ndim != 2 or scores.ndim != 2 or weights.ndim != 1:
            raise OracleError("contexts and score_rows must be matrices and weights a vector")
        if contexts.shape[0] == 0:
            raise OracleError("The oracle needs at least one example")
        if scores.shape[0] != contexts.shape[0] or weights.shape[0] != contexts.shape[0]:
            raise OracleError(
                f"Row counts differ: contexts {contexts.shape[0]}, scores {scores.shape[0]}, weights {weights.shape[0]}")
        if not np.all(np.isfinite(scores)):
            raise OracleError("Non-finite score")
        if not np.all(np.isfinite(contexts)):
            raise OracleError("Non-finite context")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise OracleError("Weights must be finite and non-negative")
        object.__setattr__(self, 'contexts', contexts)
        object.__setattr__(self, 'score_rows', scores)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def unweighted(cls, contexts: np.ndarray, score_rows: np.ndarray) -> WeightedExamples:
        return cls(contexts, score_rows, np.ones(np.asarray(score_rows).shape[0]))

    @property
    def size(self) -> int:
        return int(self.contexts.shape[0])

    @property
    def action_count(self) -> int:
        return int(self.score_rows.shape[1])

    def scaled_rows(self) -> np.ndarray:
        """Score rows pre-multiplied by their weights"""
        return self.score_rows * self.weights[:, None]


@dataclass(frozen=True)
class OracleSolution:
    policy: TreePolicy
    objective: float


def policy_objective(policy: TreePolicy, examples: WeightedExamples) -> float:
    """Exactly rounded sum of the weighted score each example gets under the policy"""
    rows = examples.scaled_rows()
    chosen = rows[np.arange(examples.size), policy.evaluate_batch(examples.contexts)]
    return math.fsum(chosen)


class CandidateGrid:
    """
    Per-feature split candidates from the observed contexts.
    Candidate c of feature j: c = 0 is the -inf sentinel (everything right);
    c >= 1 sends rows with rank_j < c left (threshold = midpoint after distinct value c-1).
    """

    def __init__(self, contexts: np.ndarray):
        self.num_features = contexts.shape[1]
        self.order: List[np.ndarray] = []
        self.rank: List[np.ndarray] = []
        self.thresholds: List[np.ndarray] = []
        for j in range(self.num_features):
            column = contexts[:, j]
            distinct, rank = np.unique(column, return_inverse=True)
            midpoints = (distinct[:-1] + distinct[1:]) / 2.0
            self.order.append(np.argsort(column, kind='stable'))
            self.rank.append(rank.reshape(-1).astype(np.int64))
            self.thresholds.append(np.concatenate(([-math.inf], midpoints)))

    def split(self, feature: int, cut: int) -> SplitNode:
        return SplitNode(feature, float(self.thresholds[feature][cut]))

    def sorted_rows(self, feature: int, mask: np.ndarray) -> np.ndarray:
        order = self.order[feature]
        return order[mask[order]]

    @staticmethod
    def boundaries(sorted_ranks: np.ndarray) -> np.ndarray:
        """Left-count positions that yield distinct partitions (0 plus every rank change)"""
        changes = np.flatnonzero(sorted_ranks[:-1] < sorted_ranks[1:]) + 1
        return np.concatenate(([0], changes)).astype(np.int64)

    @staticmethod
    def cuts(positions: np.ndarray, sorted_ranks: np.ndarray) -> np.ndarray:
        """Smallest candidate index realizing each boundary"""
        if len(sorted_ranks) == 0:
            return np.zeros(len(positions), dtype=np.int64)
        previous = sorted_ranks[np.maximum(positions - 1, 0)] + 1
        return np.where(positions == 0, 0, previous).astype(np.int64)

    @property
    def estimate_size(self) -> int:
        return int(sum(len(t) for t in self.thresholds))


class _TreeSearch:
    """
    Exhaustive search over complete trees on a pre-scaled score matrix.
    Ties keep the first candidate in (feature, threshold) order and the lowest leaf action.
    """

    # cells of (root cut x child boundary) prefix sums held per action at once
    CHUNK_CELLS = 1 << 18

    def __init__(self, examples: WeightedExamples):
        self.rows = examples.scaled_rows()
        self.grid = CandidateGrid(examples.contexts)
        self.size, self.action_count = self.rows.shape

    def _mask(self, rows: np.ndarray) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[rows] = True
        return mask

    def solve(self, rows: np.ndarray, depth: int) -> Solved:
        if depth == 0:
            return self._leaf(rows)
        if len(rows) == 0:
            return 0.0, TreePolicy.constant(0, depth)
        if depth == 1:
            return self._depth_one(rows)
        if depth == 2:
            return self._depth_two(rows)
        return self._deep(rows, depth)

    def _leaf(self, rows: np.ndarray) -> Solved:
        sums = self.rows[rows].sum(axis=0) if len(rows) else np.zeros(self.action_count)
        action = int(np.argmax(sums))
        return float(sums[action]), TreePolicy.leaf(action)

    def _depth_one(self, rows: np.ndarray) -> Solved:
        mask = self._mask(rows)
        total = self.rows[rows].sum(axis=0)
        zero = np.zeros((1, self.action_count))
        best = None
        for j in range(self.grid.num_features):
            ordered = self.grid.sorted_rows(j, mask)
            ranks = self.grid.rank[j][ordered]
            positions = self.grid.boundaries(ranks)
            prefix = np.vstack([zero, np.cumsum(self.rows[ordered], axis=0)])[positions]
            values = prefix.max(axis=1) + (total - prefix).max(axis=1)
            t = int(np.argmax(values))
            if best is None or values[t] > best[0]:
                cut = int(self.grid.cuts(positions[t:t + 1], ranks)[0])
                best = (float(values[t]), j, cut, int(np.argmax(prefix[t])), int(np.argmax(total - prefix[t])))
        value, j, cut, left, right = best
        return value, TreePolicy(1, (self.grid.split(j, cut), LeafNode(left), LeafNode(right)))

    def _child_layout(self, feature: int, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
        """Node rows in the feature's order, the block (distinct value) of each, and the block count"""
        ordered = self.grid.sorted_rows(feature, mask)
        ranks = self.grid.rank[feature][ordered]
        blocks = np.concatenate(([0], np.cumsum(ranks[1:] != ranks[:-1]))).astype(np.int64)
        return ordered, blocks, int(blocks[-1]) + 1

    @staticmethod
    def _split_values(prefix: List[np.ndarray]) -> np.ndarray:
        """Per row: max over boundaries b of max_a P_a[b] + max_a (P_a[-1] - P_a[b])"""
        head = reduce(np.maximum, prefix)
        tail = reduce(np.maximum, [p[:, -1:] - p for p in prefix])
        return (head + tail).max(axis=1)

    def _child_values(self, scores: np.ndarray, blocks: np.ndarray, block_count: int, joins: np.ndarray,
                      cut_count: int) -> Tuple[np.ndarray, np.ndarray]:
        """
        Best depth-1 value left and right of every root cut for one child feature.
        Row i enters the left side at root cut joins[i]; the left prefix sums over
        (root cut, child boundary) are a running sum along both axes, built a chunk
        of root cuts at a time with the earlier cuts carried over.
        """
        width = block_count + 1
        all_prefix = [np.concatenate(([0.0], np.cumsum(np.bincount(blocks, weights=scores[:, a],
                                                                   minlength=block_count))))
                      for a in range(self.action_count)]

        order = np.argsort(joins, kind='stable')
        sorted_joins = joins[order]
        chunk = max(1, self.CHUNK_CELLS // width)
        carry = np.zeros((self.action_count, width))
        left_values = np.empty(cut_count)
        right_values = np.empty(cut_count)

        for start in range(0, cut_count, chunk):
            stop = min(start + chunk, cut_count)
            lo, hi = np.searchsorted(sorted_joins, [start, stop])
            members = order[lo:hi]
            cells = (joins[members] - start) * width + blocks[members] + 1
            left_prefix = []
            for a in range(self.action_count):
                grid = np.bincount(cells, weights=scores[members, a],
                                   minlength=(stop - start) * width).reshape(stop - start, width)
                np.cumsum(grid, axis=0, out=grid)
                grid += carry[a]
                carry[a] = grid[-1]
                np.cumsum(grid, axis=1, out=grid)
                left_prefix.append(grid)
            left_values[start:stop] = self._split_values(left_prefix)
            right_values[start:stop] = self._split_values(
                [all_prefix[a][None, :] - left_prefix[a] for a in range(self.action_count)])

        return left_values, right_values

    def _depth_two(self, rows: np.ndarray) -> Solved:
        """
        Root cuts sweep rows from the right child into the left one; for every child
        feature the depth-1 values on both sides of all root cuts come from one
        two-axis prefix sum.
        """
        mask = self._mask(rows)
        children = [self._child_layout(j2, mask) for j2 in range(self.grid.num_features)]

        best = None
        for j in range(self.grid.num_features):
            ordered = self.grid.sorted_rows(j, mask)
            ranks = self.grid.rank[j][ordered]
            cuts = self.grid.cuts(self.grid.boundaries(ranks), ranks)
            left_best = np.full(len(cuts), -math.inf)
            right_best = np.full(len(cuts), -math.inf)
            for ordered2, blocks, block_count in children:
                joins = np.searchsorted(cuts, self.grid.rank[j][ordered2], side='right')
                left_values, right_values = self._child_values(self.rows[ordered2], blocks, block_count,
                                                               joins, len(cuts))
                np.maximum(left_best, left_values, out=left_best)
                np.maximum(right_best, right_values, out=right_best)
            values = left_best + right_best
            t = int(np.argmax(values))
            if best is None or values[t] > best[0]:
                best = (float(values[t]), j, int(cuts[t]))

        _, j, cut = best
        goes_left = self.grid.rank[j][rows] < cut
        left_value, left_tree = self.solve(rows[goes_left], 1)
        right_value, right_tree = self.solve(rows[~goes_left], 1)
        return left_value + right_value, TreePolicy.compose(self.grid.split(j, cut), left_tree, right_tree)

    def _deep(self, rows: np.ndarray, depth: int) -> Solved:
        mask = self._mask(rows)
        best = None
        for j in range(self.grid.num_features):
            ranks = self.grid.rank[j][self.grid.sorted_rows(j, mask)]
            for cut in self.grid.cuts(self.grid.boundaries(ranks), ranks):
                goes_left = self.grid.rank[j][rows] < cut
                left_value, left_tree = self.solve(rows[goes_left], depth - 1)
                right_value, right_tree = self.solve(rows[~goes_left], depth - 1)
                if best is None or left_value + right_value > best[0]:
                    best = (left_value + right_value, TreePolicy.compose(self.grid.split(j, int(cut)),
                                                                         left_tree, right_tree))
        return best

    def reference(self, rows: np.ndarray, depth: int) -> Solved:
        """Naive recursion over every global candidate at every node"""
        if depth == 0:
            sums = [math.fsum(self.rows[rows, a]) for a in range(self.action_count)]
            action = int(np.argmax(sums))
            return sums[action], TreePolicy.leaf(action)
        if len(rows) == 0:
            return 0.0, TreePolicy.constant(0, depth)
        best = None
        for j in range(self.grid.num_features):
            for cut in range(len(self.grid.thresholds[j])):
                goes_left = self.grid.rank[j][rows] < cut
                left_value, left_tree = self.reference(rows[goes_left], depth - 1)
                right_value, right_tree = self.reference(rows[~goes_left], depth - 1)
                if best is None or left_value + right_value > best[0]:
                    best = (left_value + right_value, TreePolicy.compose(self.grid.split(j, cut),
                                                                         left_tree, right_tree))
        return best


def _check_depth(depth: int):
    if depth < 0:
        raise OracleError(f"Tree depth must be non-negative, got {depth}")


def solve_opo(examples: WeightedExamples, depth: int) -> OracleSolution:
    """Globally optimal depth-k tree for the weighted score sum"""
    _check_depth(depth)
    search = _TreeSearch(examples)
    _, policy = search.solve(np.arange(examples.size), depth)
    solution = OracleSolution(policy, policy_objective(policy, examples))
    logger.debug(f"OPO depth={depth} N={examples.size}: objective={solution.objective:.6f}")
    return solution


def solve_opo_reference(examples: WeightedExamples, depth: int) -> OracleSolution:
    """Slow reference search with the same tie-breaking, for cross-checks"""
    _check_depth(depth)
    _, policy = _TreeSearch(examples).reference(np.arange(examples.size), depth)
    return OracleSolution(policy, policy_objective(policy, examples))


@lru_cache(maxsize=None)
def _enumeration_cost(rows: int, level: int, features: int, action_count: int) -> Tuple[int, int]:
    """
    Upper bounds on (distinct behaviors, signature merges) when enumerating a node of
    `rows` examples. A node has at most one split per left size 0..rows-1 and feature,
    and never more behaviors than action_count ** rows.
    """
    if level == 0:
        return (action_count if rows else 1), 1
    merges = work = 0
    for left in range(max(rows, 1)):
        left_behaviors, left_work = _enumeration_cost(left, level - 1, features, action_count)
        right_behaviors, right_work = _enumeration_cost(rows - left, level - 1, features, action_count)
        merges += left_behaviors * right_behaviors
        work += left_work + right_work
    merges *= features
    return min(action_count ** rows, merges), merges + work * features


def enumeration_estimate(contexts: np.ndarray, depth: int, action_count: int = 2) -> int:
    """Cost of enumerate_policies: the tighter of a per-candidate count and a per-node-size bound"""
    contexts = np.asarray(contexts, dtype=float)
    internal = 2 ** depth - 1
    crude = CandidateGrid(contexts).estimate_size ** internal * action_count ** (internal + 1)
    if contexts.shape[0] > REFINED_ESTIMATE_ROWS:
        return crude
    _, merges = _enumeration_cost(contexts.shape[0], depth, contexts.shape[1], action_count)
    return min(crude, merges)


def enumerate_policies(contexts: np.ndarray, depth: int, action_count: int = 2,
                       budget: int = DEFAULT_ENUMERATION_BUDGET) -> List[TreePolicy]:
    """One representative tree for every distinct action assignment achievable on the contexts"""
    _check_depth(depth)
    contexts = np.asarray(contexts, dtype=float)
    grid = CandidateGrid(contexts)
    estimate = enumeration_estimate(contexts, depth, action_count)
    if estimate > budget:
        raise BudgetExceededError(
            f"Enumerating depth-{depth} trees over {contexts.shape[0]} contexts needs about {estimate} "
            f"candidates, above the budget of {budget}; use fewer rows, features or a smaller depth")

    cache: Dict[Tuple[Tuple[int, ...], int], Dict[Tuple[int, ...], TreePolicy]] = {}

    def behaviors(rows: Tuple[int, ...], level: int) -> Dict[Tuple[int, ...], TreePolicy]:
        key = (rows, level)
        if key in cache:
            return cache[key]
        found: Dict[Tuple[int, ...], TreePolicy] = {}
        if level == 0:
            for action in range(action_count):
                found.setdefault(tuple([action] * len(rows)), TreePolicy.leaf(action))
        else:
            row_array = np.array(rows, dtype=np.int64)
            for j in range(grid.num_features):
                ranks = grid.rank[j][row_array]
                cuts = [0] + sorted(set((ranks + 1).tolist()) - {int(ranks.max()) + 1}) if len(rows) else [0]
                for cut in cuts:
                    goes_left = ranks < cut
                    left = tuple(row_array[goes_left].tolist())
                    right = tuple(row_array[~goes_left].tolist())
                    for left_actions, left_tree in behaviors(left, level - 1).items():
                        for right_actions, right_tree in behaviors(right, level - 1).items():
                            merged = np.empty(len(rows), dtype=np.int64)
                            merged[goes_left] = left_actions
                            merged[~goes_left] = right_actions
                            signature = tuple(merged.tolist())
                            if signature not in found:
                                found[signature] = TreePolicy.compose(grid.split(j, cut), left_tree, right_tree)
        cache[key] = found
        return found

    policies = list(behaviors(tuple(range(contexts.shape[0])), depth).values())
    logger.debug(f"Enumerated {len(policies)} distinct depth-{depth} behaviors")
    return policies


def best_enumerated(examples: WeightedExamples, depth: int,
                    budget: int = DEFAULT_ENUMERATION_BUDGET) -> OracleSolution:
    """Brute-force maximum over enumerate_policies"""
    best: Optional[OracleSolution] = None
    for policy in enumerate_policies(examples.contexts, depth, examples.action_count, budget):
        objective = policy_objective(policy, examples)
        if best is None or objective > best.objective:
            best = OracleSolution(policy, objective)
    return best
