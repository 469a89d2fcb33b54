"""
EG-OPO - Tree Policies
Complete fixed-depth axis-aligned decision trees mapping contexts to actions
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple, Union

import numpy as np


@dataclass(frozen=True)
class SplitNode:
    """Internal node: go left iff x[feature] <= threshold"""

    feature: int
    threshold: float


@dataclass(frozen=True)
class LeafNode:
    action: int


Node = Union[SplitNode, LeafNode]


@dataclass(frozen=True)
class TreePolicy:
    """
    TREE POLICY
    - complete binary tree of depth k stored in level order (children of i: 2i+1, 2i+2)
    - the first 2^k - 1 nodes are splits, the last 2^k are leaves
    - a depth-0 tree is a single leaf
    """

    depth: int
    nodes: Tuple[Node, ...]

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if self.depth < 0:
            raise ValueError(f"Tree depth must be non-negative, got {self.depth}")
        internal = 2 ** self.depth - 1
        if len(nodes) != 2 * internal + 1:
            raise ValueError(f"Depth-{self.depth} tree needs {2 * internal + 1} nodes, got {len(nodes)}")
        for position, node in enumerate(nodes):
            if position < internal:
                if not isinstance(node, SplitNode):
                    raise ValueError(f"Node {position} must be a split in a depth-{self.depth} tree")
                if node.feature < 0:
                    raise ValueError(f"Node {position} has negative feature index")
                if math.isnan(node.threshold):
                    raise ValueError(f"Node {position} has NaN threshold")
            elif not isinstance(node, LeafNode) or node.action < 0:
                raise ValueError(f"Node {position} must be a leaf with a non-negative action")
        object.__setattr__(self, 'nodes', nodes)

    # Construction

    @classmethod
    def leaf(cls, action: int) -> TreePolicy:
        return cls(0, (LeafNode(int(action)),))

    @classmethod
    def constant(cls, action: int, depth: int = 0) -> TreePolicy:
        """Every leaf plays `action`; splits are the canonical (feature 0, -inf)"""
        internal = 2 ** depth - 1
        splits = tuple(SplitNode(0, -math.inf) for _ in range(internal))
        return cls(depth, splits + tuple(LeafNode(int(action)) for _ in range(internal + 1)))

    @classmethod
    def compose(cls, split: SplitNode, left: TreePolicy, right: TreePolicy) -> TreePolicy:
        """Tree with `split` at the root and the given equal-depth subtrees"""
        if left.depth != right.depth:
            raise ValueError("Subtrees must share a depth")
        nodes: List[Node] = [split]
        for level in range(left.depth + 1):
            start, stop = 2 ** level - 1, 2 ** (level + 1) - 1
            nodes.extend(left.nodes[start:stop])
            nodes.extend(right.nodes[start:stop])
        return cls(left.depth + 1, tuple(nodes))

    # Shape

    @property
    def internal_count(self) -> int:
        return 2 ** self.depth - 1

    @property
    def splits(self) -> Tuple[SplitNode, ...]:
        return self.nodes[:self.internal_count]  # type: ignore[return-value]

    @property
    def leaf_actions(self) -> Tuple[int, ...]:
        return tuple(node.action for node in self.nodes[self.internal_count:])  # type: ignore[union-attr]

    @property
    def max_feature(self) -> int:
        """Largest feature index used, -1 for a single leaf"""
        return max((node.feature for node in self.splits), default=-1)

    # Evaluation

    def evaluate(self, context: np.ndarray) -> int:
        """Action for one context"""
        position = 0
        for _ in range(self.depth):
            node = self.nodes[position]
            position = 2 * position + (1 if context[node.feature] <= node.threshold else 2)
        return self.nodes[position].action

    def evaluate_batch(self, contexts: np.ndarray) -> np.ndarray:
        """Actions for every row of an (m, p) context matrix"""
        contexts = np.asarray(contexts, dtype=float)
        if contexts.ndim != 2:
            raise ValueError(f"Expected a 2-D context matrix, got shape {contexts.shape}")
        if contexts.shape[1] <= self.max_feature:
            raise ValueError(
                f"Context dimension {contexts.shape[1]} too small for feature index {self.max_feature}")
        rows = np.arange(contexts.shape[0])
        position = np.zeros(contexts.shape[0], dtype=np.int64)
        if self.depth:
            features = np.array([node.feature for node in self.splits], dtype=np.int64)
            thresholds = np.array([node.threshold for node in self.splits], dtype=float)
            for _ in range(self.depth):
                go_right = contexts[rows, features[position]] > thresholds[position]
                position = 2 * position + 1 + go_right
        leaf_actions = np.array(self.leaf_actions, dtype=np.int64)
        return leaf_actions[position - self.internal_count]

    def leaf_regions(self, lower: np.ndarray, upper: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray, int]]:
        """Axis-aligned box (lo, hi) and action of each leaf, clipped to [lower, upper]"""
        regions = []

        def descend(position: int, lo: np.ndarray, hi: np.ndarray):
            if position >= self.internal_count:
                regions.append((lo, hi, self.nodes[position].action))
                return
            node = self.nodes[position]
            left_hi, right_lo = hi.copy(), lo.copy()
            left_hi[node.feature] = min(hi[node.feature], node.threshold)
            right_lo[node.feature] = max(lo[node.feature], node.threshold)
            descend(2 * position + 1, lo, left_hi)
            descend(2 * position + 2, right_lo, hi)

        descend(0, np.asarray(lower, dtype=float).copy(), np.asarray(upper, dtype=float).copy())
        return regions

    # Serialization

    def to_dict(self) -> Dict[str, Any]:
        nodes = []
        for node in self.nodes:
            if isinstance(node, SplitNode):
                nodes.append({'feature': node.feature, 'threshold': node.threshold})
            else:
                nodes.append({'action': node.action})
        return {'depth': self.depth, 'nodes': nodes}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> TreePolicy:
        nodes: List[Node] = []
        for entry in data['nodes']:
            if 'action' in entry:
                nodes.append(LeafNode(int(entry['action'])))
            else:
                nodes.append(SplitNode(int(entry['feature']), float(entry['threshold'])))
        return cls(int(data['depth']), tuple(nodes))

    def to_json(self) -> str:
        # -inf thresholds serialize as -Infinity (accepted by json.loads)
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> TreePolicy:
        return cls.from_dict(json.loads(text))


def evaluate_policy(policy: TreePolicy, context: np.ndarray) -> int:
    """Leaf action reached by threshold routing; errors on dimension mismatch"""
    context = np.asarray(context, dtype=float)
    if context.ndim != 1:
        raise ValueError(f"Context must be a vector, got shape {context.shape}")
    if context.shape[0] <= policy.max_feature:
        raise ValueError(
            f"Context of length {context.shape[0]} does not cover feature index {policy.max_feature}")
    return policy.evaluate(context)
