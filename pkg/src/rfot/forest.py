"""Random forest of thoughts: importance-weighted sampling, DFS tree building, voting.

Each tree gets its own bootstrap of the record's answered pairs, its own
importance-weighted draw of thoughts, and a root drawn in proportion to
importance. Trees are linearized pre-order into chain prompts whose labels are
aggregated by vote (default) or by rounding the mean ordinal.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import Executor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, PredictionError, ShapeError, SizeError
from .icot import CandidateThoughts, Thought
from .llm import LABEL_TEMPERATURE, LLMBackend, PromptRequest
from .prompts import format_consistency, parse_marked_ordinal, parse_ordinal, template
from .shapley import ImportanceVector
from .survey import MentalStateLabel, QAPair, SurveyRecord, effective_pairs

EPSILON = 1e-6


@dataclass(frozen=True)
class SamplingDistribution:
    ids: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.probs):
            raise ShapeError("ids and probs differ in length")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, self.probs))


def _normalize(ids: Sequence[str], scores: Sequence[float], epsilon: float | None) -> SamplingDistribution:
    if not ids:
        raise EmptyInputError("cannot normalize an empty importance vector")
    if all(s <= 0 for s in scores):
        n = len(ids)
        return SamplingDistribution(tuple(ids), tuple([1.0 / n] * n))
    if epsilon is not None:
        scores = [max(s, epsilon) for s in scores]
    else:
        scores = [max(s, 0.0) for s in scores]
    total = math.fsum(scores)
    return SamplingDistribution(tuple(ids), tuple(s / total for s in scores))


def selection_probabilities(iv: ImportanceVector, epsilon: float | None = EPSILON) -> SamplingDistribution:
    """Probability of drawing each thought, proportional to its (clamped) importance."""
    return _normalize(list(iv.values), list(iv.values.values()), epsilon)


def root_probabilities(iv: ImportanceVector, selected: Sequence[str] | None = None,
                       epsilon: float | None = EPSILON) -> SamplingDistribution:
    """Root-choice distribution over the selected subset only."""
    if selected is not None:
        iv = iv.restrict(selected)
    return selection_probabilities(iv, epsilon)


def weighted_sample_without_replacement(dist: SamplingDistribution, count: int,
                                        rng: np.random.Generator) -> list[str]:
    """Sequential weighted draws, renormalizing the remaining mass after each."""
    if count > len(dist.ids):
        raise SizeError(f"cannot draw {count} of {len(dist.ids)} ids")
    ids = list(dist.ids)
    weights = list(dist.probs)
    out = []
    for _ in range(count):
        total = math.fsum(weights)
        if total <= 0:
            # only zero-mass ids remain; fall back to uniform among them
            weights = [1.0] * len(ids)
            total = float(len(ids))
        u = rng.random() * total
        acc = 0.0
        pick = len(ids) - 1
        for i, w in enumerate(weights):
            acc += w
            if u < acc and w > 0:
                pick = i
                break
        out.append(ids.pop(pick))
        weights.pop(pick)
    return out


def bootstrap_pairs(record: SurveyRecord, rng: np.random.Generator) -> list[QAPair]:
    pairs = effective_pairs(record)
    if not pairs:
        raise EmptyInputError(f"record {record.record_id} has no answered pairs")
    idx = rng.integers(0, len(pairs), size=len(pairs))
    return [pairs[i] for i in idx]


def _entropy(labels: Sequence) -> float:
    n = len(labels)
    if n == 0:
        return 0.0
    return -sum((c / n) * math.log2(c / n) for c in Counter(labels).values())


def gain_ratio(feature: Sequence, labels: Sequence) -> float:
    """Information gain of a binary split over its split information (bits)."""
    if len(feature) != len(labels):
        raise ShapeError(f"feature length {len(feature)} != labels length {len(labels)}")
    if not labels:
        raise EmptyInputError("empty split")
    n = len(labels)
    groups: dict = {}
    for f, y in zip(feature, labels):
        groups.setdefault(bool(f), []).append(y)
    split_info = _entropy([bool(f) for f in feature])
    if split_info == 0:
        return 0.0
    conditional = sum(len(g) / n * _entropy(g) for g in groups.values())
    return (_entropy(labels) - conditional) / split_info


# --- trees ------------------------------------------------------------------

@dataclass
class TreeNode:
    thought_id: str
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    def preorder(self) -> list[str]:
        out = [self.thought_id]
        if self.left:
            out += self.left.preorder()
        if self.right:
            out += self.right.preorder()
        return out

    def to_dict(self) -> dict:
        return {
            "thought": self.thought_id,
            "left": self.left.to_dict() if self.left else None,
            "right": self.right.to_dict() if self.right else None,
        }


@dataclass
class ThoughtTree:
    root: TreeNode
    split_scores: dict[str, float] = field(default_factory=dict)
    selected: list[str] = field(default_factory=list)
    bootstrap_categories: dict[str, int] = field(default_factory=dict)

    def preorder(self) -> list[str]:
        return self.root.preorder()

    def __len__(self) -> int:
        return len(self.preorder())

    def to_dict(self) -> dict:
        return {
            "root": self.root.to_dict(),
            "split_scores": self.split_scores,
            "selected": self.selected,
            "bootstrap_categories": self.bootstrap_categories,
        }


@dataclass
class LabelContext:
    """Training records used to score splits (feature: category answered)."""

    records: Sequence[SurveyRecord]

    def feature(self, category: str) -> list[bool]:
        return [any(p.category == category for p in effective_pairs(r)) for r in self.records]

    @property
    def labels(self) -> list[int]:
        return [int(r.label) for r in self.records]


def _split_score(thought: Thought, context: LabelContext | None) -> float:
    if context is None or not context.records:
        return 0.0
    return gain_ratio(context.feature(thought.category), context.labels)


def _partition(split: Thought, rest: list[Thought], present: set[str]) -> tuple[list[Thought], list[Thought]]:
    """Left: thoughts whose category co-occurs with the split's in the bootstrap."""
    if split.category in present:
        left = [t for t in rest if t.category in present]
    else:
        left = [t for t in rest if t.category == split.category]
    right = [t for t in rest if t not in left]
    return left, right


def build_tree(
    selected: Sequence[str],
    bootstrap: Sequence[QAPair],
    thoughts: dict[str, Thought],
    iv: ImportanceVector,
    rng: np.random.Generator,
    context: LabelContext | None = None,
) -> ThoughtTree:
    """Root drawn by importance, then depth-first best-split recursion (left first).

    With a label context the best split is the thought with highest gain ratio
    (ties: higher importance, then id); without one it is the most important
    remaining thought.
    """
    if not selected:
        raise EmptyInputError("cannot build a tree from zero thoughts")
    selected = list(selected)
    if len(set(selected)) != len(selected):
        raise ValueError("selected thoughts contain duplicates")
    present = {p.category for p in bootstrap}
    scores = {tid: _split_score(thoughts[tid], context) for tid in selected}

    root_id = weighted_sample_without_replacement(root_probabilities(iv, selected), 1, rng)[0]

    def best(pool: list[Thought]) -> Thought:
        return min(pool, key=lambda t: (-scores[t.id], -iv.values[t.id], t.id))

    def grow(split: Thought, rest: list[Thought]) -> TreeNode:
        node = TreeNode(split.id)
        left, right = _partition(split, rest, present)
        if left:
            child = best(left)
            node.left = grow(child, [t for t in left if t is not child])
        if right:
            child = best(right)
            node.right = grow(child, [t for t in right if t is not child])
        return node

    rest = [thoughts[t] for t in selected if t != root_id]
    root = grow(thoughts[root_id], rest)
    return ThoughtTree(
        root=root,
        split_scores=scores,
        selected=selected,
        bootstrap_categories=dict(sorted(Counter(p.category for p in bootstrap).items())),
    )


@dataclass
class ForestConfig:
    n_trees: int = 5
    k: int = 8
    mode: str = "majority_vote"
    epsilon: float = EPSILON

    def __post_init__(self):
        if self.n_trees < 1 or self.k < 1:
            raise ValueError("n_trees and k must be >= 1")
        if self.mode not in ("majority_vote", "ordinal_mean"):
            raise ValueError(f"unknown aggregation mode {self.mode!r}")


@dataclass
class ThoughtForest:
    trees: list[ThoughtTree]
    seed: int
    config: ForestConfig
    thoughts: dict[str, Thought]
    importance: ImportanceVector

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "config": asdict(self.config),
            "importance": json.loads(self.importance.to_json()),
            "thoughts": {tid: t.to_dict() for tid, t in self.thoughts.items()},
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, ensure_ascii=False)


def tree_rng(seed: int, tree_index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream, tree_index])


def draw_thought_subset(iv: ImportanceVector, k: int, rng: np.random.Generator,
                        epsilon: float | None = EPSILON) -> list[str]:
    """Importance-weighted draw of min(k, n) distinct thoughts, in draw order."""
    count = min(k, len(iv))
    return weighted_sample_without_replacement(selection_probabilities(iv, epsilon), count, rng)


def build_forest(
    record: SurveyRecord,
    candidates: CandidateThoughts,
    iv: ImportanceVector,
    config: ForestConfig | None = None,
    seed: int = 0,
    context: LabelContext | None = None,
    executor: Executor | None = None,
) -> ThoughtForest:
    config = config or ForestConfig()
    if not candidates.thoughts:
        raise EmptyInputError("no candidate thoughts")
    iv = iv.restrict(candidates.ids)
    thoughts = {t.id: t.with_importance(iv.values[t.id]) for t in candidates.thoughts}

    def one(index: int) -> ThoughtTree:
        rng = tree_rng(seed, index)
        sample = bootstrap_pairs(record, rng)
        subset = draw_thought_subset(iv, config.k, rng, config.epsilon)
        return build_tree(subset, sample, thoughts, iv, rng, context)

    indices = range(config.n_trees)
    trees = list(executor.map(one, indices)) if executor else [one(i) for i in indices]
    return ThoughtForest(trees=trees, seed=seed, config=config, thoughts=thoughts, importance=iv)


def tree_request(tree: ThoughtTree, thoughts: dict[str, Thought]) -> PromptRequest:
    steps = "\n".join(f"{i}. {thoughts[tid].as_step()}" for i, tid in enumerate(tree.preorder(), start=1))
    return template("label").request(temperature=LABEL_TEMPERATURE, steps="Reasoning steps:\n" + steps)


def linearize_tree(tree: ThoughtTree, thoughts: dict[str, Thought]) -> str:
    """Numbered pre-order reasoning steps followed by the label instruction."""
    return tree_request(tree, thoughts).user


def parse_label_reply(text: str) -> MentalStateLabel | None:
    label = parse_marked_ordinal(text, "LABEL")
    return label if label is not None else parse_ordinal(text)


# --- aggregation --------------------------------------------------------------

@dataclass(frozen=True)
class Prediction:
    label: MentalStateLabel
    per_tree: list[tuple[int, MentalStateLabel | None]]
    mode: str
    trace: list[dict] = field(default_factory=list, compare=False)


def majority_vote(labels: Sequence[int], weights: Sequence[float] | None = None) -> int:
    """Most frequent label; ties go to the larger summed weight, then the lower ordinal."""
    if not labels:
        raise EmptyInputError("no votes")
    weights = list(weights) if weights is not None else [0.0] * len(labels)
    counts = Counter(labels)
    mass: dict[int, float] = {}
    for lab, w in zip(labels, weights):
        mass[lab] = mass.get(lab, 0.0) + w
    return min(counts, key=lambda lab: (-counts[lab], -mass[lab], lab))


def ordinal_mean(labels: Sequence[int]) -> int:
    """Mean ordinal rounded half away from zero and clamped to 1..5."""
    if not labels:
        raise EmptyInputError("no votes")
    mean = sum(labels) / len(labels)
    rounded = math.floor(mean + 0.5)
    return min(5, max(1, rounded))


def aggregate(labels: Sequence[int], mode: str = "majority_vote", weights: Sequence[float] | None = None) -> int:
    if mode == "majority_vote":
        return majority_vote(labels, weights)
    if mode == "ordinal_mean":
        return ordinal_mean(labels)
    raise ValueError(f"unknown aggregation mode {mode!r}")


def predict(forest: ThoughtForest, record: SurveyRecord, llm: LLMBackend,
            mode: str | None = None, executor: Executor | None = None) -> Prediction:
    mode = mode or forest.config.mode

    def ask(index: int) -> dict:
        req = tree_request(forest.trees[index], forest.thoughts)
        completion = llm.complete(req)
        label = parse_label_reply(completion.text)
        return {
            "tree": index,
            "prompt": req.user,
            "completion": completion.text,
            "label": int(label) if label is not None else None,
            "latency": completion.latency,
            "consistency": format_consistency(completion.text, "label"),
        }

    indices = range(len(forest.trees))
    trace = list(executor.map(ask, indices)) if executor else [ask(i) for i in indices]
    per_tree = [(t["tree"], MentalStateLabel(t["label"]) if t["label"] is not None else None) for t in trace]
    votes = [(i, lab) for i, lab in per_tree if lab is not None]
    if not votes:
        raise PredictionError(f"record {record.record_id}: every tree abstained")
    weights = [sum(forest.importance.values[tid] for tid in forest.trees[i].preorder()) for i, _ in votes]
    label = aggregate([int(lab) for _, lab in votes], mode, weights)
    return Prediction(label=MentalStateLabel(label), per_tree=per_tree, mode=mode, trace=trace)
