"""Shapley attribution over thought coalitions, exact and permutation-sampled."""

from __future__ import annotations

import json
import math
import threading
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, SizeError

EXACT_LIMIT = 12


class ValueFunction:
    """Coalition value ``v(S)`` with a thread-safe memo of evaluated subsets."""

    def __init__(self, fn: Callable[[frozenset[str]], float]):
        self._fn = fn
        self._cache: dict[frozenset[str], float] = {}
        self._lock = threading.Lock()
        self.evaluations = 0

    def __call__(self, subset: Iterable[str]) -> float:
        key = frozenset(subset)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = float(self._fn(key))
        if not math.isfinite(value):
            raise ValueError(f"value function returned {value} for {sorted(key)}")
        with self._lock:
            # first writer wins so concurrent duplicates agree
            if key not in self._cache:
                self._cache[key] = value
                self.evaluations += 1
            return self._cache[key]

    @property
    def cache(self) -> dict[frozenset[str], float]:
        return dict(self._cache)


def _as_vf(vf) -> ValueFunction:
    return vf if isinstance(vf, ValueFunction) else ValueFunction(vf)


@dataclass
class ImportanceVector:
    values: dict[str, float]
    method: str = "exact"
    samples: int | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, thought_id: str) -> float:
        return self.values[thought_id]

    @property
    def ids(self) -> list[str]:
        return list(self.values)

    def restrict(self, ids: Iterable[str]) -> "ImportanceVector":
        return ImportanceVector({i: self.values[i] for i in ids}, self.method, self.samples, self.seed)

    def scaled(self, factor: float, offset: float = 0.0) -> "ImportanceVector":
        return ImportanceVector(
            {i: factor * v + offset for i, v in self.values.items()}, self.method, self.samples, self.seed
        )

    def to_json(self) -> str:
        return json.dumps(
            {"values": self.values, "method": self.method, "samples": self.samples, "seed": self.seed},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ImportanceVector":
        raw = json.loads(text)
        return cls(raw["values"], raw["method"], raw.get("samples"), raw.get("seed"))


def _subset_weights(n: int) -> list[float]:
    """Weight |S|!(n-|S|-1)!/n! for every coalition size |S| < n."""
    return [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)]


def exact_shapley(
    vf,
    ids: Sequence[str],
    exact_limit: int = EXACT_LIMIT,
    executor: Executor | None = None,
) -> ImportanceVector:
    ids = list(ids)
    n = len(ids)
    if n > exact_limit:
        raise SizeError(f"{n} players exceed the exact limit {exact_limit}; use mc_shapley")
    if len(set(ids)) != n:
        raise ValueError("duplicate thought ids")
    vf = _as_vf(vf)
    if n == 0:
        return ImportanceVector({}, "exact")

    subsets = [frozenset(ids[i] for i in range(n) if mask >> i & 1) for mask in range(1 << n)]
    if executor is not None:
        values = list(executor.map(vf, subsets))
    else:
        values = [vf(s) for s in subsets]

    weights = _subset_weights(n)
    phi = {}
    for j, player in enumerate(ids):
        bit = 1 << j
        total = 0.0
        for mask in range(1 << n):
            if mask & bit:
                continue
            total += weights[bin(mask).count("1")] * (values[mask | bit] - values[mask])
        phi[player] = total
    return ImportanceVector(phi, "exact")


def mc_shapley(vf, ids: Sequence[str], samples: int, rng: np.random.Generator | int | None = None) -> ImportanceVector:
    """Permutation-sampling estimate; each permutation telescopes to v(J) - v(empty)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ids = list(ids)
    vf = _as_vf(vf)
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    totals = dict.fromkeys(ids, 0.0)
    for _ in range(samples):
        order = rng.permutation(len(ids))
        coalition: list[str] = []
        previous = vf(coalition)
        for idx in order:
            coalition.append(ids[idx])
            current = vf(coalition)
            totals[ids[idx]] += current - previous
            previous = current
    return ImportanceVector({i: totals[i] / samples for i in ids}, "monte_carlo", samples, seed)


def shapley_values(
    vf,
    ids: Sequence[str],
    exact_limit: int = EXACT_LIMIT,
    mc_samples: int = 200,
    rng: np.random.Generator | int | None = None,
    executor: Executor | None = None,
) -> ImportanceVector:
    if len(ids) <= exact_limit:
        return exact_shapley(vf, ids, exact_limit, executor)
    return mc_shapley(vf, ids, mc_samples, rng)


def top_k(iv: ImportanceVector, k: int) -> list[str]:
    """The k highest-scoring ids; ties go to the lexicographically smaller id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not iv.values:
        raise EmptyInputError("empty importance vector")
    ranked = sorted(iv.values.items(), key=lambda kv: (-kv[1], kv[0]))
    return [i for i, _ in ranked[:k]]
