"""Comparison prompting strategies: zero-shot IO, CoT, self-consistency CoT and a small ToT."""

from __future__ import annotations

import re
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .errors import PredictionError
from .forest import majority_vote
from .llm import GENERATION_TEMPERATURE, LABEL_TEMPERATURE, LLMBackend, PromptRequest
from .prompts import format_consistency, format_pairs, marker_content, parse_marked_ordinal, parse_ordinal, template
from .survey import MentalStateLabel, SurveyRecord, effective_pairs

STRATEGIES = ("io", "cot", "sc_cot", "tot")


@dataclass
class StrategyConfig:
    strategy: str = "cot"
    n_chains: int = 5
    breadth: int = 3
    depth: int = 2
    generation_temperature: float = GENERATION_TEMPERATURE
    label_temperature: float = LABEL_TEMPERATURE

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown baseline {self.strategy!r}")
        if self.n_chains < 1 or self.breadth < 1 or self.depth < 1:
            raise ValueError("n_chains, breadth and depth must be >= 1")


@dataclass
class Outcome:
    """Label plus every backend exchange that produced it."""

    label: MentalStateLabel
    calls: list[dict] = field(default_factory=list)

    @property
    def consistency(self) -> float:
        if not self.calls:
            return 1.0
        return sum(c["consistency"] for c in self.calls) / len(self.calls)


def _call(llm: LLMBackend, req: PromptRequest, template_name: str, calls: list[dict] | None) -> str:
    completion = llm.complete(req)
    if calls is not None:
        calls.append({
            "template": template_name,
            "prompt": req.user,
            "temperature": req.temperature,
            "completion": completion.text,
            "latency": completion.latency,
            "consistency": format_consistency(completion.text, template_name),
        })
    return completion.text


def io_predict(record: SurveyRecord, llm: LLMBackend, config: StrategyConfig | None = None) -> Outcome:
    config = config or StrategyConfig("io")
    calls: list[dict] = []
    req = template("io").request(temperature=config.label_temperature, pairs=format_pairs(effective_pairs(record)))
    text = _call(llm, req, "io", calls)
    label = parse_ordinal(text)
    if label is None:
        raise PredictionError(f"record {record.record_id}: no label in IO reply {text[:80]!r}")
    return Outcome(label, calls)


def _cot_request(record: SurveyRecord, temperature: float, context: str = "", seed_hint: int | None = None):
    return template("cot").request(
        temperature=temperature,
        seed_hint=seed_hint,
        pairs=format_pairs(effective_pairs(record)),
        context=context,
    )


def cot_predict(record: SurveyRecord, llm: LLMBackend, config: StrategyConfig | None = None) -> Outcome:
    config = config or StrategyConfig("cot")
    calls: list[dict] = []
    text = _call(llm, _cot_request(record, config.label_temperature), "cot", calls)
    label = parse_marked_ordinal(text, "FINAL")
    if label is None:
        raise PredictionError(f"record {record.record_id}: CoT reply has no FINAL line")
    return Outcome(label, calls)


def sc_cot_predict(
    record: SurveyRecord,
    llm: LLMBackend,
    n_chains: int | None = None,
    rng: np.random.Generator | int | None = None,
    config: StrategyConfig | None = None,
    executor: Executor | None = None,
) -> Outcome:
    """Majority vote over independently sampled CoT chains.

    A single chain has nothing to vote against, so it is decoded exactly like
    plain CoT.
    """
    config = config or StrategyConfig("sc_cot")
    n = n_chains or config.n_chains
    rng = np.random.default_rng(rng)
    temperature = config.label_temperature if n == 1 else config.generation_temperature
    hints = [None] * n if n == 1 else [int(h) for h in rng.integers(0, 2**31 - 1, size=n)]

    def chain(i: int):
        calls: list[dict] = []
        text = _call(llm, _cot_request(record, temperature, seed_hint=hints[i]), "cot", calls)
        return parse_marked_ordinal(text, "FINAL"), calls

    results = list(executor.map(chain, range(n))) if executor else [chain(i) for i in range(n)]
    calls = [c for _, cs in results for c in cs]
    votes = [int(lab) for lab, _ in results if lab is not None]
    if not votes:
        raise PredictionError(f"record {record.record_id}: no chain produced a FINAL label")
    return Outcome(MentalStateLabel(majority_vote(votes)), calls)


_SCORE = re.compile(r"\d+(?:\.\d+)?")


def _parse_score(text: str) -> float:
    content = marker_content(text, "SCORE")
    m = _SCORE.search(content if content is not None else text)
    return min(10.0, max(0.0, float(m.group()))) if m else 0.0


def _path_text(path: list[str]) -> str:
    return "\n".join(f"- {step}" for step in path) if path else "(none yet)"


def tot_predict(
    record: SurveyRecord,
    llm: LLMBackend,
    breadth: int | None = None,
    depth: int | None = None,
    rng: np.random.Generator | int | None = None,
    config: StrategyConfig | None = None,
) -> Outcome:
    """Breadth-limited best-first search over LLM-proposed steps.

    Each level samples ``breadth`` next steps, rates each with a value prompt
    (1-10) and keeps the best; the final label uses the CoT prompt with the
    chosen path as context.
    """
    config = config or StrategyConfig("tot")
    breadth = breadth or config.breadth
    depth = depth or config.depth
    rng = np.random.default_rng(rng)
    pairs = format_pairs(effective_pairs(record))
    calls: list[dict] = []
    path: list[str] = []
    for _ in range(depth):
        candidates = []
        for _ in range(breadth):
            req = template("tot_thought").request(
                temperature=config.generation_temperature,
                seed_hint=int(rng.integers(0, 2**31 - 1)),
                pairs=pairs,
                path=_path_text(path),
            )
            raw = _call(llm, req, "tot_thought", calls)
            step = marker_content(raw, "THOUGHT") or raw.strip().splitlines()[0]
            candidates.append(step)
        scores = []
        for step in candidates:
            req = template("tot_value").request(
                temperature=config.label_temperature, pairs=pairs, path=_path_text(path), thought=step
            )
            scores.append(_parse_score(_call(llm, req, "tot_value", calls)))
        path.append(candidates[int(np.argmax(scores))])
    context = "Reasoning so far:\n" + _path_text(path) + "\n"
    text = _call(llm, _cot_request(record, config.label_temperature, context=context), "cot", calls)
    label = parse_marked_ordinal(text, "FINAL")
    if label is None:
        raise PredictionError(f"record {record.record_id}: ToT final reply has no FINAL line")
    return Outcome(label, calls)
