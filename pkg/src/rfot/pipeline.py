"""End-to-end RFoT prediction for one record: candidates, importance, forest, vote."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .baselines import Outcome
from .forest import ForestConfig, LabelContext, Prediction, ThoughtForest, build_forest, parse_label_reply, predict
from .icot import CandidateThoughts, ICoTConfig, Thought, run_icot
from .llm import LABEL_TEMPERATURE, LLMBackend
from .prompts import format_consistency, template
from .shapley import EXACT_LIMIT, ImportanceVector, ValueFunction, shapley_values
from .survey import SurveyRecord

NO_STEPS = "Reasoning steps:\n(none)"


@dataclass
class RFoTConfig:
    icot: ICoTConfig = field(default_factory=ICoTConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    exact_limit: int = EXACT_LIMIT
    mc_samples: int = 32


@dataclass
class RFoTResult(Outcome):
    candidates: CandidateThoughts | None = None
    importance: ImportanceVector | None = None
    forest: ThoughtForest | None = None
    prediction: Prediction | None = None
    value_calls: int = 0


def record_seed(seed: int, record_id: str) -> int:
    """Per-record seed independent of the order records are processed in."""
    ss = np.random.SeedSequence([seed, zlib.crc32(record_id.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def label_value(predicted: int | None, truth: int) -> float:
    """1 for a hit plus a 0.1-scaled closeness bonus; 0 when nothing parsed."""
    if predicted is None:
        return 0.0
    return float(predicted == truth) + 0.1 * (5 - abs(predicted - truth)) / 5


def thought_value_function(
    thoughts: list[Thought], record: SurveyRecord, llm: LLMBackend, calls: list[dict] | None = None
) -> ValueFunction:
    """v(S): label-prompt the backend with only the thoughts in S, score against the truth."""
    order = {t.id: i for i, t in enumerate(thoughts)}
    by_id = {t.id: t for t in thoughts}

    def v(subset: frozenset[str]) -> float:
        ids = sorted(subset, key=order.__getitem__)
        if ids:
            steps = "Reasoning steps:\n" + "\n".join(
                f"{i}. {by_id[t].as_step()}" for i, t in enumerate(ids, start=1)
            )
        else:
            steps = NO_STEPS
        req = template("label").request(temperature=LABEL_TEMPERATURE, steps=steps)
        completion = llm.complete(req)
        label = parse_label_reply(completion.text)
        if calls is not None:
            calls.append({"consistency": format_consistency(completion.text, "label"),
                          "latency": completion.latency})
        return label_value(int(label) if label is not None else None, int(record.label))

    return ValueFunction(v)


def rfot_predict(
    record: SurveyRecord,
    llm: LLMBackend,
    config: RFoTConfig | None = None,
    seed: int = 0,
    context: LabelContext | None = None,
) -> RFoTResult:
    config = config or RFoTConfig()
    rseed = record_seed(seed, record.record_id)
    candidates = run_icot(record, llm, config.icot)
    value_calls: list[dict] = []
    vf = thought_value_function(candidates.thoughts, record, llm, value_calls)
    iv = shapley_values(
        vf, candidates.ids, config.exact_limit, config.mc_samples, np.random.default_rng([rseed, 1])
    )
    forest = build_forest(record, candidates, iv, config.forest, seed=rseed, context=context)
    prediction = predict(forest, record, llm)
    calls = [
        {"template": "icot:" + e.level, "consistency": e.consistency, "latency": 0.0}
        for e in candidates.generation_log
    ]
    calls += value_calls
    calls += [dict(t, template="label") for t in prediction.trace]
    candidates.thoughts = [t.with_importance(iv.values[t.id]) for t in candidates.thoughts]
    return RFoTResult(
        label=prediction.label,
        calls=calls,
        candidates=candidates,
        importance=iv,
        forest=forest,
        prediction=prediction,
        value_calls=len(value_calls),
    )
