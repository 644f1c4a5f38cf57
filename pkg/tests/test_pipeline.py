import json

import pytest

from rfot.forest import ForestConfig
from rfot.icot import ICoTConfig
from rfot.llm import ScriptedBackend
from rfot.pipeline import NO_STEPS, RFoTConfig, label_value, record_seed, rfot_predict, thought_value_function
from rfot.simulate import SimulatedLLM, make_synthetic_dataset
from rfot.survey import MentalStateLabel

from conftest import make_record, scripted_icot


def test_label_value():
    assert label_value(4, 4) == pytest.approx(1.1)
    assert label_value(2, 4) == pytest.approx(0.06)
    assert label_value(None, 4) == 0.0


def test_record_seed_stable_and_distinct():
    assert record_seed(0, "r01") == record_seed(0, "r01")
    assert record_seed(0, "r01") != record_seed(0, "r02")
    assert record_seed(0, "r01") != record_seed(1, "r01")


def test_value_function_prompts():
    llm = ScriptedBackend(lambda r: "LABEL: 4")
    from rfot.icot import run_icot

    cands = run_icot(make_record(), ScriptedBackend(scripted_icot))
    vf = thought_value_function(cands.thoughts, make_record(label=MentalStateLabel.HAPPY), llm)
    assert vf(frozenset()) == pytest.approx(1.1)
    assert NO_STEPS in llm.requests[0].user
    ids = cands.ids
    vf(frozenset([ids[2], ids[0]]))
    user = llm.requests[1].user
    # steps keep candidate order regardless of set iteration order
    assert user.index(cands.by_id[ids[0]].text) < user.index(cands.by_id[ids[2]].text)


def _config(**forest):
    return RFoTConfig(icot=ICoTConfig(), forest=ForestConfig(**forest), exact_limit=6, mc_samples=4)


def test_rfot_end_to_end_scripted():
    record = make_record()
    llm = ScriptedBackend(scripted_icot)
    result = rfot_predict(record, llm, _config(n_trees=3, k=4), seed=1)
    assert result.label == MentalStateLabel.HAPPY
    assert len(result.prediction.per_tree) == 3
    assert result.importance.method == "monte_carlo"  # 9 thoughts > exact_limit 6
    assert all(t.importance is not None for t in result.candidates.thoughts)
    # 3 ICoT calls per category + value calls + one call per tree
    assert llm.call_count == 9 + result.value_calls + 3


def test_rfot_deterministic_and_seed_sensitive():
    ds = make_synthetic_dataset()
    record = ds.records[0]
    config = _config(n_trees=4, k=5)
    a = rfot_predict(record, SimulatedLLM(), config, seed=3)
    b = rfot_predict(record, SimulatedLLM(), config, seed=3)
    c = rfot_predict(record, SimulatedLLM(), config, seed=4)
    assert a.forest.to_json() == b.forest.to_json()
    assert json.dumps(a.calls, sort_keys=True) == json.dumps(b.calls, sort_keys=True)
    assert a.label == b.label
    assert a.forest.to_json() != c.forest.to_json()


def test_different_seeds_give_different_fingerprints():
    record = make_synthetic_dataset().records[3]
    sim = SimulatedLLM()
    runs = {}
    for seed in (0, 1):
        llm = ScriptedBackend(sim.respond)
        rfot_predict(record, llm, _config(n_trees=3, k=4), seed=seed)
        runs[seed] = {r.fingerprint for r in llm.requests}
    assert runs[0] != runs[1]
