import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from rfot.errors import EmptyInputError, PredictionError, ShapeError, SizeError
from rfot.forest import (
    ForestConfig,
    LabelContext,
    ThoughtTree,
    TreeNode,
    aggregate,
    bootstrap_pairs,
    build_forest,
    build_tree,
    draw_thought_subset,
    gain_ratio,
    linearize_tree,
    majority_vote,
    ordinal_mean,
    predict,
    root_probabilities,
    selection_probabilities,
    tree_rng,
    weighted_sample_without_replacement,
)
from rfot.icot import CandidateThoughts, Thought, ThoughtLevel
from rfot.llm import ScriptedBackend
from rfot.shapley import ImportanceVector
from rfot.survey import MentalStateLabel, QAPair, SurveyRecord

from conftest import make_record

CATS = ["economics", "health", "relationships", "work"]


def make_thoughts(n):
    """n thoughts spread over categories as aspect/keyword/response chains."""
    out = []
    for i in range(n):
        cat = CATS[i % len(CATS)]
        level = ThoughtLevel(1 + (i // len(CATS)) % 3)
        parent = None if level == ThoughtLevel.ASPECT else f"{cat}/{level - 1}"
        out.append(Thought(f"{cat}/{int(level)}", level, cat, f"text {i}", parent))
    return out


def test_selection_probabilities_exact():
    d = selection_probabilities(ImportanceVector({"a": 3.0, "b": 1.0}))
    assert d.probs == (0.75, 0.25)
    d = selection_probabilities(ImportanceVector({"a": 2.0, "b": 2.0, "c": 4.0}))
    assert d.probs == (0.25, 0.25, 0.5)


def test_selection_all_nonpositive_is_uniform():
    d = selection_probabilities(ImportanceVector({"a": -1.0, "b": 0.0, "c": -3.0}))
    assert d.probs == pytest.approx((1 / 3,) * 3)


def test_selection_clamps_negative_to_epsilon():
    d = selection_probabilities(ImportanceVector({"a": 1.0, "b": -2.0}), epsilon=1e-6)
    assert d.probs[1] == pytest.approx(1e-6 / (1 + 1e-6))
    assert selection_probabilities(ImportanceVector({"a": 1.0, "b": -2.0}), epsilon=None).probs == (1.0, 0.0)


def test_selection_empty():
    with pytest.raises(EmptyInputError):
        selection_probabilities(ImportanceVector({}))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=12))
def test_selection_is_distribution(values):
    d = selection_probabilities(ImportanceVector({f"t{i}": v for i, v in enumerate(values)}))
    assert all(p >= 0 for p in d.probs)
    assert math.fsum(d.probs) == pytest.approx(1.0, abs=1e-9)


def test_root_probabilities_restricted():
    iv = ImportanceVector({"a": 3.0, "b": 1.0, "c": 4.0})
    assert root_probabilities(iv, ["a", "b"]).as_dict() == {"a": 0.75, "b": 0.25}


def test_first_draw_chi_square():
    dist = selection_probabilities(ImportanceVector({"a": 1.0, "b": 2.0, "c": 3.0, "d": 4.0}))
    rng = np.random.default_rng(123)
    firsts = [weighted_sample_without_replacement(dist, 2, rng)[0] for _ in range(10_000)]
    observed = [firsts.count(i) for i in dist.ids]
    expected = [p * 10_000 for p in dist.probs]
    assert chisquare(observed, expected).pvalue > 0.05


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=10), st.data())
def test_sample_without_replacement_distinct(values, data):
    dist = selection_probabilities(ImportanceVector({f"t{i}": v for i, v in enumerate(values)}), epsilon=None)
    count = data.draw(st.integers(0, len(values)))
    out = weighted_sample_without_replacement(dist, count, np.random.default_rng(data.draw(st.integers(0, 99))))
    assert len(out) == len(set(out)) == count
    with pytest.raises(SizeError):
        weighted_sample_without_replacement(dist, len(values) + 1, np.random.default_rng(0))


def test_bootstrap_distinct_fraction():
    n = 100
    record = SurveyRecord("b", tuple(QAPair("c", f"q{i}?", "a", i) for i in range(n)), MentalStateLabel.NEUTRAL)
    rng = np.random.default_rng(0)
    fracs = [len({p.turn_index for p in bootstrap_pairs(record, rng)}) / n for _ in range(10_000)]
    assert abs(np.mean(fracs) - (1 - (1 - 1 / n) ** n)) <= 0.01


def test_bootstrap_only_answered_pairs():
    record = make_record(answers=[("a", "x"), ("b", None), ("c", "y")])
    sample = bootstrap_pairs(record, np.random.default_rng(1))
    assert len(sample) == 2 and all(p.answered for p in sample)


def test_gain_ratio_oracles():
    assert gain_ratio([1, 1, 0, 0], [5, 5, 1, 1]) == pytest.approx(1.0, abs=1e-12)
    assert gain_ratio([1, 0, 1, 0], [5, 5, 1, 1]) == pytest.approx(0.0, abs=1e-12)
    assert gain_ratio([1, 1, 1, 1], [5, 5, 1, 1]) == 0.0


def test_gain_ratio_hand_computed():
    # feature splits 3/1; labels [a,a,b | b]: IG = 1 - 3/4*H(2/3,1/3); SI = H(3/4,1/4)
    h = lambda *p: -sum(x * math.log2(x) for x in p)
    expected = (1 - 0.75 * h(2 / 3, 1 / 3)) / h(0.75, 0.25)
    assert gain_ratio([1, 1, 1, 0], ["a", "a", "b", "b"]) == pytest.approx(expected, abs=1e-12)


def test_gain_ratio_shape_errors():
    with pytest.raises(ShapeError):
        gain_ratio([1, 0], [1])
    with pytest.raises(EmptyInputError):
        gain_ratio([], [])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(1, 5)), min_size=1, max_size=30))
def test_gain_ratio_in_unit_interval(rows):
    feature, labels = zip(*rows)
    assert -1e-12 <= gain_ratio(feature, labels) <= 1 + 1e-12


def _fixture(n, seed):
    thoughts = make_thoughts(n)
    by_id = {t.id: t for t in thoughts}
    rng = np.random.default_rng(seed)
    iv = ImportanceVector({t.id: float(v) for t, v in zip(thoughts, rng.uniform(-0.2, 1.0, size=n))})
    record = make_record(answers=[(c, "yes") for c in CATS[:3]])
    return thoughts, by_id, iv, record


@pytest.mark.parametrize("n", [1, 3, 5, 8])
@pytest.mark.parametrize("seed", range(5))
def test_tree_structure(n, seed):
    thoughts, by_id, iv, record = _fixture(n, seed)
    rng = tree_rng(seed, 0)
    bootstrap = bootstrap_pairs(record, rng)
    selected = draw_thought_subset(iv, n, rng)
    state = rng.bit_generator.state
    tree = build_tree(selected, bootstrap, by_id, iv, rng)

    order = tree.preorder()
    assert sorted(order) == sorted(selected)
    assert len(order) == len(set(order)) == n

    replay = np.random.default_rng()
    replay.bit_generator.state = state
    assert tree.root.thought_id == weighted_sample_without_replacement(root_probabilities(iv, selected), 1, replay)[0]

    text = linearize_tree(tree, by_id)
    steps = [line for line in text.splitlines() if line[:1].isdigit() and ". [" in line]
    assert len(steps) == n


def test_linearization_is_preorder():
    a = Thought("x/A", ThoughtLevel.ASPECT, "x", "alpha")
    b = Thought("x/K0", ThoughtLevel.KEYWORD, "x", "beta", "x/A")
    c = Thought("x/R", ThoughtLevel.RESPONSE, "x", "gamma", "x/K0")
    tree = ThoughtTree(TreeNode("x/A", TreeNode("x/K0"), TreeNode("x/R")))
    text = linearize_tree(tree, {t.id: t for t in (a, b, c)})
    assert text.index("1. ") < text.index("alpha") < text.index("2. ") < text.index("beta") < text.index("3. ")
    assert text.index("gamma") > text.index("beta")


def test_build_tree_rejects_bad_input():
    thoughts, by_id, iv, record = _fixture(3, 0)
    with pytest.raises(EmptyInputError):
        build_tree([], [], by_id, iv, np.random.default_rng(0))
    with pytest.raises(ValueError):
        build_tree([thoughts[0].id] * 2, [], by_id, iv, np.random.default_rng(0))


def test_split_prefers_gain_ratio():
    thoughts, by_id, iv, record = _fixture(4, 1)
    # health answered exactly in the happy training records: perfect separator
    train = [
        make_record("p", MentalStateLabel.HAPPY, [("economics", "y"), ("health", "y")]),
        make_record("q", MentalStateLabel.UNHAPPY, [("economics", "y")]),
    ]
    tree = build_tree([t.id for t in thoughts], bootstrap_pairs(record, np.random.default_rng(0)), by_id, iv,
                      np.random.default_rng(0), LabelContext(train))
    assert tree.split_scores["health/1"] == pytest.approx(1.0)
    assert tree.split_scores["economics/1"] == 0.0


def _candidates(n):
    return CandidateThoughts("r1", make_thoughts(n))


def test_forest_deterministic_and_seed_sensitive():
    cands = _candidates(8)
    iv = ImportanceVector({t: 1.0 + i for i, t in enumerate(cands.ids)})
    record = make_record(answers=[(c, "yes") for c in CATS])
    cfg = ForestConfig(n_trees=6, k=4)
    a = build_forest(record, cands, iv, cfg, seed=3)
    b = build_forest(record, cands, iv, cfg, seed=3)
    c = build_forest(record, cands, iv, cfg, seed=4)
    assert a.to_json() == b.to_json()
    assert [t.preorder() for t in a.trees] != [t.preorder() for t in c.trees]
    assert all(len(t) == 4 for t in a.trees)
    assert all(th.importance is not None for th in a.thoughts.values())


def test_forest_k_larger_than_pool():
    cands = _candidates(3)
    iv = ImportanceVector({t: 1.0 for t in cands.ids})
    forest = build_forest(make_record(), cands, iv, ForestConfig(n_trees=2, k=8))
    assert all(len(t) == 3 for t in forest.trees)


def test_aggregation_oracles():
    assert majority_vote([4, 4, 2]) == 4
    assert ordinal_mean([4, 4, 2]) == 3
    for mode in ("majority_vote", "ordinal_mean"):
        for lab in range(1, 6):
            assert aggregate([lab], mode) == lab


def test_majority_tie_breaks():
    assert majority_vote([2, 4], [0.1, 0.9]) == 4
    assert majority_vote([2, 4]) == 2
    assert ordinal_mean([2, 3]) == 3  # 2.5 rounds up
    with pytest.raises(EmptyInputError):
        majority_vote([])
    with pytest.raises(ValueError):
        aggregate([1], "median")


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=15))
def test_aggregate_in_range(labels):
    assert min(labels) <= ordinal_mean(labels) <= max(labels)
    assert majority_vote(labels) in labels


def test_predict_votes_and_abstains():
    cands = _candidates(4)
    iv = ImportanceVector({t: 1.0 for t in cands.ids})
    forest = build_forest(make_record(), cands, iv, ForestConfig(n_trees=3, k=2), seed=0)
    replies = iter(["LABEL: 4", "no idea", "LABEL: 2"])
    llm = ScriptedBackend(lambda r: next(replies))
    pred = predict(forest, make_record(), llm)
    assert llm.call_count == 3
    assert [lab for _, lab in pred.per_tree] == [4, None, 2]
    assert pred.label in (2, 4)
    with pytest.raises(PredictionError):
        predict(forest, make_record(), ScriptedBackend(lambda r: "no idea"))


def test_predict_single_tree_matches_its_label():
    cands = _candidates(4)
    iv = ImportanceVector({t: 1.0 for t in cands.ids})
    forest = build_forest(make_record(), cands, iv, ForestConfig(n_trees=1, k=3), seed=0)
    for mode in ("majority_vote", "ordinal_mean"):
        assert predict(forest, make_record(), ScriptedBackend(lambda r: "LABEL: 5"), mode).label == 5
