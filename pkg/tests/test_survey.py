import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfot.errors import EmptyInputError, ParseError, ValidationError
from rfot.survey import (
    Dataset,
    MentalStateLabel,
    QAPair,
    SurveyRecord,
    dataset_stats,
    effective_pairs,
    load_dataset,
    save_dataset,
)

from conftest import make_record


def _write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def _rows(record_id="a", label="happy", answers=("x", "y", "z")):
    return [
        {"record_id": record_id, "turn_index": i, "category": "c", "question": f"q{i}?",
         "answer": a, "label_name": label}
        for i, a in enumerate(answers)
    ]


def test_label_bijection():
    assert [lab.label_name for lab in MentalStateLabel] == [
        "very unhappy", "unhappy", "neutral", "happy", "very happy"
    ]
    for lab in MentalStateLabel:
        assert MentalStateLabel.from_name(lab.label_name) is lab
        assert MentalStateLabel.from_ordinal(lab.ordinal) is lab
    with pytest.raises(ValidationError):
        MentalStateLabel.from_ordinal(6)


def test_load_single_record(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, _rows())
    ds = load_dataset(path, "jsonl")
    assert len(ds) == 1
    assert ds.records[0].label.ordinal == 4
    assert len(effective_pairs(ds.records[0])) == 3


def test_load_all_empty_answers_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, _rows(answers=("", " ", "")))
    with pytest.raises(ValidationError):
        load_dataset(path)


def test_empty_answer_becomes_absent(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, _rows(answers=("x", "", "z")))
    rec = load_dataset(path).records[0]
    assert rec.pairs[1].answer is None
    assert [p.turn_index for p in effective_pairs(rec)] == [0, 2]


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    rows = _rows()
    path.write_text(json.dumps(rows[0]) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_dataset(path)
    assert err.value.line == 2
    assert "line 2" in str(err.value)


def test_missing_field_is_parse_error(tmp_path):
    path = tmp_path / "d.jsonl"
    row = _rows()[0]
    del row["question"]
    _write_jsonl(path, [row])
    with pytest.raises(ParseError, match="line 1"):
        load_dataset(path)


def test_unknown_label_rejected(tmp_path):
    path = tmp_path / "d.jsonl"
    _write_jsonl(path, _rows(label="ecstatic"))
    with pytest.raises(ValidationError, match="ecstatic"):
        load_dataset(path)


def test_csv_matches_jsonl(tmp_path):
    rec = make_record(answers=[("economics", "fine"), ("health", None), ("work", "busy, tiring")])
    ds = Dataset("x", (rec,))
    save_dataset(ds, tmp_path / "d.csv")
    save_dataset(ds, tmp_path / "d.jsonl")
    assert load_dataset(tmp_path / "d.csv").records == load_dataset(tmp_path / "d.jsonl").records == ds.records


def test_csv_bad_turn_index(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(
        "record_id,turn_index,category,question,answer,label_name\n"
        "a,0,c,q?,yes,happy\n"
        "a,one,c,q?,yes,happy\n",
        encoding="utf-8",
    )
    with pytest.raises(ParseError, match="line 3"):
        load_dataset(path)


def test_ess_shaped_turns(tmp_path):
    rows = []
    for r in range(3):
        for t in range(102):
            rows.append({"record_id": f"e{r}", "turn_index": t, "category": f"cat{t % 6}",
                         "question": f"q{t}?", "answer": "" if t % 7 == 0 else "yes",
                         "label_name": "neutral"})
    path = tmp_path / "ess.jsonl"
    _write_jsonl(path, rows)
    ds = load_dataset(path)
    assert ds.turns_per_record == 102


def test_stats_cgss_shape():
    counts = {MentalStateLabel.VERY_UNHAPPY: 77, MentalStateLabel.UNHAPPY: 315, MentalStateLabel.NEUTRAL: 630,
              MentalStateLabel.HAPPY: 1743, MentalStateLabel.VERY_HAPPY: 422}
    pairs = tuple(QAPair("c", "q?", "a" if t == 0 else None, t) for t in range(124))
    records = [SurveyRecord(f"{lab.ordinal}-{i}", pairs, lab) for lab, n in counts.items() for i in range(n)]
    stats = dataset_stats(Dataset("CGSS", records))
    assert stats.counts == counts
    assert stats.turns_per_record == 124
    assert stats.total == 3187


def test_stats_single_neutral():
    stats = dataset_stats(Dataset("x", (make_record(label=MentalStateLabel.NEUTRAL),)))
    assert stats.counts[MentalStateLabel.NEUTRAL] == 1
    assert sum(stats.counts.values()) == 1


def test_stats_empty():
    with pytest.raises(EmptyInputError):
        dataset_stats(Dataset("x", ()))


labels = st.sampled_from(list(MentalStateLabel))


@settings(max_examples=50, deadline=None)
@given(st.lists(labels, min_size=1, max_size=20), st.lists(labels, min_size=1, max_size=20))
def test_stats_additive_under_concatenation(a, b):
    da = Dataset("a", [make_record(f"a{i}", lab) for i, lab in enumerate(a)])
    db = Dataset("b", [make_record(f"b{i}", lab) for i, lab in enumerate(b)])
    combined = dataset_stats(da + db)
    for lab in MentalStateLabel:
        # direct counting oracle
        expected = sum(1 for x in a + b if x is lab)
        assert combined.counts[lab] == expected
        assert combined.counts[lab] == dataset_stats(da).counts[lab] + dataset_stats(db).counts[lab]
    assert combined.total == len(a) + len(b)


def test_effective_pairs_subset():
    rec = make_record(answers=[("a", "x"), ("b", None), ("a", "y"), ("c", None), ("c", None), ("d", "z")])
    assert [p.turn_index for p in effective_pairs(rec)] == [0, 2, 5]
    full = make_record()
    assert effective_pairs(full) == list(full.pairs)


def test_skip_patterns_change_effective_length():
    married = make_record(answers=[("rel", "married"), ("rel", "happy marriage"), ("rel", "fine")])
    single = make_record(answers=[("rel", "single"), ("rel", None), ("rel", "fine")])
    assert len(effective_pairs(married)) == 3
    assert len(effective_pairs(single)) == 2


answer = st.one_of(st.none(), st.text(min_size=1, max_size=8).filter(lambda s: s.strip()))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["econ", "health", "work"]), answer), min_size=1, max_size=12))
def test_effective_pairs_is_answered_subsequence(answers):
    if all(a is None for _, a in answers):
        answers = answers + [("econ", "x")]
    rec = make_record(answers=answers)
    eff = effective_pairs(rec)
    assert all(p.answered for p in eff)
    it = iter(rec.pairs)
    assert all(any(p == q for q in it) for p in eff)  # subsequence


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["econ", "health"]), answer), min_size=1, max_size=8), labels)
def test_save_load_roundtrip(tmp_path_factory, answers, label):
    if all(a is None for _, a in answers):
        answers = answers + [("econ", "x")]
    # stored answers are single stripped lines
    answers = [(c, None if a is None else " ".join(a.split()) or "x") for c, a in answers]
    rec = make_record("rt", label, answers)
    path = tmp_path_factory.mktemp("rt") / "d.jsonl"
    save_dataset(Dataset("d", (rec,)), path)
    assert load_dataset(path).records == (rec,)
