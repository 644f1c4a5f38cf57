import pytest

from rfot.survey import MentalStateLabel, QAPair, SurveyRecord


def make_record(record_id="r1", label=MentalStateLabel.HAPPY, answers=None):
    """answers: list of (category, answer-or-None)."""
    answers = answers or [
        ("economics", "stable income, satisfied"),
        ("health", "good"),
        ("relationships", "married, loving"),
    ]
    pairs = [QAPair(cat, f"question {i} about {cat}?", ans, i) for i, (cat, ans) in enumerate(answers)]
    return SurveyRecord(record_id, tuple(pairs), label)


@pytest.fixture
def record():
    return make_record()


def scripted_icot(req):
    """Replies for every ICoT level, keyed on the prompt wording."""
    user = req.user
    if "Question-answer pairs from this category:" in user:
        category = user.split("Category: ", 1)[1].split("\n", 1)[0]
        return f"ASPECT: {category} looks fine"
    if "List up to" in user:
        return "KEYWORDS: calm"
    if "Emotional keyword:" in user:
        return "RESPONSE: calm suggests happy (4)"
    if "LABEL: <level>" in user:
        return "LABEL: 4"
    raise AssertionError(f"unexpected prompt: {user[:60]}")
