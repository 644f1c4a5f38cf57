"""Offline stand-in for an LLM plus the synthetic fixture it was recorded against.

``SimulatedLLM`` reads the prompt templates of this package and answers them
from a small valence lexicon, with hash-keyed noise so strategies differ the way
real models do. It exists to produce the bundled cassette and to drive tests
that need a backend which reacts to prompt content; it is not a model of any
real LLM.
"""

from __future__ import annotations

import hashlib
import re
from pathlib import Path

import numpy as np

from .llm import Completion, PromptRequest
from .survey import Dataset, MentalStateLabel, QAPair, SurveyRecord

# word -> valence in [-2, 2]
LEXICON = {
    "comfortable": 2, "secure": 2, "excellent": 2, "thriving": 2, "fulfilling": 2, "loving": 2,
    "appreciated": 2, "never": 1.5, "sufficient": 1, "good": 1, "rarely": 1, "supportive": 1,
    "satisfied": 1, "valued": 1, "married": 0.5, "steady": 1, "energetic": 1.5,
    "average": 0, "fair": 0, "sometimes": 0, "single": 0, "okay": 0,
    "tight": -1, "poor": -1, "often": -1, "strained": -1, "tired": -1, "divorced": -1, "stressful": -1,
    "insufficient": -2, "worrying": -1.5, "constantly": -2, "overwhelming": -2, "painful": -2,
    "lonely": -2, "hostile": -2, "exhausted": -2, "widowed": -1, "miserable": -2, "ignored": -1.5,
}
_WORD = re.compile(r"[a-z]+")
_PAREN_ORDINAL = re.compile(r"\(([1-5])\)")


def _h(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).hexdigest()
    return int(digest[:12], 16)


def valence_words(text: str) -> list[tuple[str, float]]:
    return [(w, LEXICON[w]) for w in _WORD.findall(text.lower()) if w in LEXICON]


def valence(text: str) -> float | None:
    hits = valence_words(text)
    if not hits:
        return None
    return sum(v for _, v in hits) / len(hits)


def to_ordinal(score: float) -> int:
    return int(min(5, max(1, np.floor(score + 0.5))))


def _noisy(ordinal: int, key: int, probability: float) -> int:
    if (key % 1000) / 1000 >= probability:
        return ordinal
    step = 1 if (key // 1000) % 2 else -1
    shifted = ordinal + step
    if not 1 <= shifted <= 5:
        shifted = ordinal - step
    return shifted


def _answers(block: str) -> list[str]:
    return [line[3:].strip() for line in block.splitlines() if line.startswith("A: ")]


def _section(text: str, start: str, end: str | None = None) -> str:
    i = text.find(start)
    if i < 0:
        return ""
    i += len(start)
    j = text.find(end, i) if end else -1
    return text[i:j if j >= 0 else len(text)]


def _describe(v: float | None) -> str:
    if v is None:
        return "unclear"
    if v >= 1.25:
        return "very positive"
    if v >= 0.4:
        return "positive"
    if v > -0.4:
        return "mixed"
    if v > -1.25:
        return "negative"
    return "very negative"


class SimulatedLLM:
    backend_id = "simulated"

    def __init__(self, latency: float = 0.0):
        self.latency = latency
        self.calls = 0

    def complete(self, req: PromptRequest) -> Completion:
        self.calls += 1
        return Completion(text=self.respond(req), latency=self.latency, backend_id=self.backend_id)

    def respond(self, req: PromptRequest) -> str:
        user = req.user
        key = _h(req.system, user, req.temperature, req.seed_hint)
        retry = "Reminder:" in user
        if "Question-answer pairs from this category:" in user:
            return self._aspect(user, key, retry)
        if "List up to" in user and "Aspect analysis:" in user:
            return self._keywords(user)
        if "Emotional keyword:" in user:
            return self._response(user)
        if "LABEL: <level>" in user:
            return self._label(user, key)
        if "Answer with the number only." in user:
            return self._io(user, key)
        if "THOUGHT: <step>" in user:
            return self._tot_thought(user, key)
        if "SCORE: <rating>" in user:
            return self._tot_value(user, key)
        if "FINAL: <level>" in user:
            return self._cot(user, req)
        return "I am not sure what you are asking."

    def _aspect(self, user: str, key: int, retry: bool) -> str:
        category = _section(user, "Category: ", "\n").strip()
        answers = _answers(user)
        text = f"{category} answers ({'; '.join(answers)}) describe a {_describe(valence(' '.join(answers)))} situation"
        if not retry and key % 6 == 0:
            return f"Sure. The {text}."
        return f"ASPECT: {text}"

    def _keywords(self, user: str) -> str:
        aspect = _section(user, "Aspect analysis: ", "\n")
        words: dict[str, float] = {}
        for w, v in valence_words(aspect):
            words.setdefault(w, v)
        ranked = sorted(words, key=lambda w: (-abs(words[w]), w))[:2]
        return "KEYWORDS: " + (", ".join(ranked) if ranked else "indifferent")

    def _response(self, user: str) -> str:
        category = _section(user, "Category: ", "\n").strip()
        aspect = _section(user, "Aspect analysis: ", "\n")
        keyword = _section(user, "Emotional keyword: ", "\n").strip()
        v_aspect = valence(aspect) or 0.0
        v_key = LEXICON.get(keyword.lower(), 0.0)
        n = to_ordinal(3 + 0.6 * v_aspect + 0.4 * v_key)
        name = MentalStateLabel(n).label_name
        return f"RESPONSE: {category} evidence ('{keyword}') suggests the respondent is {name} ({n})"

    def _label(self, user: str, key: int) -> str:
        steps = _section(user, "Reasoning steps:", "Based on the reasoning")
        votes = [float(m) for m in _PAREN_ORDINAL.findall(steps)]
        aspect_lines = [line for line in steps.splitlines() if "aspect analysis:" in line]
        for line in aspect_lines:
            v = valence(line.split("describe a")[0])
            if v is not None:
                votes.append(3 + v)
        keyword_lines = [line for line in steps.splitlines() if "emotional keyword:" in line]
        for line in keyword_lines:
            v = valence(line)
            if v is not None:
                votes.append(3 + 0.5 * v)
        if not votes:
            return "LABEL: 3"
        n = _noisy(to_ordinal(sum(votes) / len(votes)), key, 0.15)
        return f"LABEL: {n}"

    def _io(self, user: str, key: int) -> str:
        v = valence(" ".join(_answers(user))) or 0.0
        n = _noisy(to_ordinal(3 + v), key, 0.5)
        return f"Label: {n}" if key % 4 == 0 else str(n)

    def _cot(self, user: str, req: PromptRequest) -> str:
        pairs = _section(user, "Questionnaire answers:\n", "\nThink step by step")
        context = _section(pairs, "Reasoning so far:\n")
        pairs = pairs.split("Reasoning so far:")[0]
        answers = _answers(pairs)
        v = valence(" ".join(answers)) or 0.0
        base = to_ordinal(3 + v)
        if req.temperature > 0:
            n = _noisy(base, _h("cot", pairs, req.seed_hint), 0.35)
        else:
            n = _noisy(base, _h("cot", pairs), 0.35)
            n_steps = context.count("\n- ") + context.startswith("- ")
            if n_steps >= 2 and _h("tot", context) % 2 == 0:
                n = base
        steps = [f"Step {i}: the answer '{a}' reads as {_describe(valence(a))}." for i, a in enumerate(answers[:3], 1)]
        if _h("fmt", pairs, req.seed_hint) % 20 == 0:
            return "\n".join(steps + [f"So the overall level is {n}."])
        return "\n".join(steps + [f"FINAL: {n}"])

    def _tot_thought(self, user: str, key: int) -> str:
        pairs = _section(user, "Questionnaire answers:\n", "\nReasoning so far:")
        questions = [line[3:] for line in pairs.splitlines() if line.startswith("Q: ")]
        answers = _answers(pairs)
        i = key % len(answers)
        return f"THOUGHT: '{questions[i]}' was answered '{answers[i]}', which reads as {_describe(valence(answers[i]))}."

    def _tot_value(self, user: str, key: int) -> str:
        thought = _section(user, "Candidate next step: ", "\n")
        v = valence(thought.split("which reads as")[0]) or 0.0
        return f"SCORE: {int(min(10, max(1, 2 + round(3 * abs(v)) + key % 3)))}"


# --- synthetic questionnaire fixture -----------------------------------------

QUESTIONS = {
    "economics": [
        ("How would you describe your household income?",
         ["insufficient and worrying", "tight", "average", "sufficient", "comfortable and secure"]),
        ("How often do you worry about debt?",
         ["constantly, debt is overwhelming", "often", "sometimes", "rarely", "never"]),
        ("What is your main source of income?", None),
    ],
    "health": [
        ("How is your general health?", ["very poor and painful", "poor", "fair", "good", "excellent"]),
        ("How often do you feel tired?", ["exhausted constantly", "tired often", "sometimes tired",
                                          "rarely tired", "energetic, never tired"]),
    ],
    "relationships": [
        ("What is your marital status?", None),
        ("How satisfied are you with your marriage?",
         ["miserable and hostile", "strained", "okay", "satisfied", "loving and fulfilling"]),
        ("How often do you feel lonely?", ["lonely constantly", "lonely often", "sometimes lonely",
                                           "rarely lonely", "never lonely, friends are supportive"]),
    ],
    "work": [
        ("How satisfied are you with your job?",
         ["miserable", "stressful", "average", "satisfied", "fulfilling and thriving"]),
        ("Do you feel valued at work?", ["ignored", "rarely valued", "sometimes", "valued", "appreciated"]),
    ],
}


def make_synthetic_dataset(n_records: int = 10, seed: int = 2024) -> Dataset:
    """Balanced labels; answers drift around the label with skip logic on marriage and work."""
    rng = np.random.default_rng(seed)
    records = []
    for r in range(n_records):
        label = MentalStateLabel(r % 5 + 1)
        target = int(label) - 1  # index into the answer scales

        def pick() -> int:
            return int(np.clip(target + rng.choice([-1, 0, 0, 1]), 0, 4))

        employed = bool(rng.random() < 0.6)
        married = bool(rng.random() < 0.6)
        pairs = []
        turn = 0
        for category, questions in QUESTIONS.items():
            for question, scale in questions:
                if question.startswith("What is your main source"):
                    answer = "salary from my job" if employed else rng.choice(["pension", "family support"])
                elif question.startswith("What is your marital"):
                    answer = "married" if married else str(rng.choice(["single", "divorced", "widowed"]))
                elif question.startswith("How satisfied are you with your marriage") and not married:
                    answer = None
                elif category == "work" and not employed:
                    answer = None
                else:
                    answer = scale[pick()]
                pairs.append(QAPair(category, question, str(answer) if answer is not None else None, turn))
                turn += 1
        records.append(SurveyRecord(f"r{r + 1:02d}", tuple(pairs), label))
    return Dataset("synthetic", tuple(records))


def write_fixture(out_dir: str | Path, seed: int = 0) -> tuple[Path, Path]:
    """Regenerate the bundled dataset and record its cassette with SimulatedLLM."""
    from .baselines import sc_cot_predict, tot_predict
    from .llm import Cassette, RecordingBackend
    from .pipeline import record_seed
    from .runner import RunConfig, run
    from .survey import save_dataset

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    data_path = out_dir / "synthetic_happiness.jsonl"
    cassette_path = out_dir / "synthetic_happiness.cassette.json"
    ds = make_synthetic_dataset()
    save_dataset(ds, data_path)

    cassette = Cassette()
    sim = SimulatedLLM()
    backend = RecordingBackend(sim, cassette, cassette_path)
    config = RunConfig(dataset=str(data_path), strategies=["io", "cot", "sc_cot", "tot", "rfot"],
                       samples=len(ds), seed=seed, cassette=str(cassette_path),
                       out=str(out_dir / "_record_run"))
    run(config, backend=backend)
    # degenerate baselines replayed from a fresh cursor, recording only what is new
    cassette.rewind()
    for record in ds.records:
        sc_cot_predict(record, backend, n_chains=1)
    cassette.rewind()
    for record in ds.records:
        tot_predict(record, backend, breadth=1, depth=1,
                    rng=np.random.default_rng([record_seed(seed, record.record_id), 3]))
    backend.save()
    return data_path, cassette_path
